#include "kappaface/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "kappaface/io.hpp"
#include "kappaface/rng.hpp"
#include "kappaface/sphere.hpp"

namespace kappaface {

void SyntheticSpec::validate() const {
  if (num_classes < 2) raise(ErrorKind::SpecInvalid, "num_classes must be >= 2");
  if (input_dim < 2) raise(ErrorKind::SpecInvalid, "input_dim must be >= 2");
  if (population.min_n < 2) raise(ErrorKind::SpecInvalid, "min_n must be >= 2");
  if (population.max_n < population.min_n) raise(ErrorKind::SpecInvalid, "max_n must be >= min_n");
  if (!(population.exponent >= 0.0)) raise(ErrorKind::SpecInvalid, "power-law exponent must be >= 0");
  if (!(concentration.kappa_min > 0.0)) raise(ErrorKind::SpecInvalid, "kappa_min must be > 0");
  if (concentration.kappa_max < concentration.kappa_min) {
    raise(ErrorKind::SpecInvalid, "kappa_max must be >= kappa_min");
  }
  if (!(noise_mix >= 0.0 && noise_mix < 1.0)) raise(ErrorKind::SpecInvalid, "noise_mix in [0, 1)");
  if (!(noise_class_fraction >= 0.0 && noise_class_fraction <= 1.0)) {
    raise(ErrorKind::SpecInvalid, "noise_class_fraction in [0, 1]");
  }
}

namespace data {

std::vector<std::uint32_t> law_populations(const PopulationLaw& law, int num_classes) {
  std::vector<std::uint32_t> populations(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    const double raw =
        static_cast<double>(law.max_n) * std::pow(static_cast<double>(c + 1), -law.exponent);
    const auto rounded = static_cast<std::uint32_t>(std::llround(raw));
    populations[static_cast<std::size_t>(c)] = std::clamp(rounded, law.min_n, law.max_n);
  }
  return populations;
}

SyntheticDataset generate(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset dataset;
  dataset.populations = law_populations(spec.population, spec.num_classes);
  const std::size_t total = [&] {
    std::size_t n = 0;
    for (std::uint32_t p : dataset.populations) n += p;
    return n;
  }();

  Rng rng(spec.seed);
  dataset.prototypes =
      sphere::sample_uniform_sphere(spec.input_dim, spec.num_classes, rng).cast<float>();

  dataset.true_kappas.resize(spec.num_classes);
  const double log_min = std::log(spec.concentration.kappa_min);
  const double log_max = std::log(spec.concentration.kappa_max);
  for (int c = 0; c < spec.num_classes; ++c) {
    dataset.true_kappas[c] = static_cast<float>(std::exp(rng.uniform(log_min, log_max)));
  }

  // Seeded choice of which classes carry the noise mix.
  std::vector<bool> noisy(static_cast<std::size_t>(spec.num_classes), false);
  const auto noisy_count = static_cast<std::size_t>(
      std::llround(spec.noise_class_fraction * static_cast<double>(spec.num_classes)));
  {
    std::vector<std::uint32_t> order(static_cast<std::size_t>(spec.num_classes));
    for (std::size_t c = 0; c < order.size(); ++c) order[c] = static_cast<std::uint32_t>(c);
    for (std::size_t c = 0; c + 1 < order.size(); ++c) {
      const std::size_t pick = c + static_cast<std::size_t>(rng.uniform_index(order.size() - c));
      std::swap(order[c], order[pick]);
    }
    for (std::size_t k = 0; k < noisy_count && k < order.size(); ++k) noisy[order[k]] = true;
  }

  dataset.inputs.resize(static_cast<Eigen::Index>(total), spec.input_dim);
  dataset.labels.resize(total);
  Eigen::Index row = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    const std::uint32_t n_c = dataset.populations[static_cast<std::size_t>(c)];
    const double mix = noisy[static_cast<std::size_t>(c)] ? spec.noise_mix : 0.0;
    const auto uniform_count = static_cast<std::uint32_t>(std::llround(mix * n_c));

    sphere::VmfParams params;
    params.mean_direction = dataset.prototypes.row(c).cast<double>().transpose();
    params.kappa = dataset.true_kappas[c];
    for (std::uint32_t k = 0; k < n_c; ++k) {
      const Eigen::MatrixXd sample = k < uniform_count
                                         ? sphere::sample_uniform_sphere(spec.input_dim, 1, rng)
                                         : sphere::sample_vmf(params, 1, rng);
      dataset.inputs.row(row) = sample.row(0).cast<float>();
      dataset.labels[static_cast<std::size_t>(row)] = static_cast<std::uint32_t>(c);
      ++row;
    }
  }
  return dataset;
}

void holdout_split(const SyntheticDataset& dataset, double fraction, std::uint64_t seed,
                   std::vector<std::uint32_t>* train, std::vector<std::uint32_t>* holdout) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    raise(ErrorKind::InvalidArgument, "holdout fraction must lie in [0, 1)");
  }
  train->clear();
  holdout->clear();
  std::vector<std::vector<std::uint32_t>> by_class(static_cast<std::size_t>(dataset.num_classes()));
  for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
    by_class[dataset.labels[i]].push_back(static_cast<std::uint32_t>(i));
  }
  Rng rng(seed);
  for (auto& members : by_class) {
    for (std::size_t k = 0; k + 1 < members.size(); ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(rng.uniform_index(members.size() - k));
      std::swap(members[k], members[pick]);
    }
    auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(members.size())));
    if (held >= members.size()) held = members.size() - 1;  // keep one training sample
    for (std::size_t k = 0; k < members.size(); ++k) {
      (k < held ? holdout : train)->push_back(members[k]);
    }
  }
  std::sort(train->begin(), train->end());
  std::sort(holdout->begin(), holdout->end());
}

std::vector<Pair> make_pairs(const std::vector<std::uint32_t>& labels,
                             const std::vector<std::uint32_t>& candidates, std::size_t num_pos,
                             std::size_t num_neg, std::uint64_t seed) {
  for (std::uint32_t idx : candidates) {
    if (idx >= labels.size()) raise(ErrorKind::IndexOutOfRange, "candidate index " + std::to_string(idx));
  }

  // Group candidates by class to count what is achievable.
  std::uint32_t num_classes = 0;
  for (std::uint32_t idx : candidates) num_classes = std::max(num_classes, labels[idx] + 1);
  std::vector<std::vector<std::uint32_t>> by_class(num_classes);
  for (std::uint32_t idx : candidates) by_class[labels[idx]].push_back(idx);

  const double m = static_cast<double>(candidates.size());
  double pos_possible = 0.0;
  for (const auto& members : by_class) {
    pos_possible += 0.5 * static_cast<double>(members.size()) * static_cast<double>(members.size() - 1);
  }
  const double neg_possible = 0.5 * m * (m - 1.0) - pos_possible;
  if (static_cast<double>(num_pos) > pos_possible) {
    raise(ErrorKind::InsufficientPairs, "requested " + std::to_string(num_pos) +
                                            " positive pairs, only " +
                                            std::to_string(static_cast<std::size_t>(pos_possible)) +
                                            " exist");
  }
  if (static_cast<double>(num_neg) > neg_possible) {
    raise(ErrorKind::InsufficientPairs, "requested " + std::to_string(num_neg) +
                                            " negative pairs, only " +
                                            std::to_string(static_cast<std::size_t>(neg_possible)) +
                                            " exist");
  }

  Rng rng(seed);
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  std::vector<Pair> pairs;
  pairs.reserve(num_pos + num_neg);

  auto emit = [&](std::uint32_t a, std::uint32_t b, bool same) {
    if (a > b) std::swap(a, b);
    if (a == b) return false;
    if (!seen.insert({a, b}).second) return false;
    pairs.push_back({a, b, same});
    return true;
  };

  // Classes are drawn uniformly (not by size), mirroring per-identity
  // verification protocols; minority classes carry the same weight as
  // majority ones in the resulting pair lists.
  std::vector<std::uint32_t> pos_classes;  // classes with >= 2 members
  std::vector<std::size_t> pos_used(num_classes, 0);
  std::vector<std::uint32_t> nonempty_classes;
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    if (by_class[c].size() >= 2) pos_classes.push_back(c);
    if (!by_class[c].empty()) nonempty_classes.push_back(c);
  }

  std::size_t got = 0;
  while (got < num_pos) {
    const std::size_t slot = rng.uniform_index(pos_classes.size());
    const std::uint32_t c = pos_classes[slot];
    const auto& members = by_class[c];
    const std::size_t capacity = members.size() * (members.size() - 1) / 2;
    if (pos_used[c] == capacity) {  // class exhausted; drop it
      std::swap(pos_classes[slot], pos_classes.back());
      pos_classes.pop_back();
      continue;
    }
    const std::uint32_t a = members[rng.uniform_index(members.size())];
    const std::uint32_t b = members[rng.uniform_index(members.size())];
    if (emit(a, b, true)) {
      ++pos_used[c];
      ++got;
    }
  }
  got = 0;
  while (got < num_neg) {
    const std::uint32_t ca = nonempty_classes[rng.uniform_index(nonempty_classes.size())];
    const std::uint32_t cb = nonempty_classes[rng.uniform_index(nonempty_classes.size())];
    if (ca == cb) continue;
    const std::uint32_t a = by_class[ca][rng.uniform_index(by_class[ca].size())];
    const std::uint32_t b = by_class[cb][rng.uniform_index(by_class[cb].size())];
    if (emit(a, b, false)) ++got;
  }
  return pairs;
}

void write_dataset(std::ostream& out, const SyntheticDataset& dataset) {
  io::BinaryWriter w(out);
  w.write_magic("KFD1");
  w.write_u32(static_cast<std::uint32_t>(dataset.size()));
  w.write_u32(static_cast<std::uint32_t>(dataset.input_dim()));
  w.write_u32(static_cast<std::uint32_t>(dataset.num_classes()));
  io::write_matrix_f32(w, dataset.inputs);
  for (std::uint32_t label : dataset.labels) w.write_u32(label);
  io::write_matrix_f32(w, dataset.prototypes);
  for (Eigen::Index c = 0; c < dataset.true_kappas.size(); ++c) w.write_f32(dataset.true_kappas[c]);
  for (std::uint32_t p : dataset.populations) w.write_u32(p);
}

SyntheticDataset read_dataset(std::istream& in, const std::string& name) {
  io::BinaryReader r(in, name);
  r.expect_magic("KFD1");
  const std::uint32_t total = r.read_u32();
  const std::uint32_t input_dim = r.read_u32();
  const std::uint32_t num_classes = r.read_u32();
  if (total == 0 || input_dim < 2 || num_classes < 1 || num_classes > total) {
    raise(ErrorKind::FormatError, name + ": implausible header");
  }
  SyntheticDataset dataset;
  dataset.inputs = io::read_matrix_f32(r, total, input_dim);
  dataset.labels.resize(total);
  for (std::uint32_t i = 0; i < total; ++i) {
    dataset.labels[i] = r.read_u32();
    if (dataset.labels[i] >= num_classes) {
      raise(ErrorKind::FormatError, name + ": label out of range at byte " + std::to_string(r.offset() - 4));
    }
  }
  dataset.prototypes = io::read_matrix_f32(r, num_classes, input_dim);
  dataset.true_kappas.resize(num_classes);
  for (std::uint32_t c = 0; c < num_classes; ++c) dataset.true_kappas[c] = r.read_f32();
  dataset.populations.resize(num_classes);
  std::size_t sum = 0;
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    dataset.populations[c] = r.read_u32();
    sum += dataset.populations[c];
  }
  if (sum != total) raise(ErrorKind::FormatError, name + ": populations do not sum to N");
  return dataset;
}

void write_dataset_file(const std::string& path, const SyntheticDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::IoError, "cannot open " + path + " for writing");
  write_dataset(out, dataset);
  if (!out) raise(ErrorKind::IoError, "write failed for " + path);
}

SyntheticDataset read_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::IoError, "cannot open " + path);
  return read_dataset(in, path);
}

void write_pairs(std::ostream& out, const std::vector<Pair>& pairs) {
  for (const Pair& p : pairs) {
    out << p.i << '\t' << p.j << '\t' << (p.same_class ? 1 : 0) << '\n';
  }
}

std::vector<Pair> read_pairs(std::istream& in, const std::string& name) {
  std::vector<Pair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    Pair p;
    int flag = -1;
    if (!(row >> p.i >> p.j >> flag) || (flag != 0 && flag != 1)) {
      raise(ErrorKind::FormatError, name + ": bad pair at line " + std::to_string(line_no));
    }
    p.same_class = flag == 1;
    pairs.push_back(p);
  }
  return pairs;
}

}  // namespace data
}  // namespace kappaface
