// Command-line front end: gen-data, train, eval, weights-report.
// Configuration comes from a flat key=value file with '#' comments;
// command-line flags override file values, which override built-in
// defaults. Exit codes: 0 ok, 2 config error, 3 I/O error, 4 numerical
// abort.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kappaface/class_stats.hpp"
#include "kappaface/data_synth.hpp"
#include "kappaface/embed_model.hpp"
#include "kappaface/evaluator.hpp"
#include "kappaface/losses.hpp"
#include "kappaface/margin_scheduler.hpp"
#include "kappaface/sphere.hpp"
#include "kappaface/trainer.hpp"

namespace kf = kappaface;
namespace fs = std::filesystem;

namespace {

struct RunConfig {
  // data
  int num_classes = 100;
  int input_dim = 16;
  std::uint32_t min_n = 5;
  std::uint32_t max_n = 500;
  double pop_exponent = 1.0;
  double kappa_min = 10.0;
  double kappa_max = 300.0;
  double noise_mix = 0.0;
  double noise_class_fraction = 1.0;
  double holdout_fraction = 0.2;
  std::size_t train_pos_pairs = 2000;
  std::size_t train_neg_pairs = 2000;
  std::size_t holdout_pos_pairs = 1000;
  std::size_t holdout_neg_pairs = 4000;
  // model
  int embed_dim = 16;
  std::string hidden = "128,128";
  std::string activation = "relu";
  // training
  std::string loss = "kappaface";
  double scale = 64.0;
  double m0 = 0.5;
  double temperature = 0.55;
  double gamma = 0.5;
  int batch_size = 128;
  int epochs = 40;
  double lr = 0.1;
  std::string lr_decay_epochs = "20,30";
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double alpha = 0.3;
  int eval_every = 0;
  std::string psi_fixed;  // empty = scheduler-driven
  // io
  std::string out = "out";
  std::string dataset;
  std::string pairs;
  std::string checkpoint;
  std::string buffer;
  std::string fixture;
  std::uint32_t max_population = 0;  // K override; 0 = derive from data
  std::uint64_t seed = 0;

  std::string dataset_path() const { return dataset.empty() ? out + "/dataset.kfd" : dataset; }
  std::string pairs_path() const { return pairs.empty() ? out + "/pairs_holdout.tsv" : pairs; }
  std::string checkpoint_path() const { return checkpoint.empty() ? out + "/checkpoint.kmm" : checkpoint; }
  std::string buffer_path() const { return buffer.empty() ? out + "/buffer.kmb" : buffer; }
};

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream stream(value);
  T parsed;
  stream >> parsed;
  if (stream.fail() || !stream.eof()) {
    kf::raise(kf::ErrorKind::ConfigError, "bad value \"" + value + "\" for key " + key);
  }
  return parsed;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (item.empty()) continue;
    values.push_back(parse_number<int>("list", item));
  }
  return values;
}

void apply_key(RunConfig& config, const std::string& key, const std::string& value) {
  if (key == "num_classes") config.num_classes = parse_number<int>(key, value);
  else if (key == "input_dim") config.input_dim = parse_number<int>(key, value);
  else if (key == "min_n") config.min_n = parse_number<std::uint32_t>(key, value);
  else if (key == "max_n") config.max_n = parse_number<std::uint32_t>(key, value);
  else if (key == "pop_exponent") config.pop_exponent = parse_number<double>(key, value);
  else if (key == "kappa_min") config.kappa_min = parse_number<double>(key, value);
  else if (key == "kappa_max") config.kappa_max = parse_number<double>(key, value);
  else if (key == "noise_mix") config.noise_mix = parse_number<double>(key, value);
  else if (key == "noise_class_fraction") config.noise_class_fraction = parse_number<double>(key, value);
  else if (key == "holdout_fraction") config.holdout_fraction = parse_number<double>(key, value);
  else if (key == "train_pos_pairs") config.train_pos_pairs = parse_number<std::size_t>(key, value);
  else if (key == "train_neg_pairs") config.train_neg_pairs = parse_number<std::size_t>(key, value);
  else if (key == "holdout_pos_pairs") config.holdout_pos_pairs = parse_number<std::size_t>(key, value);
  else if (key == "holdout_neg_pairs") config.holdout_neg_pairs = parse_number<std::size_t>(key, value);
  else if (key == "embed_dim") config.embed_dim = parse_number<int>(key, value);
  else if (key == "hidden") config.hidden = value;
  else if (key == "activation") config.activation = value;
  else if (key == "loss") config.loss = value;
  else if (key == "scale") config.scale = parse_number<double>(key, value);
  else if (key == "m0") config.m0 = parse_number<double>(key, value);
  else if (key == "temperature") config.temperature = parse_number<double>(key, value);
  else if (key == "gamma") config.gamma = parse_number<double>(key, value);
  else if (key == "batch_size") config.batch_size = parse_number<int>(key, value);
  else if (key == "epochs") config.epochs = parse_number<int>(key, value);
  else if (key == "lr") config.lr = parse_number<double>(key, value);
  else if (key == "lr_decay_epochs") config.lr_decay_epochs = value;
  else if (key == "lr_decay_factor") config.lr_decay_factor = parse_number<double>(key, value);
  else if (key == "momentum") config.momentum = parse_number<double>(key, value);
  else if (key == "weight_decay") config.weight_decay = parse_number<double>(key, value);
  else if (key == "alpha") config.alpha = parse_number<double>(key, value);
  else if (key == "eval_every") config.eval_every = parse_number<int>(key, value);
  else if (key == "psi_fixed") config.psi_fixed = value;
  else if (key == "out") config.out = value;
  else if (key == "dataset") config.dataset = value;
  else if (key == "pairs") config.pairs = value;
  else if (key == "checkpoint") config.checkpoint = value;
  else if (key == "buffer") config.buffer = value;
  else if (key == "fixture") config.fixture = value;
  else if (key == "K") config.max_population = parse_number<std::uint32_t>(key, value);
  else if (key == "seed") config.seed = parse_number<std::uint64_t>(key, value);
  else kf::raise(kf::ErrorKind::ConfigError, "unknown config key \"" + key + "\"");
}

std::string trim(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

void load_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) kf::raise(kf::ErrorKind::IoError, "cannot open config file " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto equals = content.find('=');
    if (equals == std::string::npos) {
      kf::raise(kf::ErrorKind::ConfigError,
                path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    apply_key(config, trim(content.substr(0, equals)), trim(content.substr(equals + 1)));
  }
}

/// Output stream with the optional timestamp header line.
class OutputFile {
 public:
  OutputFile(const std::string& path, bool timestamp) : path_(path), out_(path) {
    if (!out_) kf::raise(kf::ErrorKind::IoError, "cannot open " + path + " for writing");
    if (timestamp) {
      const std::time_t now = std::time(nullptr);
      char buf[64];
      std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", std::gmtime(&now));
      out_ << "# generated " << buf << "Z\n";
    }
  }
  ~OutputFile() {
    if (!out_) std::cerr << "warning: write failed for " << path_ << "\n";
  }
  std::ostream& stream() { return out_; }

 private:
  std::string path_;
  std::ofstream out_;
};

void require_file(const std::string& path) {
  if (!fs::exists(path)) kf::raise(kf::ErrorKind::IoError, "missing input file " + path);
}

kf::SyntheticSpec make_spec(const RunConfig& config) {
  kf::SyntheticSpec spec;
  spec.num_classes = config.num_classes;
  spec.input_dim = config.input_dim;
  spec.population = {config.min_n, config.max_n, config.pop_exponent};
  spec.concentration = {config.kappa_min, config.kappa_max};
  spec.noise_mix = config.noise_mix;
  spec.noise_class_fraction = config.noise_class_fraction;
  spec.seed = config.seed;
  return spec;
}

kf::TrainConfig make_train_config(const RunConfig& config) {
  kf::TrainConfig train;
  train.loss.family = kf::loss_family_from_string(config.loss);
  train.loss.scale = config.scale;
  train.loss.m0 = config.m0;
  train.temperature = config.temperature;
  train.gamma = config.gamma;
  train.batch_size = config.batch_size;
  train.epochs = config.epochs;
  train.lr = config.lr;
  train.lr_decay_epochs = parse_int_list(config.lr_decay_epochs);
  train.lr_decay_factor = config.lr_decay_factor;
  train.momentum = config.momentum;
  train.weight_decay = config.weight_decay;
  train.alpha = config.alpha;
  train.seed = config.seed;
  train.eval_every = config.eval_every;
  train.hidden = parse_int_list(config.hidden);
  train.embed_dim = config.embed_dim;
  train.activation = kf::activation_from_string(config.activation);
  if (!config.psi_fixed.empty()) {
    train.psi_fixed = parse_number<double>("psi_fixed", config.psi_fixed);
  }
  return train;
}

std::uint64_t split_seed(const RunConfig& config) { return kf::Rng(config.seed).fork(101).next_u64(); }

int cmd_gen_data(const RunConfig& config, bool timestamp) {
  const kf::SyntheticSpec spec = make_spec(config);
  const kf::SyntheticDataset dataset = kf::data::generate(spec);

  std::vector<std::uint32_t> train_idx;
  std::vector<std::uint32_t> holdout_idx;
  kf::data::holdout_split(dataset, config.holdout_fraction, split_seed(config), &train_idx,
                          &holdout_idx);
  const auto train_pairs =
      kf::data::make_pairs(dataset.labels, train_idx, config.train_pos_pairs, config.train_neg_pairs,
                           kf::Rng(config.seed).fork(102).next_u64());
  const auto holdout_pairs = kf::data::make_pairs(dataset.labels, holdout_idx,
                                                  config.holdout_pos_pairs, config.holdout_neg_pairs,
                                                  kf::Rng(config.seed).fork(103).next_u64());

  fs::create_directories(config.out);
  kf::data::write_dataset_file(config.dataset_path(), dataset);
  {
    OutputFile out(config.out + "/pairs_train.tsv", timestamp);
    kf::data::write_pairs(out.stream(), train_pairs);
  }
  {
    OutputFile out(config.out + "/pairs_holdout.tsv", timestamp);
    kf::data::write_pairs(out.stream(), holdout_pairs);
  }

  std::uint32_t min_pop = dataset.populations.front();
  std::uint32_t max_pop = dataset.populations.front();
  for (std::uint32_t p : dataset.populations) {
    min_pop = std::min(min_pop, p);
    max_pop = std::max(max_pop, p);
  }
  std::cout << "dataset: " << dataset.size() << " samples, " << dataset.num_classes()
            << " classes, input_dim " << dataset.input_dim() << "\n"
            << "populations: min " << min_pop << ", max " << max_pop << "\n"
            << "true kappa: min " << dataset.true_kappas.minCoeff() << ", max "
            << dataset.true_kappas.maxCoeff() << "\n"
            << "split: " << train_idx.size() << " train / " << holdout_idx.size() << " holdout\n"
            << "pairs: " << train_pairs.size() << " train, " << holdout_pairs.size() << " holdout\n";
  return 0;
}

int cmd_train(const RunConfig& config, bool timestamp) {
  require_file(config.dataset_path());
  const kf::SyntheticDataset dataset = kf::data::read_dataset_file(config.dataset_path());
  const kf::TrainConfig train_config = make_train_config(config);
  train_config.validate();

  std::vector<std::uint32_t> train_idx;
  std::vector<std::uint32_t> holdout_idx;
  kf::data::holdout_split(dataset, config.holdout_fraction, split_seed(config), &train_idx,
                          &holdout_idx);

  std::vector<kf::Pair> eval_pairs;
  if (train_config.eval_every > 0) {
    require_file(config.pairs_path());
    std::ifstream in(config.pairs_path());
    eval_pairs = kf::data::read_pairs(in, config.pairs_path());
  }

  const kf::TrainResult result =
      kf::training::train(dataset, train_idx, train_config, eval_pairs);

  fs::create_directories(config.out);
  {
    OutputFile out(config.out + "/metrics.csv", timestamp);
    kf::training::write_metrics_csv(out.stream(), result.records, train_config.eval_every > 0);
  }
  {
    std::ofstream out(config.checkpoint_path(), std::ios::binary);
    if (!out) kf::raise(kf::ErrorKind::IoError, "cannot open " + config.checkpoint_path());
    kf::write_checkpoint(out, result.model, result.classifier);
  }
  {
    std::ofstream out(config.buffer_path(), std::ios::binary);
    if (!out) kf::raise(kf::ErrorKind::IoError, "cannot open " + config.buffer_path());
    result.buffer->write_snapshot(out);
  }

  if (result.status == kf::TrainStatus::NumericalAbort) {
    std::cerr << "training aborted on a non-finite loss after "
              << result.records.size() << " completed epochs; last good checkpoint written\n";
    return 4;
  }
  std::cout << "trained " << result.records.size() << " epochs, final mean loss "
            << result.records.back().mean_loss << "\n";
  return 0;
}

int cmd_eval(const RunConfig& config, bool timestamp) {
  require_file(config.checkpoint_path());
  require_file(config.pairs_path());
  require_file(config.dataset_path());

  kf::MlpParams model;
  Eigen::MatrixXd classifier;
  {
    std::ifstream in(config.checkpoint_path(), std::ios::binary);
    if (!in) kf::raise(kf::ErrorKind::IoError, "cannot open " + config.checkpoint_path());
    kf::read_checkpoint(in, config.checkpoint_path(), model, classifier);
  }
  const kf::SyntheticDataset dataset = kf::data::read_dataset_file(config.dataset_path());
  std::vector<kf::Pair> pairs;
  {
    std::ifstream in(config.pairs_path());
    pairs = kf::data::read_pairs(in, config.pairs_path());
  }

  const Eigen::MatrixXd embeddings = kf::training::embed_all(model, dataset);
  const kf::VerificationReport report = kf::eval::evaluate_pairs(embeddings, pairs);

  fs::create_directories(config.out);
  {
    OutputFile out(config.out + "/eval_report.txt", timestamp);
    kf::eval::write_report(out.stream(), report);
  }
  {
    OutputFile out(config.out + "/roc.tsv", timestamp);
    kf::eval::write_roc_tsv(out.stream(), report);
  }
  std::cout << "accuracy " << report.accuracy << " at threshold " << report.best_threshold << "\n";
  return 0;
}

int cmd_weights_report(const RunConfig& config, bool timestamp) {
  kf::SchedulerConfig sched;
  sched.temperature = config.temperature;
  sched.gamma = config.gamma;
  sched.m0 = config.m0;

  kf::ClassWeights weights;
  Eigen::VectorXd kappa_hat;
  std::vector<std::uint32_t> populations;

  if (!config.fixture.empty()) {
    // Fixture mode: per-class standardized concentration and population,
    // TSV "kappa_tilde<TAB>n_c". K must be supplied when it exceeds the
    // fixture populations.
    require_file(config.fixture);
    std::ifstream in(config.fixture);
    std::string line;
    std::vector<double> tilde;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream row(line);
      double k = 0.0;
      std::uint32_t n = 0;
      if (!(row >> k >> n)) {
        kf::raise(kf::ErrorKind::FormatError,
                  config.fixture + ": bad row at line " + std::to_string(line_no));
      }
      tilde.push_back(k);
      populations.push_back(n);
    }
    if (tilde.empty()) kf::raise(kf::ErrorKind::FormatError, config.fixture + ": no classes");
    Eigen::VectorXd kappa_tilde(static_cast<Eigen::Index>(tilde.size()));
    for (std::size_t c = 0; c < tilde.size(); ++c) kappa_tilde[static_cast<Eigen::Index>(c)] = tilde[c];
    sched.max_population = config.max_population;
    if (sched.max_population == 0) {
      sched.max_population = *std::max_element(populations.begin(), populations.end());
    }
    weights = kf::scheduler::compute_psi_standardized(kappa_tilde, populations, sched);
    kappa_hat.resize(0);
  } else {
    require_file(config.buffer_path());
    std::ifstream in(config.buffer_path(), std::ios::binary);
    if (!in) kf::raise(kf::ErrorKind::IoError, "cannot open " + config.buffer_path());
    const kf::MemoryBuffer buffer =
        kf::MemoryBuffer::read_snapshot(in, config.buffer_path(), config.alpha);
    populations = buffer.class_counts();
    sched.max_population = config.max_population;
    if (sched.max_population == 0) {
      sched.max_population = *std::max_element(populations.begin(), populations.end());
    }
    const kf::ClassConcentrations conc = buffer.epoch_concentrations();
    kappa_hat = conc.kappa_hat;
    weights = kf::scheduler::compute_psi(kappa_hat, populations, sched);
  }

  fs::create_directories(config.out);
  OutputFile out(config.out + "/weights_report.csv", timestamp);
  kf::scheduler::write_weights_csv(out.stream(), weights, kappa_hat, populations, sched.m0);
  std::cout << "wrote weights report for " << weights.num_classes() << " classes\n";
  return 0;
}

int exit_code_for(const kf::Error& error) {
  switch (error.kind()) {
    case kf::ErrorKind::IoError:
    case kf::ErrorKind::FormatError:
      return 3;
    case kf::ErrorKind::NumericalAbort:
      return 4;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KappaFace adaptive angular-margin training laboratory"};
  app.require_subcommand(1);
  app.fallthrough(true);

  std::string config_path;
  bool no_timestamp = false;
  app.add_option("--config", config_path, "flat key=value config file")->expected(1);
  app.add_flag("--no-timestamp", no_timestamp, "omit timestamp header lines from text outputs");

  // Flag storage; only applied over the config when actually passed.
  std::uint64_t seed = 0;
  std::string out_dir, loss, dataset, pairs, checkpoint, buffer_path, fixture, psi_fixed;
  double m0 = 0, temperature = 0, gamma = 0, scale = 0, lr = 0, alpha = 0, holdout_fraction = 0;
  int epochs = 0, batch_size = 0, eval_every = 0, embed_dim = 0;
  std::uint32_t max_population = 0, min_n = 0, max_n = 0;
  bool no_population_weight = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "run seed");
    cmd->add_option("--out", out_dir, "output directory");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset and pair lists");
  add_common(gen);
  gen->add_option("--min-n", min_n, "smallest class population");
  gen->add_option("--max-n", max_n, "largest class population");
  gen->add_option("--holdout-fraction", holdout_fraction, "per-class holdout share");

  CLI::App* train = app.add_subcommand("train", "run the training loop");
  add_common(train);
  train->add_option("--loss", loss, "plain_softmax|norm_softmax|arcface|cosface|kappaface");
  train->add_option("--m0", m0, "base margin");
  train->add_option("--temperature", temperature, "concentration-weight temperature");
  train->add_option("--gamma", gamma, "population-weight share");
  train->add_option("--scale", scale, "logit scale s");
  train->add_option("--lr", lr, "initial learning rate");
  train->add_option("--alpha", alpha, "memory-buffer EMA momentum");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--batch-size", batch_size, "minibatch size");
  train->add_option("--eval-every", eval_every, "epochs between in-loop evaluations");
  train->add_option("--embed-dim", embed_dim, "embedding dimension");
  train->add_option("--dataset", dataset, "dataset file");
  train->add_option("--pairs", pairs, "pair list used for in-loop evaluation");
  train->add_option("--psi-fixed", psi_fixed, "freeze psi at a constant (kappaface)");
  train->add_flag("--no-population-weight", no_population_weight,
                  "drop the population weight (gamma = 0)");

  CLI::App* evalc = app.add_subcommand("eval", "verification metrics for a checkpoint");
  add_common(evalc);
  evalc->add_option("--checkpoint", checkpoint, "checkpoint file");
  evalc->add_option("--pairs", pairs, "pair list file");
  evalc->add_option("--dataset", dataset, "dataset file");

  CLI::App* report = app.add_subcommand("weights-report", "per-class margin calibration CSV");
  add_common(report);
  report->add_option("--buffer", buffer_path, "memory-buffer snapshot file");
  report->add_option("--fixture", fixture, "TSV of kappa_tilde<TAB>n_c rows");
  report->add_option("--K", max_population, "population-weight denominator");
  report->add_option("--m0", m0, "base margin");
  report->add_option("--temperature", temperature, "concentration-weight temperature");
  report->add_option("--gamma", gamma, "population-weight share");
  report->add_option("--alpha", alpha, "EMA momentum assumed for the snapshot");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig config;
    if (!config_path.empty()) load_config_file(config, config_path);

    CLI::App* active = app.get_subcommands().front();
    auto passed = [&](const char* name) { return active->count(name) > 0; };
    if (passed("--seed")) config.seed = seed;
    if (passed("--out")) config.out = out_dir;
    if (active == gen) {
      if (passed("--min-n")) config.min_n = min_n;
      if (passed("--max-n")) config.max_n = max_n;
      if (passed("--holdout-fraction")) config.holdout_fraction = holdout_fraction;
    }
    if (active == train) {
      if (passed("--loss")) config.loss = loss;
      if (passed("--m0")) config.m0 = m0;
      if (passed("--temperature")) config.temperature = temperature;
      if (passed("--gamma")) config.gamma = gamma;
      if (passed("--scale")) config.scale = scale;
      if (passed("--lr")) config.lr = lr;
      if (passed("--alpha")) config.alpha = alpha;
      if (passed("--epochs")) config.epochs = epochs;
      if (passed("--batch-size")) config.batch_size = batch_size;
      if (passed("--eval-every")) config.eval_every = eval_every;
      if (passed("--embed-dim")) config.embed_dim = embed_dim;
      if (passed("--dataset")) config.dataset = dataset;
      if (passed("--pairs")) config.pairs = pairs;
      if (passed("--psi-fixed")) config.psi_fixed = psi_fixed;
      if (no_population_weight) config.gamma = 0.0;
    }
    if (active == evalc) {
      if (passed("--checkpoint")) config.checkpoint = checkpoint;
      if (passed("--pairs")) config.pairs = pairs;
      if (passed("--dataset")) config.dataset = dataset;
    }
    if (active == report) {
      if (passed("--buffer")) config.buffer = buffer_path;
      if (passed("--fixture")) config.fixture = fixture;
      if (passed("--K")) config.max_population = max_population;
      if (passed("--m0")) config.m0 = m0;
      if (passed("--temperature")) config.temperature = temperature;
      if (passed("--gamma")) config.gamma = gamma;
      if (passed("--alpha")) config.alpha = alpha;
    }

    const bool timestamp = !no_timestamp;
    if (active == gen) return cmd_gen_data(config, timestamp);
    if (active == train) return cmd_train(config, timestamp);
    if (active == evalc) return cmd_eval(config, timestamp);
    if (active == report) return cmd_weights_report(config, timestamp);
    return 2;
  } catch (const kf::Error& error) {
    std::cerr << "error: " << error.what() << "\n";
    return exit_code_for(error);
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 2;
  }
}
