#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kappaface/errors.hpp"

// Synthetic imbalanced datasets: classes are vMF clusters on the input
// sphere with power-law populations, log-uniform concentrations, and an
// optional fraction of "noisy" classes whose samples are partly uniform.
// Generation is a pure function of the spec; file writes are exclusive per
// path.

namespace kappaface {

struct PopulationLaw {
  std::uint32_t min_n = 5;
  std::uint32_t max_n = 500;
  double exponent = 1.0;  // n_c proportional to rank^(-exponent), clamped into [min_n, max_n]
};

struct ConcentrationLaw {
  double kappa_min = 10.0;  // log-uniform range
  double kappa_max = 300.0;
};

struct SyntheticSpec {
  int num_classes = 2;
  int input_dim = 16;
  PopulationLaw population;
  ConcentrationLaw concentration;
  double noise_mix = 0.0;            // fraction of a noisy class's samples drawn uniformly
  double noise_class_fraction = 1.0; // fraction of classes the noise applies to
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  Eigen::MatrixXf inputs;                 // N x D_in
  std::vector<std::uint32_t> labels;      // N
  Eigen::MatrixXf prototypes;             // C x D_in ground-truth mean directions
  Eigen::VectorXf true_kappas;            // C
  std::vector<std::uint32_t> populations; // C, sums to N

  Eigen::Index size() const { return inputs.rows(); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
  int num_classes() const { return static_cast<int>(populations.size()); }
};

struct Pair {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  bool same_class = false;
};

namespace data {

/// Per-rank populations of the law (rank 1 is the largest class).
std::vector<std::uint32_t> law_populations(const PopulationLaw& law, int num_classes);

SyntheticDataset generate(const SyntheticSpec& spec);

/// Deterministic stratified split: per class, floor(fraction * n_c) sample
/// indices go to the holdout (seeded choice), the rest to the train side.
/// Every class keeps at least one training sample.
void holdout_split(const SyntheticDataset& dataset, double fraction, std::uint64_t seed,
                   std::vector<std::uint32_t>* train, std::vector<std::uint32_t>* holdout);

/// Positive pairs within classes, negatives across, no duplicate unordered
/// pairs, restricted to `candidates`. Throws InsufficientPairs when the
/// requested counts cannot be met.
std::vector<Pair> make_pairs(const std::vector<std::uint32_t>& labels,
                             const std::vector<std::uint32_t>& candidates, std::size_t num_pos,
                             std::size_t num_neg, std::uint64_t seed);

/// Dataset file (magic "KFD1"): u32 N, u32 D_in, u32 C, f32 inputs
/// row-major, u32 labels, f32 prototypes, f32 true_kappas, u32 populations.
void write_dataset(std::ostream& out, const SyntheticDataset& dataset);
SyntheticDataset read_dataset(std::istream& in, const std::string& name);
void write_dataset_file(const std::string& path, const SyntheticDataset& dataset);
SyntheticDataset read_dataset_file(const std::string& path);

/// Pair list TSV: i<TAB>j<TAB>{0|1}; lines starting with '#' are skipped on
/// read.
void write_pairs(std::ostream& out, const std::vector<Pair>& pairs);
std::vector<Pair> read_pairs(std::istream& in, const std::string& name);

}  // namespace data
}  // namespace kappaface
