#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kappaface/errors.hpp"
#include "kappaface/rng.hpp"

namespace kappaface {

/// Per-class resultant lengths and the concentrations estimated from them.
struct ClassConcentrations {
  Eigen::VectorXd r_hat;
  Eigen::VectorXd kappa_hat;
};

/// Memory buffer of exponentially averaged unit embeddings, one row per
/// training sample, with per-class running sums so the epoch-end statistics
/// cost O(C*d) instead of a pass over all rows.
///
/// Single-writer: update() calls must be externally serialized. The object
/// may be handed to another thread (or read concurrently) between writes.
class MemoryBuffer {
 public:
  /// Rows start as i.i.d. uniform unit vectors. Every class id in
  /// [0, num_classes) must occur in `labels` at least once.
  MemoryBuffer(const std::vector<std::uint32_t>& labels, int dim, double alpha, std::uint64_t seed);

  /// Eq.-style EMA step: row_i <- normalize(alpha * row_i + (1-alpha) * z),
  /// with the class sum adjusted incrementally. If the combination cancels
  /// below norm 1e-12 the previous row is kept.
  void update(Eigen::Index sample, const Eigen::Ref<const Eigen::VectorXd>& z);

  /// Recompute class sums exactly from the rows (row-index order), bounding
  /// the drift of the incremental updates. Called at epoch boundaries.
  void refresh_class_sums();

  /// Per-class resultant length ||class_sum_c|| / n_c and the concentration
  /// estimate; O(C*d), no pass over the rows.
  ClassConcentrations epoch_concentrations() const;

  Eigen::Index size() const { return vectors_.rows(); }
  int dim() const { return static_cast<int>(vectors_.cols()); }
  int num_classes() const { return static_cast<int>(class_counts_.size()); }
  double alpha() const { return alpha_; }

  const Eigen::MatrixXd& vectors() const { return vectors_; }
  const std::vector<std::uint32_t>& labels() const { return labels_; }
  const Eigen::MatrixXd& class_sums() const { return class_sums_; }
  const std::vector<std::uint32_t>& class_counts() const { return class_counts_; }

  /// Debug snapshot (magic "KMB1"): u32 |D|, u32 d, u32 C, f32 rows, u32
  /// labels. Rows are stored in f32; the reload renormalizes them and
  /// rebuilds the sums.
  void write_snapshot(std::ostream& out) const;
  static MemoryBuffer read_snapshot(std::istream& in, const std::string& name, double alpha = 0.3);

 private:
  MemoryBuffer() = default;

  Eigen::MatrixXd vectors_;
  std::vector<std::uint32_t> labels_;
  Eigen::MatrixXd class_sums_;
  std::vector<std::uint32_t> class_counts_;
  double alpha_ = 0.3;
};

}  // namespace kappaface
