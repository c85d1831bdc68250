#include "kappaface/class_stats.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "kappaface/io.hpp"
#include "kappaface/sphere.hpp"

namespace kappaface {

MemoryBuffer::MemoryBuffer(const std::vector<std::uint32_t>& labels, int dim, double alpha,
                           std::uint64_t seed)
    : labels_(labels), alpha_(alpha) {
  if (labels.empty()) raise(ErrorKind::EmptySet, "buffer needs at least one sample");
  if (dim < 2) raise(ErrorKind::InvalidDimension, "buffer needs d >= 2");
  if (!(alpha >= 0.0 && alpha < 1.0)) raise(ErrorKind::InvalidArgument, "alpha must lie in [0, 1)");

  const std::uint32_t num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  class_counts_.assign(num_classes, 0);
  for (std::uint32_t label : labels) ++class_counts_[label];
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    if (class_counts_[c] == 0) {
      raise(ErrorKind::EmptyClass, "class " + std::to_string(c) + " has no samples");
    }
  }

  Rng rng(seed);
  vectors_ = sphere::sample_uniform_sphere(dim, static_cast<int>(labels.size()), rng);
  refresh_class_sums();
}

void MemoryBuffer::update(Eigen::Index sample, const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (sample < 0 || sample >= vectors_.rows()) {
    raise(ErrorKind::IndexOutOfRange, "sample index " + std::to_string(sample));
  }
  if (z.size() != vectors_.cols()) raise(ErrorKind::DimensionMismatch, "embedding dimension");

  const Eigen::VectorXd combined =
      alpha_ * vectors_.row(sample).transpose() + (1.0 - alpha_) * z;
  const double norm = combined.norm();
  if (norm <= sphere::kZeroNormEps) return;  // exact cancellation: keep the old row

  const Eigen::RowVectorXd fresh = (combined / norm).transpose();
  class_sums_.row(labels_[static_cast<std::size_t>(sample)]) += fresh - vectors_.row(sample);
  vectors_.row(sample) = fresh;
}

void MemoryBuffer::refresh_class_sums() {
  class_sums_ = Eigen::MatrixXd::Zero(num_classes(), vectors_.cols());
  for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
    class_sums_.row(labels_[static_cast<std::size_t>(i)]) += vectors_.row(i);
  }
}

ClassConcentrations MemoryBuffer::epoch_concentrations() const {
  const int c_count = num_classes();
  ClassConcentrations out;
  out.r_hat.resize(c_count);
  out.kappa_hat.resize(c_count);
  for (int c = 0; c < c_count; ++c) {
    // Contiguous copy so the norm reduction matches resultant_length's
    // arithmetic bit for bit.
    const Eigen::VectorXd sum = class_sums_.row(c).transpose();
    const double r = sum.norm() / static_cast<double>(class_counts_[c]);
    out.r_hat[c] = std::min(r, 1.0);
    out.kappa_hat[c] = sphere::estimate_kappa(out.r_hat[c], dim());
  }
  return out;
}

void MemoryBuffer::write_snapshot(std::ostream& out) const {
  io::BinaryWriter w(out);
  w.write_magic("KMB1");
  w.write_u32(static_cast<std::uint32_t>(size()));
  w.write_u32(static_cast<std::uint32_t>(dim()));
  w.write_u32(static_cast<std::uint32_t>(num_classes()));
  io::write_matrix_f32(w, vectors_.cast<float>());
  for (std::uint32_t label : labels_) w.write_u32(label);
}

MemoryBuffer MemoryBuffer::read_snapshot(std::istream& in, const std::string& name, double alpha) {
  io::BinaryReader r(in, name);
  r.expect_magic("KMB1");
  const std::uint32_t count = r.read_u32();
  const std::uint32_t dim = r.read_u32();
  const std::uint32_t num_classes = r.read_u32();
  if (count == 0 || dim < 2 || num_classes == 0) {
    raise(ErrorKind::FormatError, name + ": implausible header");
  }

  MemoryBuffer buffer;
  buffer.alpha_ = alpha;
  const Eigen::MatrixXf rows = io::read_matrix_f32(r, count, dim);
  buffer.labels_.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    buffer.labels_[i] = r.read_u32();
    if (buffer.labels_[i] >= num_classes) {
      raise(ErrorKind::FormatError,
            name + ": label out of range at byte " + std::to_string(r.offset() - 4));
    }
  }
  buffer.vectors_ = sphere::normalize_rows(rows.cast<double>());
  buffer.class_counts_.assign(num_classes, 0);
  for (std::uint32_t label : buffer.labels_) ++buffer.class_counts_[label];
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    if (buffer.class_counts_[c] == 0) {
      raise(ErrorKind::EmptyClass, name + ": class " + std::to_string(c) + " has no samples");
    }
  }
  buffer.refresh_class_sums();
  return buffer;
}

}  // namespace kappaface
