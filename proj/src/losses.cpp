#include "kappaface/losses.hpp"

#include <algorithm>
#include <cmath>

#include "kappaface/sphere.hpp"

namespace kappaface {

LossFamily loss_family_from_string(const std::string& name) {
  if (name == "plain_softmax") return LossFamily::PlainSoftmax;
  if (name == "norm_softmax") return LossFamily::NormSoftmax;
  if (name == "arcface") return LossFamily::ArcFace;
  if (name == "cosface") return LossFamily::CosFace;
  if (name == "kappaface") return LossFamily::KappaFace;
  raise(ErrorKind::ConfigMismatch, "unknown loss family \"" + name + "\"");
}

const char* to_string(LossFamily family) {
  switch (family) {
    case LossFamily::PlainSoftmax: return "plain_softmax";
    case LossFamily::NormSoftmax: return "norm_softmax";
    case LossFamily::ArcFace: return "arcface";
    case LossFamily::CosFace: return "cosface";
    case LossFamily::KappaFace: return "kappaface";
  }
  return "?";
}

void MarginLossConfig::validate() const {
  if (!(scale > 0.0)) raise(ErrorKind::ConfigMismatch, "scale must be positive");
  if (!(clamp_eps > 0.0 && clamp_eps < 1e-2)) raise(ErrorKind::ConfigMismatch, "bad clamp_eps");
  if (family == LossFamily::CosFace) {
    if (!(m0 >= 0.0 && m0 < 1.0)) raise(ErrorKind::ConfigMismatch, "cosine margin must lie in [0, 1)");
  } else if (!(m0 >= 0.0 && m0 < M_PI)) {
    raise(ErrorKind::ConfigMismatch, "angular margin must lie in [0, pi)");
  }
}

namespace losses {

namespace {

constexpr double kUnitTolerance = 1e-3;

void check_unit_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows, const char* what) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    if (std::abs(rows.row(i).norm() - 1.0) > kUnitTolerance) {
      raise(ErrorKind::NonUnitInput,
            std::string(what) + " row " + std::to_string(i) + " has norm " +
                std::to_string(rows.row(i).norm()));
    }
  }
}

// Target-logit transform: modified cosine value and its derivative with
// respect to the raw cosine. An angular margin of exactly zero keeps the
// identity path so zero-margin families reduce bit-tight to norm_softmax.
struct MarginChain {
  double value;
  double slope;
};

MarginChain apply_margin(double cosine, double margin, LossFamily family, double clamp_eps) {
  if (family == LossFamily::CosFace) return {cosine - margin, 1.0};
  if (margin == 0.0 || family == LossFamily::PlainSoftmax || family == LossFamily::NormSoftmax) {
    return {cosine, 1.0};
  }
  const double hi = 1.0 - clamp_eps;
  const double clamped = std::clamp(cosine, -hi, hi);
  const double theta = std::acos(clamped);
  const double shifted = theta + margin;
  if (shifted >= M_PI) return {-1.0, 0.0};  // penalty floor; cos is non-monotone past pi
  const double slope_inner = (cosine > -hi && cosine < hi) ? 1.0 : 0.0;
  return {std::cos(shifted), slope_inner * std::sin(shifted) / std::sin(theta)};
}

}  // namespace

LossBatchResult forward(const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                        const Eigen::Ref<const Eigen::MatrixXd>& class_weights,
                        const std::vector<std::uint32_t>& labels,
                        const Eigen::Ref<const Eigen::VectorXd>& psi,
                        const MarginLossConfig& config) {
  config.validate();
  const Eigen::Index batch = embeddings.rows();
  const Eigen::Index num_classes = class_weights.rows();
  if (batch == 0) raise(ErrorKind::EmptySet, "empty batch");
  if (embeddings.cols() != class_weights.cols()) {
    raise(ErrorKind::DimensionMismatch, "embedding and class-weight dimensions differ");
  }
  if (static_cast<Eigen::Index>(labels.size()) != batch) {
    raise(ErrorKind::DimensionMismatch, "labels length does not match batch");
  }
  for (std::uint32_t label : labels) {
    if (label >= num_classes) raise(ErrorKind::IndexOutOfRange, "label " + std::to_string(label));
  }
  if (config.family == LossFamily::KappaFace) {
    if (psi.size() != num_classes) {
      raise(ErrorKind::ConfigMismatch, "psi length " + std::to_string(psi.size()) +
                                           " does not match C = " + std::to_string(num_classes));
    }
  } else if (psi.size() != 0) {
    raise(ErrorKind::ConfigMismatch, "psi is only meaningful for kappaface");
  }
  check_unit_rows(embeddings, "embedding");
  check_unit_rows(class_weights, "class weight");

  const Eigen::MatrixXd z = sphere::normalize_rows(embeddings);
  const Eigen::MatrixXd w = sphere::normalize_rows(class_weights);
  const Eigen::MatrixXd cosines = z * w.transpose();
  const double s = config.family == LossFamily::PlainSoftmax ? 1.0 : config.scale;

  LossBatchResult result;
  result.probs.resize(batch, num_classes);
  result.grad_logit_cos.resize(batch, num_classes);

  Eigen::MatrixXd logits = s * cosines;
  Eigen::VectorXd target_slope(batch);
  double loss_sum = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const std::uint32_t label = labels[i];
    double margin = 0.0;
    if (config.family == LossFamily::ArcFace || config.family == LossFamily::CosFace) {
      margin = config.m0;
    } else if (config.family == LossFamily::KappaFace) {
      margin = psi[label] * config.m0;
    }
    const MarginChain chain = apply_margin(cosines(i, label), margin, config.family, config.clamp_eps);
    logits(i, label) = s * chain.value;
    target_slope[i] = chain.slope;

    const double row_max = logits.row(i).maxCoeff();
    const double log_norm =
        row_max + std::log((logits.row(i).array() - row_max).exp().sum());
    loss_sum += log_norm - logits(i, label);
    result.probs.row(i) = (logits.row(i).array() - log_norm).exp();
  }
  result.loss = loss_sum / static_cast<double>(batch);

  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const std::uint32_t label = labels[i];
    for (Eigen::Index j = 0; j < num_classes; ++j) {
      const double indicator = (static_cast<Eigen::Index>(label) == j) ? 1.0 : 0.0;
      const double chain = (static_cast<Eigen::Index>(label) == j) ? target_slope[i] : 1.0;
      result.grad_logit_cos(i, j) = s * (result.probs(i, j) - indicator) * chain * inv_batch;
    }
  }
  return result;
}

void backward(LossBatchResult& result, const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
              const Eigen::Ref<const Eigen::MatrixXd>& class_weights,
              const std::vector<std::uint32_t>& labels,
              const Eigen::Ref<const Eigen::VectorXd>& psi, const MarginLossConfig& config) {
  (void)labels;
  (void)psi;
  (void)config;
  if (result.grad_logit_cos.rows() != embeddings.rows() ||
      result.grad_logit_cos.cols() != class_weights.rows()) {
    raise(ErrorKind::StaleCache, "result does not match the forward inputs");
  }
  const Eigen::MatrixXd z = sphere::normalize_rows(embeddings);
  const Eigen::MatrixXd w = sphere::normalize_rows(class_weights);

  // d loss / d unit rows.
  const Eigen::MatrixXd grad_z = result.grad_logit_cos * w;
  const Eigen::MatrixXd grad_w = result.grad_logit_cos.transpose() * z;

  // Chain through v -> v/||v||: (g - (u.g) u) / ||v||.
  result.grad_embeddings.resize(embeddings.rows(), embeddings.cols());
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    const double radial = z.row(i).dot(grad_z.row(i));
    result.grad_embeddings.row(i) =
        (grad_z.row(i) - radial * z.row(i)) / embeddings.row(i).norm();
  }
  result.grad_class_weights.resize(class_weights.rows(), class_weights.cols());
  for (Eigen::Index j = 0; j < class_weights.rows(); ++j) {
    const double radial = w.row(j).dot(grad_w.row(j));
    result.grad_class_weights.row(j) =
        (grad_w.row(j) - radial * w.row(j)) / class_weights.row(j).norm();
  }
}

double plain_softmax_forward(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                             const std::vector<std::uint32_t>& labels) {
  const Eigen::Index batch = logits.rows();
  if (batch == 0) raise(ErrorKind::EmptySet, "empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != batch) {
    raise(ErrorKind::DimensionMismatch, "labels length does not match batch");
  }
  double loss_sum = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    if (labels[i] >= logits.cols()) raise(ErrorKind::IndexOutOfRange, "label out of range");
    const double row_max = logits.row(i).maxCoeff();
    const double log_norm = row_max + std::log((logits.row(i).array() - row_max).exp().sum());
    loss_sum += log_norm - logits(i, labels[i]);
  }
  return loss_sum / static_cast<double>(batch);
}

}  // namespace losses
}  // namespace kappaface
