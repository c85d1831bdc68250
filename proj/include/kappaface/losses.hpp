#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kappaface/errors.hpp"

// Margin-softmax loss family over cosine logits between unit embeddings and
// unit class weights, with analytic gradients. forward/backward are pure
// given their inputs; the within-batch reduction order is fixed, so batches
// may be processed in parallel by the caller.

namespace kappaface {

enum class LossFamily {
  PlainSoftmax,  // cross entropy over raw dot-product logits, bias 0
  NormSoftmax,   // scaled cosine logits, no margin
  ArcFace,       // additive angular margin m0 on the target logit
  CosFace,       // additive cosine margin m0 on the target logit
  KappaFace,     // additive angular margin psi[label] * m0
};

LossFamily loss_family_from_string(const std::string& name);
const char* to_string(LossFamily family);

struct MarginLossConfig {
  LossFamily family = LossFamily::ArcFace;
  double scale = 64.0;       // s
  double m0 = 0.5;           // radians for angular margins, cosine units for CosFace
  double clamp_eps = 1e-7;   // cosine clamp before arccos

  void validate() const;
};

/// Batch forward result. probs and grad_logit_cos are B x C;
/// grad_logit_cos is d(mean loss)/d(cos theta_ij), i.e. it already carries
/// the 1/B of the batch-mean reduction and the margin chain factor on the
/// target column. grad_embeddings / grad_class_weights are filled by
/// backward() and include the chain through l2 normalization of the inputs.
struct LossBatchResult {
  double loss = 0.0;
  Eigen::MatrixXd probs;
  Eigen::MatrixXd grad_logit_cos;
  Eigen::MatrixXd grad_embeddings;
  Eigen::MatrixXd grad_class_weights;
};

namespace losses {

/// embeddings: B x d rows, class_weights: C x d rows, both unit within
/// 1e-3 (they are renormalized internally, so the gradients differentiate
/// the full normalize-then-score composition). psi must be a C-vector for
/// KappaFace and empty for every other family.
LossBatchResult forward(const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                        const Eigen::Ref<const Eigen::MatrixXd>& class_weights,
                        const std::vector<std::uint32_t>& labels,
                        const Eigen::Ref<const Eigen::VectorXd>& psi,
                        const MarginLossConfig& config);

/// Fills result.grad_embeddings and result.grad_class_weights with the
/// gradients of the batch-mean loss with respect to the (pre-normalization)
/// inputs passed to forward.
void backward(LossBatchResult& result, const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
              const Eigen::Ref<const Eigen::MatrixXd>& class_weights,
              const std::vector<std::uint32_t>& labels,
              const Eigen::Ref<const Eigen::VectorXd>& psi, const MarginLossConfig& config);

/// Mean cross entropy in nats over raw logits (bias fixed at zero),
/// log-sum-exp stabilized.
double plain_softmax_forward(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                             const std::vector<std::uint32_t>& labels);

}  // namespace losses
}  // namespace kappaface
