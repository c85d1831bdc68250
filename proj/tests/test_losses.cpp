#include <doctest.h>

#include <cmath>
#include <vector>

#include "kappaface/losses.hpp"
#include "kappaface/rng.hpp"
#include "kappaface/sphere.hpp"

using namespace kappaface;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct State {
  MatrixXd embeddings;
  MatrixXd class_weights;
  std::vector<std::uint32_t> labels;
  VectorXd psi;
};

// Random unit-row state with every cosine kept away from +-1 and target
// angles kept away from the pi - margin clamp kink, so finite differences
// stay on one smooth branch.
State random_state(std::uint64_t seed, int batch, int num_classes, int dim, double max_abs_cos,
                   double m0) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed + attempt * 7919);
    State state;
    state.embeddings = sphere::sample_uniform_sphere(dim, batch, rng);
    state.class_weights = sphere::sample_uniform_sphere(dim, num_classes, rng);
    state.labels.resize(batch);
    state.psi.resize(num_classes);
    for (int c = 0; c < num_classes; ++c) state.psi[c] = rng.uniform();
    for (int i = 0; i < batch; ++i) {
      state.labels[i] = static_cast<std::uint32_t>(rng.uniform_index(num_classes));
    }
    const MatrixXd cosines = state.embeddings * state.class_weights.transpose();
    bool ok = cosines.cwiseAbs().maxCoeff() < max_abs_cos;
    for (int i = 0; i < batch && ok; ++i) {
      const double theta = std::acos(cosines(i, state.labels[i]));
      for (double margin : {m0, state.psi[state.labels[i]] * m0}) {
        if (std::abs(theta + margin - M_PI) < 0.05) ok = false;
      }
    }
    if (ok) return state;
  }
}

double forward_loss(const State& state, const VectorXd& psi, const MarginLossConfig& config) {
  return losses::forward(state.embeddings, state.class_weights, state.labels, psi, config).loss;
}

// Central finite differences of the loss with respect to every entry of
// the embeddings and class weights.
void finite_difference_check(const State& state, const MarginLossConfig& config, double step,
                             double tolerance) {
  const VectorXd psi = config.family == LossFamily::KappaFace ? state.psi : VectorXd();
  LossBatchResult result =
      losses::forward(state.embeddings, state.class_weights, state.labels, psi, config);
  losses::backward(result, state.embeddings, state.class_weights, state.labels, psi, config);

  auto check_entry = [&](double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    CHECK(std::abs(analytic - numeric) / denom < tolerance);
  };

  State perturbed = state;
  for (Eigen::Index i = 0; i < state.embeddings.rows(); ++i) {
    for (Eigen::Index j = 0; j < state.embeddings.cols(); ++j) {
      perturbed.embeddings(i, j) = state.embeddings(i, j) + step;
      const double up = forward_loss(perturbed, psi, config);
      perturbed.embeddings(i, j) = state.embeddings(i, j) - step;
      const double down = forward_loss(perturbed, psi, config);
      perturbed.embeddings(i, j) = state.embeddings(i, j);
      check_entry(result.grad_embeddings(i, j), (up - down) / (2.0 * step));
    }
  }
  for (Eigen::Index c = 0; c < state.class_weights.rows(); ++c) {
    for (Eigen::Index j = 0; j < state.class_weights.cols(); ++j) {
      perturbed.class_weights(c, j) = state.class_weights(c, j) + step;
      const double up = forward_loss(perturbed, psi, config);
      perturbed.class_weights(c, j) = state.class_weights(c, j) - step;
      const double down = forward_loss(perturbed, psi, config);
      perturbed.class_weights(c, j) = state.class_weights(c, j);
      check_entry(result.grad_class_weights(c, j), (up - down) / (2.0 * step));
    }
  }
}

MarginLossConfig config_for(LossFamily family, double scale = 64.0, double m0 = 0.5) {
  MarginLossConfig config;
  config.family = family;
  config.scale = scale;
  config.m0 = family == LossFamily::CosFace ? 0.35 : m0;
  return config;
}

}  // namespace

TEST_CASE("plain softmax forward fixtures") {
  MatrixXd uniform = MatrixXd::Zero(3, 7);
  CHECK(losses::plain_softmax_forward(uniform, {0, 3, 6}) ==
        doctest::Approx(std::log(7.0)).epsilon(1e-12));

  MatrixXd sharp(1, 2);
  sharp << 10.0, -10.0;
  CHECK(losses::plain_softmax_forward(sharp, {0}) ==
        doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-6));

  // One-hot-favoring logits scaled up: loss strictly decreasing in the scale.
  MatrixXd favoring(1, 3);
  favoring << 2.0, 1.0, -1.0;
  double previous = std::log(3.0) + 1.0;
  for (double t : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const double loss = losses::plain_softmax_forward((t * favoring).eval(), {0});
    CHECK(loss < previous);
    previous = loss;
  }
}

TEST_CASE("forward hand fixture: two classes, margin 0.5") {
  // cos(theta_target) = 0.8, cos(theta_other) = 0.1, s = 64. By the angle
  // addition identity, cos(arccos(0.8) + 0.5) = 0.8 cos 0.5 - 0.6 sin 0.5
  // = 0.4144107, so the logits are (26.52229, 6.4) and the loss is
  // log(1 + e^{6.4 - 26.52229}) = 1.82e-9.
  MatrixXd w(2, 2);
  const double theta_target = std::acos(0.8);
  const double theta_other = std::acos(0.1);
  w.row(0) << std::cos(theta_target), std::sin(theta_target);
  w.row(1) << std::cos(theta_other), std::sin(theta_other);
  MatrixXd z(1, 2);
  z << 1.0, 0.0;

  const MarginLossConfig config = config_for(LossFamily::ArcFace);
  const LossBatchResult result = losses::forward(z, w, {0}, VectorXd(), config);
  const double target_logit = 64.0 * (0.8 * std::cos(0.5) - 0.6 * std::sin(0.5));
  CHECK(target_logit == doctest::Approx(26.52229).epsilon(1e-6));
  const double expected = std::log1p(std::exp(6.4 - target_logit));
  CHECK(result.loss == doctest::Approx(expected).epsilon(1e-9));
  CHECK(result.loss == doctest::Approx(1.82e-9).epsilon(0.01));
}

TEST_CASE("probability rows sum to one for every family") {
  for (LossFamily family : {LossFamily::PlainSoftmax, LossFamily::NormSoftmax, LossFamily::ArcFace,
                            LossFamily::CosFace, LossFamily::KappaFace}) {
    const State state = random_state(100 + static_cast<int>(family), 6, 9, 12, 0.95, 0.6);
    const MarginLossConfig config = config_for(family);
    const VectorXd psi = family == LossFamily::KappaFace ? state.psi : VectorXd();
    const LossBatchResult result =
        losses::forward(state.embeddings, state.class_weights, state.labels, psi, config);
    for (Eigen::Index i = 0; i < result.probs.rows(); ++i) {
      CHECK(std::abs(result.probs.row(i).sum() - 1.0) < 1e-9);
      for (Eigen::Index j = 0; j < result.probs.cols(); ++j) {
        CHECK(result.probs(i, j) > 0.0);
        // A dominant logit can round to probability 1.0 in doubles.
        CHECK(result.probs(i, j) <= 1.0);
      }
    }
  }
}

TEST_CASE("kappaface with psi = 1 is arcface, psi = 0 is norm_softmax") {
  for (int trial = 0; trial < 10; ++trial) {
    const State state = random_state(200 + trial, 5, 8, 16, 0.95, 0.6);
    MarginLossConfig kappa_config = config_for(LossFamily::KappaFace);
    MarginLossConfig arc_config = config_for(LossFamily::ArcFace);
    MarginLossConfig norm_config = config_for(LossFamily::NormSoftmax);

    const VectorXd ones = VectorXd::Ones(8);
    LossBatchResult kappa1 =
        losses::forward(state.embeddings, state.class_weights, state.labels, ones, kappa_config);
    LossBatchResult arc =
        losses::forward(state.embeddings, state.class_weights, state.labels, VectorXd(), arc_config);
    CHECK(std::abs(kappa1.loss - arc.loss) <= 1e-12);
    losses::backward(kappa1, state.embeddings, state.class_weights, state.labels, ones, kappa_config);
    losses::backward(arc, state.embeddings, state.class_weights, state.labels, VectorXd(), arc_config);
    CHECK((kappa1.grad_embeddings - arc.grad_embeddings).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((kappa1.grad_class_weights - arc.grad_class_weights).cwiseAbs().maxCoeff() <= 1e-12);

    const VectorXd zeros = VectorXd::Zero(8);
    LossBatchResult kappa0 =
        losses::forward(state.embeddings, state.class_weights, state.labels, zeros, kappa_config);
    LossBatchResult norm = losses::forward(state.embeddings, state.class_weights, state.labels,
                                           VectorXd(), norm_config);
    CHECK(std::abs(kappa0.loss - norm.loss) <= 1e-12);
    losses::backward(kappa0, state.embeddings, state.class_weights, state.labels, zeros, kappa_config);
    losses::backward(norm, state.embeddings, state.class_weights, state.labels, VectorXd(),
                     norm_config);
    CHECK((kappa0.grad_embeddings - norm.grad_embeddings).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((kappa0.grad_class_weights - norm.grad_class_weights).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("finite differences confirm every family's backward") {
  int trial = 0;
  for (LossFamily family : {LossFamily::PlainSoftmax, LossFamily::NormSoftmax, LossFamily::ArcFace,
                            LossFamily::CosFace, LossFamily::KappaFace}) {
    for (int k = 0; k < 4; ++k, ++trial) {
      const State state = random_state(300 + trial, 4, 6, 10, 0.95, 0.6);
      finite_difference_check(state, config_for(family), 1e-5, 1e-4);
    }
  }
}

TEST_CASE("gradient-probability identity on the cosine logits") {
  const State state = random_state(400, 6, 9, 14, 0.95, 0.6);
  const MarginLossConfig config = config_for(LossFamily::KappaFace);
  LossBatchResult result =
      losses::forward(state.embeddings, state.class_weights, state.labels, state.psi, config);

  // Reconstruct the margin logits independently and compare softmax rows.
  const MatrixXd z = sphere::normalize_rows(state.embeddings);
  const MatrixXd w = sphere::normalize_rows(state.class_weights);
  const MatrixXd cosines = z * w.transpose();
  const double batch = static_cast<double>(state.embeddings.rows());
  for (Eigen::Index i = 0; i < cosines.rows(); ++i) {
    VectorXd logits = config.scale * cosines.row(i).transpose();
    const std::uint32_t label = state.labels[i];
    const double margin = state.psi[label] * config.m0;
    const double theta = std::acos(std::clamp(cosines(i, label), -1.0 + config.clamp_eps,
                                              1.0 - config.clamp_eps));
    logits[label] = config.scale * std::cos(theta + margin);
    const double log_norm =
        logits.maxCoeff() + std::log((logits.array() - logits.maxCoeff()).exp().sum());
    for (Eigen::Index j = 0; j < logits.size(); ++j) {
      const double p = std::exp(logits[j] - log_norm);
      CHECK(std::abs(result.probs(i, j) - p) < 1e-12);
      // d(mean loss)/d(s * margin-logit_j) per sample is p_j - 1{j=label};
      // on non-target columns grad_logit_cos is s * p_j / B.
      if (j != static_cast<Eigen::Index>(label)) {
        CHECK(std::abs(result.grad_logit_cos(i, j) - config.scale * p / batch) < 1e-10);
      } else {
        const double slope = std::sin(theta + margin) / std::sin(theta);
        CHECK(std::abs(result.grad_logit_cos(i, j) -
                       config.scale * (p - 1.0) * slope / batch) < 1e-10);
      }
    }
  }
}

TEST_CASE("loss is invariant under a common rotation for angular families") {
  Rng rng(55);
  const int dim = 12;
  const State state = random_state(500, 5, 7, dim, 0.95, 0.6);
  MatrixXd g(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) g(i, j) = rng.normal();
  }
  const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(g).householderQ();
  for (LossFamily family : {LossFamily::NormSoftmax, LossFamily::ArcFace, LossFamily::CosFace,
                            LossFamily::KappaFace}) {
    const MarginLossConfig config = config_for(family);
    const VectorXd psi = family == LossFamily::KappaFace ? state.psi : VectorXd();
    const double base =
        losses::forward(state.embeddings, state.class_weights, state.labels, psi, config).loss;
    const double rotated = losses::forward((state.embeddings * q).eval(),
                                           (state.class_weights * q).eval(), state.labels, psi,
                                           config).loss;
    CHECK(std::abs(base - rotated) < 1e-9);
  }

  // Plain softmax is instead invariant to a constant shift of its logits.
  MatrixXd logits(2, 4);
  logits << 1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.25, 2.0;
  const double base = losses::plain_softmax_forward(logits, {1, 3});
  const double shifted = losses::plain_softmax_forward((logits.array() + 123.0).matrix(), {1, 3});
  CHECK(std::abs(base - shifted) < 1e-9);
}

TEST_CASE("loss is nondecreasing in psi of the target class") {
  const State state = random_state(600, 1, 5, 8, 0.9, 1.0);
  MarginLossConfig config = config_for(LossFamily::KappaFace);
  config.m0 = 0.7;
  double previous = -1.0;
  for (int k = 0; k <= 20; ++k) {
    VectorXd psi = VectorXd::Constant(5, 0.5);
    psi[state.labels[0]] = 0.05 * k;
    const double loss =
        losses::forward(state.embeddings, state.class_weights, state.labels, psi, config).loss;
    CHECK(loss >= previous - 1e-12);
    previous = loss;
  }
}

TEST_CASE("backward sign structure for non-target classes") {
  const State state = random_state(700, 4, 6, 10, 0.95, 0.6);
  const MarginLossConfig config = config_for(LossFamily::KappaFace);
  LossBatchResult result =
      losses::forward(state.embeddings, state.class_weights, state.labels, state.psi, config);
  for (Eigen::Index i = 0; i < result.grad_logit_cos.rows(); ++i) {
    for (Eigen::Index j = 0; j < result.grad_logit_cos.cols(); ++j) {
      if (j == static_cast<Eigen::Index>(state.labels[i])) {
        CHECK(result.grad_logit_cos(i, j) <= 0.0);
      } else {
        CHECK(result.grad_logit_cos(i, j) > 0.0);
      }
    }
  }
}

TEST_CASE("theorem-style gradient norm ordering on the target class weight") {
  // theta_target = 0.4 rad; effective margins 0.25 (smaller) and 0.75
  // (larger) than the fixed 0.5.
  const int dim = 8;
  const int num_classes = 4;
  Rng rng(900);
  MatrixXd w = sphere::sample_uniform_sphere(dim, num_classes, rng);
  MatrixXd z(1, dim);
  {
    // Build z at angle 0.4 from w.row(0).
    VectorXd target = w.row(0).transpose();
    VectorXd tangent = sphere::sample_uniform_sphere(dim, 1, rng).row(0).transpose();
    tangent -= target.dot(tangent) * target;
    tangent.normalize();
    z.row(0) = (std::cos(0.4) * target + std::sin(0.4) * tangent).transpose();
  }
  std::vector<std::uint32_t> labels = {0};

  auto grad_norm = [&](LossFamily family, double m0, double psi_value) {
    MarginLossConfig config = config_for(family, 64.0, m0);
    const VectorXd psi = family == LossFamily::KappaFace
                             ? VectorXd::Constant(num_classes, psi_value)
                             : VectorXd();
    LossBatchResult result = losses::forward(z, w, labels, psi, config);
    losses::backward(result, z, w, labels, psi, config);
    return result.grad_class_weights.row(0).norm();
  };

  const double arc = grad_norm(LossFamily::ArcFace, 0.5, 0.0);
  const double kappa_small = grad_norm(LossFamily::KappaFace, 0.5, 0.5);   // margin 0.25
  const double kappa_large = grad_norm(LossFamily::KappaFace, 0.75, 1.0);  // margin 0.75
  CHECK(kappa_small < arc);
  CHECK(kappa_large > arc);
}

TEST_CASE("input validation") {
  const State state = random_state(800, 3, 5, 8, 0.95, 0.6);
  MarginLossConfig config = config_for(LossFamily::KappaFace);

  CHECK_THROWS_WITH_AS(
      losses::forward(state.embeddings, state.class_weights, state.labels, VectorXd::Ones(4), config),
      doctest::Contains("ConfigMismatch"), Error);

  MarginLossConfig arc = config_for(LossFamily::ArcFace);
  CHECK_THROWS_AS(
      losses::forward(state.embeddings, state.class_weights, state.labels, VectorXd::Ones(5), arc),
      Error);

  MatrixXd scaled = 1.5 * state.embeddings;
  CHECK_THROWS_WITH_AS(losses::forward(scaled, state.class_weights, state.labels, state.psi, config),
                       doctest::Contains("NonUnitInput"), Error);
}
