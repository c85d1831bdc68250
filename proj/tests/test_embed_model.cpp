#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "kappaface/embed_model.hpp"
#include "kappaface/rng.hpp"

using namespace kappaface;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

// Scalar objective so the finite-difference oracle has one output:
// sum of squares of the network output.
double objective(const MlpParams& params, const MatrixXd& inputs) {
  return mlp_forward(params, inputs).squaredNorm();
}

void finite_difference_check(MlpParams params, const MatrixXd& inputs, double step, double tol) {
  MlpCache cache;
  const MatrixXd output = mlp_forward(params, inputs, &cache);
  const MlpGrads grads = mlp_backward(params, cache, 2.0 * output);

  auto check_entry = [&](double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    CHECK(std::abs(analytic - numeric) / denom < tol);
  };

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    MlpLayer& layer = params.layers[l];
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
        const double saved = layer.weight(i, j);
        layer.weight(i, j) = saved + step;
        const double up = objective(params, inputs);
        layer.weight(i, j) = saved - step;
        const double down = objective(params, inputs);
        layer.weight(i, j) = saved;
        check_entry(grads.layers[l].weight(i, j), (up - down) / (2.0 * step));
      }
    }
    for (Eigen::Index j = 0; j < layer.bias.size(); ++j) {
      const double saved = layer.bias[j];
      layer.bias[j] = saved + step;
      const double up = objective(params, inputs);
      layer.bias[j] = saved - step;
      const double down = objective(params, inputs);
      layer.bias[j] = saved;
      check_entry(grads.layers[l].bias[j], (up - down) / (2.0 * step));
    }
  }

  MatrixXd perturbed = inputs;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
      perturbed(i, j) = inputs(i, j) + step;
      const double up = objective(params, perturbed);
      perturbed(i, j) = inputs(i, j) - step;
      const double down = objective(params, perturbed);
      perturbed(i, j) = inputs(i, j);
      check_entry(grads.input(i, j), (up - down) / (2.0 * step));
    }
  }
}

}  // namespace

TEST_CASE("identity-initialized linear layer is the identity map") {
  MlpParams params;
  params.layers.push_back({MatrixXd::Identity(5, 5), VectorXd::Zero(5)});
  Rng rng(1);
  const MatrixXd inputs = random_matrix(3, 5, rng);
  CHECK(mlp_forward(params, inputs) == inputs);
}

TEST_CASE("zero weights with relu give an all-zero embedding") {
  MlpParams params;
  params.layers.push_back({MatrixXd::Zero(4, 6), VectorXd::Zero(6)});
  params.layers.push_back({MatrixXd::Zero(6, 3), VectorXd::Zero(3)});
  Rng rng(2);
  CHECK(mlp_forward(params, random_matrix(2, 4, rng)).isZero(0.0));
}

TEST_CASE("forward is deterministic and shape-checked") {
  const MlpParams params = make_mlp(6, {8, 8}, 4, Activation::Relu, 33u);
  const MlpParams params_again = make_mlp(6, {8, 8}, 4, Activation::Relu, 33u);
  Rng rng(3);
  const MatrixXd inputs = random_matrix(5, 6, rng);
  CHECK(mlp_forward(params, inputs) == mlp_forward(params_again, inputs));
  CHECK_THROWS_WITH_AS(mlp_forward(params, random_matrix(5, 7, rng)),
                       doctest::Contains("DimensionMismatch"), Error);
}

TEST_CASE("single linear layer closed-form gradient") {
  MlpParams params;
  Rng rng(4);
  params.layers.push_back({random_matrix(4, 3, rng), VectorXd::Zero(3)});
  const MatrixXd x = random_matrix(1, 4, rng);
  MlpCache cache;
  mlp_forward(params, x, &cache);
  MatrixXd grad_out = random_matrix(1, 3, rng);
  const MlpGrads grads = mlp_backward(params, cache, grad_out);
  CHECK(grads.layers[0].weight.isApprox(x.transpose() * grad_out, 1e-14));
  CHECK(grads.layers[0].bias.transpose().isApprox(grad_out, 1e-14));

  // Zero upstream gradient zeroes every parameter gradient.
  const MlpGrads zero = mlp_backward(params, cache, MatrixXd::Zero(1, 3));
  CHECK(zero.layers[0].weight.isZero(0.0));
  CHECK(zero.layers[0].bias.isZero(0.0));
  CHECK(zero.input.isZero(0.0));
}

TEST_CASE("backward matches finite differences across shapes and activations") {
  struct Shape {
    int in;
    std::vector<int> hidden;
    int out;
    Activation activation;
  };
  const Shape shapes[] = {
      {4, {}, 3, Activation::Relu},
      {5, {7}, 4, Activation::Relu},
      {6, {8, 5}, 4, Activation::Relu},
      {5, {7}, 3, Activation::Tanh},
      {6, {9, 6}, 3, Activation::Tanh},
  };
  int seed = 50;
  for (const Shape& shape : shapes) {
    const MlpParams params = make_mlp(shape.in, shape.hidden, shape.out, shape.activation,
                                      static_cast<std::uint64_t>(seed));
    Rng rng(static_cast<std::uint64_t>(seed + 1000));
    const MatrixXd inputs = random_matrix(3, shape.in, rng);
    finite_difference_check(params, inputs, 1e-5, 1e-4);
    ++seed;
  }
}

TEST_CASE("stale cache is rejected") {
  const MlpParams params = make_mlp(4, {6}, 3, Activation::Relu, 7u);
  const MlpParams other = make_mlp(4, {5}, 3, Activation::Relu, 7u);
  Rng rng(8);
  MlpCache cache;
  mlp_forward(params, random_matrix(2, 4, rng), &cache);
  CHECK_THROWS_WITH_AS(mlp_backward(other, cache, MatrixXd::Zero(2, 3)),
                       doctest::Contains("StaleCache"), Error);
  CHECK_THROWS_AS(mlp_backward(params, cache, MatrixXd::Zero(3, 3)), Error);
}

TEST_CASE("sgd fixtures") {
  // momentum 0, decay 0: plain gradient step.
  MatrixXd param = MatrixXd::Constant(1, 1, 2.0);
  MatrixXd grad = MatrixXd::Constant(1, 1, 0.5);
  MatrixXd velocity = MatrixXd::Zero(1, 1);
  sgd_step(param, grad, velocity, 0.1, 0.0, 0.0);
  CHECK(param(0, 0) == doctest::Approx(2.0 - 0.1 * 0.5).epsilon(1e-15));

  // Zero gradient, zero decay, zero velocity: fixed point.
  MatrixXd still = MatrixXd::Constant(1, 1, 1.5);
  MatrixXd zero = MatrixXd::Zero(1, 1);
  MatrixXd vel = MatrixXd::Zero(1, 1);
  sgd_step(still, zero, vel, 0.1, 0.9, 0.0);
  CHECK(still(0, 0) == 1.5);

  // Two steps, momentum 0.9, constant gradient: displacement eta*g*(1 + 1.9).
  MatrixXd p = MatrixXd::Zero(1, 1);
  MatrixXd g = MatrixXd::Constant(1, 1, 1.0);
  MatrixXd v = MatrixXd::Zero(1, 1);
  sgd_step(p, g, v, 0.01, 0.9, 0.0);
  sgd_step(p, g, v, 0.01, 0.9, 0.0);
  CHECK(p(0, 0) == doctest::Approx(-0.01 * (1.0 + 1.9)).epsilon(1e-12));
}

TEST_CASE("sgd strictly decreases a convex quadratic") {
  // f(x) = 0.5 ||x - target||^2, gradient x - target.
  Rng rng(9);
  MatrixXd x = random_matrix(3, 3, rng);
  const MatrixXd target = random_matrix(3, 3, rng);
  MatrixXd velocity = MatrixXd::Zero(3, 3);
  double previous = 0.5 * (x - target).squaredNorm();
  for (int step = 0; step < 50; ++step) {
    const MatrixXd grad = x - target;
    sgd_step(x, grad, velocity, 0.05, 0.0, 0.0);
    const double value = 0.5 * (x - target).squaredNorm();
    CHECK(value < previous);
    previous = value;
  }
}

TEST_CASE("checkpoint round trip") {
  const MlpParams params = make_mlp(6, {10, 8}, 5, Activation::Tanh, 77u);
  const Eigen::MatrixXd classifier = make_classifier(9, 5, 78u);
  std::stringstream stream;
  write_checkpoint(stream, params, classifier);
  const std::string bytes = stream.str();
  CHECK(bytes.substr(0, 4) == "KMM1");

  MlpParams loaded;
  Eigen::MatrixXd loaded_classifier;
  std::stringstream in(bytes);
  read_checkpoint(in, "ckpt", loaded, loaded_classifier);
  CHECK(loaded.activation == params.activation);
  REQUIRE(loaded.layers.size() == params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    CHECK(loaded.layers[l].weight == params.layers[l].weight);
    CHECK(loaded.layers[l].bias == params.layers[l].bias);
  }
  CHECK(loaded_classifier == classifier);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 9));
  MlpParams scratch;
  Eigen::MatrixXd scratch_classifier;
  CHECK_THROWS_WITH_AS(read_checkpoint(truncated, "ckpt", scratch, scratch_classifier),
                       doctest::Contains("truncated"), Error);
}
