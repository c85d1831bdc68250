#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kappaface/errors.hpp"

// A small multilayer perceptron with manual forward/backward passes, plus
// the raw C x d classifier weight matrix; these are the two parameter
// groups the optimizer updates. Parameter state is single-writer during
// training.

namespace kappaface {

enum class Activation { Relu, Tanh };

Activation activation_from_string(const std::string& name);
const char* to_string(Activation activation);

struct MlpLayer {
  Eigen::MatrixXd weight;  // fan_in x fan_out
  Eigen::VectorXd bias;    // fan_out
};

struct MlpParams {
  std::vector<MlpLayer> layers;
  Activation activation = Activation::Relu;  // applied between layers, not after the last

  int input_dim() const { return static_cast<int>(layers.front().weight.rows()); }
  int output_dim() const { return static_cast<int>(layers.back().weight.cols()); }
  void validate() const;
};

/// He-style fan-in uniform initialization, deterministic under seed.
/// `hidden` may be empty, giving a single linear layer.
MlpParams make_mlp(int input_dim, const std::vector<int>& hidden, int output_dim,
                   Activation activation, std::uint64_t seed);

/// Raw classifier weights, C x d, seeded normal / sqrt(d).
Eigen::MatrixXd make_classifier(int num_classes, int dim, std::uint64_t seed);

struct MlpCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
  std::vector<Eigen::MatrixXd> post;  // post-activation per layer (last = output)
};

struct MlpGrads {
  std::vector<MlpLayer> layers;  // same shapes as the parameters
  Eigen::MatrixXd input;         // B x input_dim
};

Eigen::MatrixXd mlp_forward(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                            MlpCache* cache = nullptr);

/// Exact gradients of the forward composition; linear in grad_output.
/// Throws StaleCache when the cache does not match the parameters.
MlpGrads mlp_backward(const MlpParams& params, const MlpCache& cache,
                      const Eigen::Ref<const Eigen::MatrixXd>& grad_output);

/// Classical momentum with coupled weight decay:
///   v <- momentum * v + (grad + weight_decay * param)
///   param <- param - lr * v
void sgd_step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::Ref<const Eigen::MatrixXd>& grad,
              Eigen::Ref<Eigen::MatrixXd> velocity, double lr, double momentum, double weight_decay);

struct SgdState {
  std::vector<MlpLayer> velocity;
  explicit SgdState(const MlpParams& params);
};

void sgd_step(MlpParams& params, const MlpGrads& grads, SgdState& state, double lr, double momentum,
              double weight_decay);

/// Checkpoint (magic "KMM1"): u32 layer count, u32 activation id, u32
/// (fan_in, fan_out) per layer, f64 weight+bias per layer, u32 C, u32 d,
/// f64 classifier rows.
void write_checkpoint(std::ostream& out, const MlpParams& params, const Eigen::MatrixXd& classifier);
void read_checkpoint(std::istream& in, const std::string& name, MlpParams& params,
                     Eigen::MatrixXd& classifier);

}  // namespace kappaface
