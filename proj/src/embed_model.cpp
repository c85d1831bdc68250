#include "kappaface/embed_model.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "kappaface/io.hpp"
#include "kappaface/rng.hpp"

namespace kappaface {

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  raise(ErrorKind::ConfigMismatch, "unknown activation \"" + name + "\"");
}

const char* to_string(Activation activation) {
  return activation == Activation::Relu ? "relu" : "tanh";
}

void MlpParams::validate() const {
  if (layers.empty()) raise(ErrorKind::ConfigMismatch, "mlp needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weight.cols() != layers[l].bias.size()) {
      raise(ErrorKind::DimensionMismatch, "bias length mismatch in layer " + std::to_string(l));
    }
    if (l > 0 && layers[l - 1].weight.cols() != layers[l].weight.rows()) {
      raise(ErrorKind::DimensionMismatch, "layer " + std::to_string(l) + " does not chain");
    }
    if (!layers[l].weight.allFinite() || !layers[l].bias.allFinite()) {
      raise(ErrorKind::InvalidArgument, "non-finite parameter in layer " + std::to_string(l));
    }
  }
}

MlpParams make_mlp(int input_dim, const std::vector<int>& hidden, int output_dim,
                   Activation activation, std::uint64_t seed) {
  if (input_dim < 1 || output_dim < 1) raise(ErrorKind::InvalidDimension, "bad mlp dimensions");
  MlpParams params;
  params.activation = activation;
  Rng rng(seed);
  std::vector<int> dims;
  dims.push_back(input_dim);
  for (int h : hidden) {
    if (h < 1) raise(ErrorKind::InvalidDimension, "bad hidden width");
    dims.push_back(h);
  }
  dims.push_back(output_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    MlpLayer layer;
    layer.weight.resize(dims[l], dims[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(dims[l]));
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
        layer.weight(i, j) = rng.uniform(-limit, limit);
      }
    }
    layer.bias = Eigen::VectorXd::Zero(dims[l + 1]);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Eigen::MatrixXd make_classifier(int num_classes, int dim, std::uint64_t seed) {
  if (num_classes < 1 || dim < 2) raise(ErrorKind::InvalidDimension, "bad classifier dimensions");
  Rng rng(seed);
  Eigen::MatrixXd w(num_classes, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = scale * rng.normal();
  }
  return w;
}

namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& pre, Activation activation) {
  if (activation == Activation::Relu) return pre.cwiseMax(0.0);
  return pre.array().tanh().matrix();
}

// Derivative expressed through cached values: relu mask from the
// pre-activation, tanh from the post-activation.
Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post,
                                 Activation activation) {
  if (activation == Activation::Relu) {
    return (pre.array() > 0.0).cast<double>().matrix();
  }
  return (1.0 - post.array().square()).matrix();
}

}  // namespace

Eigen::MatrixXd mlp_forward(const MlpParams& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                            MlpCache* cache) {
  params.validate();
  if (inputs.cols() != params.layers.front().weight.rows()) {
    raise(ErrorKind::DimensionMismatch,
          "input width " + std::to_string(inputs.cols()) + " does not match first layer");
  }
  if (cache) {
    cache->input = inputs;
    cache->pre.clear();
    cache->post.clear();
  }
  Eigen::MatrixXd current = inputs;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Eigen::MatrixXd pre =
        (current * params.layers[l].weight).rowwise() + params.layers[l].bias.transpose();
    Eigen::MatrixXd post = (l == last) ? pre : activate(pre, params.activation);
    if (cache) {
      cache->pre.push_back(pre);
      cache->post.push_back(post);
    }
    current = std::move(post);
  }
  return current;
}

MlpGrads mlp_backward(const MlpParams& params, const MlpCache& cache,
                      const Eigen::Ref<const Eigen::MatrixXd>& grad_output) {
  params.validate();
  const std::size_t num_layers = params.layers.size();
  if (cache.pre.size() != num_layers || cache.post.size() != num_layers) {
    raise(ErrorKind::StaleCache, "cache layer count does not match parameters");
  }
  if (grad_output.rows() != cache.input.rows() ||
      grad_output.cols() != params.layers.back().weight.cols()) {
    raise(ErrorKind::StaleCache, "grad_output shape does not match cache");
  }

  MlpGrads grads;
  grads.layers.resize(num_layers);
  Eigen::MatrixXd delta = grad_output;
  for (std::size_t l = num_layers; l-- > 0;) {
    if (cache.pre[l].rows() != delta.rows() || cache.pre[l].cols() != delta.cols()) {
      raise(ErrorKind::StaleCache, "cache shape mismatch in layer " + std::to_string(l));
    }
    if (l != num_layers - 1) {
      delta = delta.cwiseProduct(activation_slope(cache.pre[l], cache.post[l], params.activation));
    }
    const Eigen::MatrixXd& below = (l == 0) ? cache.input : cache.post[l - 1];
    grads.layers[l].weight = below.transpose() * delta;
    grads.layers[l].bias = delta.colwise().sum().transpose();
    delta = (delta * params.layers[l].weight.transpose()).eval();
  }
  grads.input = std::move(delta);
  return grads;
}

namespace {

template <typename ParamRef, typename GradRef, typename VelRef>
void sgd_step_impl(ParamRef& param, const GradRef& grad, VelRef& velocity, double lr, double momentum,
                   double weight_decay) {
  if (!(lr > 0.0)) raise(ErrorKind::InvalidArgument, "lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) raise(ErrorKind::InvalidArgument, "momentum in [0, 1)");
  if (!(weight_decay >= 0.0)) raise(ErrorKind::InvalidArgument, "weight_decay must be >= 0");
  velocity = momentum * velocity + (grad + weight_decay * param);
  param -= lr * velocity;
}

}  // namespace

void sgd_step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::Ref<const Eigen::MatrixXd>& grad,
              Eigen::Ref<Eigen::MatrixXd> velocity, double lr, double momentum, double weight_decay) {
  sgd_step_impl(param, grad, velocity, lr, momentum, weight_decay);
}

SgdState::SgdState(const MlpParams& params) {
  velocity.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    velocity[l].weight = Eigen::MatrixXd::Zero(params.layers[l].weight.rows(),
                                               params.layers[l].weight.cols());
    velocity[l].bias = Eigen::VectorXd::Zero(params.layers[l].bias.size());
  }
}

void sgd_step(MlpParams& params, const MlpGrads& grads, SgdState& state, double lr, double momentum,
              double weight_decay) {
  if (grads.layers.size() != params.layers.size() || state.velocity.size() != params.layers.size()) {
    raise(ErrorKind::StaleCache, "gradient/state layer count mismatch");
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    sgd_step_impl(params.layers[l].weight, grads.layers[l].weight, state.velocity[l].weight, lr,
                  momentum, weight_decay);
    sgd_step_impl(params.layers[l].bias, grads.layers[l].bias, state.velocity[l].bias, lr, momentum,
                  weight_decay);
  }
}

void write_checkpoint(std::ostream& out, const MlpParams& params, const Eigen::MatrixXd& classifier) {
  params.validate();
  io::BinaryWriter w(out);
  w.write_magic("KMM1");
  w.write_u32(static_cast<std::uint32_t>(params.layers.size()));
  w.write_u32(params.activation == Activation::Relu ? 0u : 1u);
  for (const MlpLayer& layer : params.layers) {
    w.write_u32(static_cast<std::uint32_t>(layer.weight.rows()));
    w.write_u32(static_cast<std::uint32_t>(layer.weight.cols()));
  }
  for (const MlpLayer& layer : params.layers) {
    io::write_matrix_f64(w, layer.weight);
    io::write_matrix_f64(w, layer.bias);
  }
  w.write_u32(static_cast<std::uint32_t>(classifier.rows()));
  w.write_u32(static_cast<std::uint32_t>(classifier.cols()));
  io::write_matrix_f64(w, classifier);
}

void read_checkpoint(std::istream& in, const std::string& name, MlpParams& params,
                     Eigen::MatrixXd& classifier) {
  io::BinaryReader r(in, name);
  r.expect_magic("KMM1");
  const std::uint32_t num_layers = r.read_u32();
  const std::uint32_t activation = r.read_u32();
  if (num_layers == 0 || num_layers > 64 || activation > 1) {
    raise(ErrorKind::FormatError, name + ": implausible header");
  }
  params.activation = activation == 0 ? Activation::Relu : Activation::Tanh;
  params.layers.assign(num_layers, {});
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dims(num_layers);
  for (auto& [rows, cols] : dims) {
    rows = r.read_u32();
    cols = r.read_u32();
    if (rows == 0 || cols == 0) raise(ErrorKind::FormatError, name + ": zero layer dimension");
  }
  for (std::uint32_t l = 0; l < num_layers; ++l) {
    params.layers[l].weight = io::read_matrix_f64(r, dims[l].first, dims[l].second);
    params.layers[l].bias = io::read_matrix_f64(r, dims[l].second, 1).col(0);
  }
  const std::uint32_t c_count = r.read_u32();
  const std::uint32_t dim = r.read_u32();
  if (c_count == 0 || dim == 0) raise(ErrorKind::FormatError, name + ": zero classifier dimension");
  classifier = io::read_matrix_f64(r, c_count, dim);
  params.validate();
  if (static_cast<Eigen::Index>(dim) != params.layers.back().weight.cols()) {
    raise(ErrorKind::FormatError, name + ": classifier dimension does not match the network");
  }
}

}  // namespace kappaface
