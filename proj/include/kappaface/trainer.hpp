#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "kappaface/class_stats.hpp"
#include "kappaface/data_synth.hpp"
#include "kappaface/embed_model.hpp"
#include "kappaface/evaluator.hpp"
#include "kappaface/losses.hpp"
#include "kappaface/margin_scheduler.hpp"

// The full training loop: minibatch SGD over the embedding network and the
// classifier rows, per-sample memory-buffer updates, and an epoch-end
// refresh of the per-class margin calibration. One logical thread owns the
// model, optimizer state, and buffer; evaluation runs on epoch-boundary
// snapshots.

namespace kappaface {

struct TrainConfig {
  MarginLossConfig loss;
  double temperature = 0.55;
  double gamma = 0.5;
  int batch_size = 128;
  int epochs = 40;
  double lr = 0.1;
  std::vector<int> lr_decay_epochs = {20, 30};
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double alpha = 0.3;  // memory-buffer EMA momentum
  std::uint64_t seed = 0;
  int eval_every = 0;  // 0 disables in-loop evaluation
  std::vector<int> hidden = {128, 128};
  int embed_dim = 16;
  Activation activation = Activation::Relu;
  std::optional<double> psi_fixed;  // overrides the scheduler (kappaface only)

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  bool has_psi = false;
  double psi_min = 0.0, psi_mean = 0.0, psi_max = 0.0;
  double kappa_mean = 0.0, kappa_std = 0.0;
  bool has_eval = false;
  double eval_acc = 0.0, eval_tar = 0.0;
};

enum class TrainStatus { Ok, NumericalAbort };

struct TrainResult {
  TrainStatus status = TrainStatus::Ok;
  MlpParams model;
  Eigen::MatrixXd classifier;
  std::optional<MemoryBuffer> buffer;  // final-state buffer for the weights report
  std::vector<EpochRecord> records;
  ClassWeights final_weights;
  Eigen::VectorXd final_kappa_hat;
  std::vector<std::uint32_t> class_counts;
};

/// Test hook, called once per processed batch.
struct BatchEvent {
  int epoch;
  int batch;
  const std::vector<std::uint32_t>* sample_indices;
  const Eigen::VectorXd* psi;  // nullptr for families that ignore psi
  double loss;
};
using BatchObserver = std::function<void(const BatchEvent&)>;

namespace training {

/// lr * factor^(number of decay epochs <= epoch).
double lr_at(int epoch, const TrainConfig& config);

/// Runs the loop over the given sample indices of the dataset. eval_pairs
/// reference dataset row indices; when nonempty and eval_every > 0, the
/// verification metrics land in the epoch records. On a non-finite batch
/// loss the run stops with TrainStatus::NumericalAbort and the model of
/// the last completed epoch.
TrainResult train(const SyntheticDataset& dataset, const std::vector<std::uint32_t>& train_indices,
                  const TrainConfig& config, const std::vector<Pair>& eval_pairs = {},
                  const BatchObserver& observer = nullptr);

/// Embeddings for arbitrary dataset rows under the current model
/// (normalized rows).
Eigen::MatrixXd embed_all(const MlpParams& model, const SyntheticDataset& dataset);

/// Metrics CSV:
/// epoch,lr,mean_loss,psi_min,psi_mean,psi_max,kappa_mean,kappa_std[,eval_acc,eval_tar]
/// psi and eval cells are left empty where they do not apply.
void write_metrics_csv(std::ostream& out, const std::vector<EpochRecord>& records, bool with_eval);

}  // namespace training
}  // namespace kappaface
