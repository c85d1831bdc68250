#include "kappaface/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "kappaface/rng.hpp"
#include "kappaface/sphere.hpp"

namespace kappaface {

void TrainConfig::validate() const {
  loss.validate();
  if (epochs < 1) raise(ErrorKind::ConfigMismatch, "epochs must be >= 1");
  if (batch_size < 1) raise(ErrorKind::ConfigMismatch, "batch_size must be >= 1");
  if (!(lr > 0.0)) raise(ErrorKind::ConfigMismatch, "lr must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    raise(ErrorKind::ConfigMismatch, "lr_decay_factor must lie in (0, 1]");
  }
  for (std::size_t k = 0; k < lr_decay_epochs.size(); ++k) {
    if (lr_decay_epochs[k] < 0 || lr_decay_epochs[k] >= epochs) {
      raise(ErrorKind::ConfigMismatch, "decay epochs must lie in [0, epochs)");
    }
    if (k > 0 && lr_decay_epochs[k] <= lr_decay_epochs[k - 1]) {
      raise(ErrorKind::ConfigMismatch, "decay epochs must be strictly increasing");
    }
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) raise(ErrorKind::ConfigMismatch, "momentum in [0, 1)");
  if (!(weight_decay >= 0.0)) raise(ErrorKind::ConfigMismatch, "weight_decay must be >= 0");
  if (!(alpha >= 0.0 && alpha < 1.0)) raise(ErrorKind::ConfigMismatch, "alpha must lie in [0, 1)");
  if (eval_every < 0) raise(ErrorKind::ConfigMismatch, "eval_every must be >= 0");
  if (embed_dim < 2) raise(ErrorKind::ConfigMismatch, "embed_dim must be >= 2");
  if (psi_fixed && loss.family != LossFamily::KappaFace) {
    raise(ErrorKind::ConfigMismatch, "psi_fixed only applies to kappaface");
  }
  if (psi_fixed && !(*psi_fixed >= 0.0 && *psi_fixed <= 1.0)) {
    raise(ErrorKind::ConfigMismatch, "psi_fixed must lie in [0, 1]");
  }
}

namespace training {

double lr_at(int epoch, const TrainConfig& config) {
  if (epoch < 0 || epoch >= config.epochs) raise(ErrorKind::IndexOutOfRange, "epoch out of range");
  double lr = config.lr;
  for (int decay : config.lr_decay_epochs) {
    if (decay <= epoch) lr *= config.lr_decay_factor;
  }
  return lr;
}

Eigen::MatrixXd embed_all(const MlpParams& model, const SyntheticDataset& dataset) {
  const Eigen::MatrixXd raw = mlp_forward(model, dataset.inputs.cast<double>());
  return sphere::normalize_rows(raw);
}

namespace {

Eigen::VectorXd summarize(const Eigen::VectorXd& v, double* mean, double* stddev) {
  *mean = v.mean();
  *stddev = std::sqrt((v.array() - *mean).square().mean());
  return v;
}

}  // namespace

TrainResult train(const SyntheticDataset& dataset, const std::vector<std::uint32_t>& train_indices,
                  const TrainConfig& config, const std::vector<Pair>& eval_pairs,
                  const BatchObserver& observer) {
  config.validate();
  if (train_indices.empty()) raise(ErrorKind::EmptySet, "no training samples");
  for (std::uint32_t idx : train_indices) {
    if (idx >= dataset.labels.size()) raise(ErrorKind::IndexOutOfRange, "train index " + std::to_string(idx));
  }
  const int num_classes = dataset.num_classes();
  const bool is_kappa = config.loss.family == LossFamily::KappaFace;

  // Buffer labels are positions within the training subset; class ids stay
  // global so the scheduler lines up with dataset classes.
  std::vector<std::uint32_t> buffer_labels(train_indices.size());
  for (std::size_t k = 0; k < train_indices.size(); ++k) {
    buffer_labels[k] = dataset.labels[train_indices[k]];
  }

  Rng root(config.seed);
  MlpParams model = make_mlp(dataset.input_dim(), config.hidden, config.embed_dim,
                             config.activation, root.fork(1).next_u64());
  Eigen::MatrixXd classifier =
      make_classifier(num_classes, config.embed_dim, root.fork(2).next_u64());
  MemoryBuffer buffer(buffer_labels, config.embed_dim, config.alpha, root.fork(3).next_u64());
  Rng shuffle_rng = root.fork(4);

  SchedulerConfig sched;
  sched.temperature = config.temperature;
  sched.gamma = config.gamma;
  sched.m0 = config.loss.family == LossFamily::CosFace ? 0.5 : std::max(config.loss.m0, 1e-9);
  sched.max_population =
      *std::max_element(buffer.class_counts().begin(), buffer.class_counts().end());

  SgdState model_state(model);
  Eigen::MatrixXd classifier_velocity = Eigen::MatrixXd::Zero(num_classes, config.embed_dim);

  // Epoch-0 snapshot: population weights only, w_conc pinned at 0.5.
  ClassWeights weights = scheduler::warm_start(buffer.class_counts(), sched);
  if (config.psi_fixed) weights.psi.setConstant(num_classes, *config.psi_fixed);
  Eigen::VectorXd kappa_hat = Eigen::VectorXd::Zero(num_classes);

  TrainResult result;
  result.class_counts = buffer.class_counts();

  MlpParams last_good_model = model;
  Eigen::MatrixXd last_good_classifier = classifier;

  std::vector<std::uint32_t> order(train_indices.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<std::uint32_t>(k);

  const Eigen::VectorXd empty_psi;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(epoch, config);
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(shuffle_rng.uniform_index(order.size() - k));
      std::swap(order[k], order[pick]);
    }

    double loss_sum = 0.0;
    bool aborted = false;
    const std::size_t total = order.size();
    int batch_index = 0;
    for (std::size_t start = 0; start < total; start += config.batch_size, ++batch_index) {
      const std::size_t count = std::min<std::size_t>(config.batch_size, total - start);
      Eigen::MatrixXd inputs(count, dataset.input_dim());
      std::vector<std::uint32_t> labels(count);
      std::vector<std::uint32_t> batch_rows(count);  // positions within the training subset
      for (std::size_t b = 0; b < count; ++b) {
        const std::uint32_t row = order[start + b];
        batch_rows[b] = row;
        inputs.row(b) = dataset.inputs.row(train_indices[row]).cast<double>();
        labels[b] = buffer_labels[row];
      }

      MlpCache cache;
      const Eigen::MatrixXd raw = mlp_forward(model, inputs, &cache);
      const Eigen::VectorXd raw_norms = raw.rowwise().norm();
      const Eigen::MatrixXd z = sphere::normalize_rows(raw);
      for (std::size_t b = 0; b < count; ++b) {
        buffer.update(batch_rows[b], z.row(b).transpose());
      }

      const Eigen::MatrixXd w_unit = sphere::normalize_rows(classifier);
      const Eigen::VectorXd w_norms = classifier.rowwise().norm();

      LossBatchResult loss_result =
          losses::forward(z, w_unit, labels, is_kappa ? weights.psi : empty_psi, config.loss);
      if (!std::isfinite(loss_result.loss)) {
        aborted = true;
        break;
      }
      loss_sum += loss_result.loss * static_cast<double>(count);
      losses::backward(loss_result, z, w_unit, labels, is_kappa ? weights.psi : empty_psi,
                       config.loss);

      // The loss differentiates its own (unit) inputs; the projector is
      // idempotent, so reaching the raw parameters only needs the 1/norm
      // factors of the outer normalizations.
      Eigen::MatrixXd grad_raw = loss_result.grad_embeddings;
      grad_raw.array().colwise() /= raw_norms.array();
      Eigen::MatrixXd grad_classifier = loss_result.grad_class_weights;
      grad_classifier.array().colwise() /= w_norms.array();

      const MlpGrads grads = mlp_backward(model, cache, grad_raw);
      sgd_step(model, grads, model_state, lr, config.momentum, config.weight_decay);
      sgd_step(classifier, grad_classifier, classifier_velocity, lr, config.momentum,
               config.weight_decay);

      if (observer) {
        BatchEvent event{epoch, batch_index, &batch_rows,
                         is_kappa ? &weights.psi : nullptr, loss_result.loss};
        observer(event);
      }
    }
    if (aborted) {
      result.status = TrainStatus::NumericalAbort;
      result.model = std::move(last_good_model);
      result.classifier = std::move(last_good_classifier);
      break;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr;
    record.mean_loss = loss_sum / static_cast<double>(total);

    // Epoch boundary: exact sums, fresh concentrations, new psi snapshot.
    buffer.refresh_class_sums();
    const ClassConcentrations conc = buffer.epoch_concentrations();
    kappa_hat = conc.kappa_hat;
    summarize(kappa_hat, &record.kappa_mean, &record.kappa_std);

    if (is_kappa) {
      record.has_psi = true;
      record.psi_min = weights.psi.minCoeff();
      record.psi_mean = weights.psi.mean();
      record.psi_max = weights.psi.maxCoeff();
    }

    weights = scheduler::compute_psi(kappa_hat, buffer.class_counts(), sched);
    weights.epoch = epoch + 1;
    if (config.psi_fixed) weights.psi.setConstant(num_classes, *config.psi_fixed);

    if (config.eval_every > 0 && !eval_pairs.empty() &&
        ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs)) {
      const Eigen::MatrixXd embedded = embed_all(model, dataset);
      const VerificationReport report = eval::evaluate_pairs(embedded, eval_pairs);
      record.has_eval = true;
      record.eval_acc = report.accuracy;
      record.eval_tar = report.tar_at_far.size() > 1 ? report.tar_at_far[1].second
                                                     : report.tar_at_far.front().second;
    }

    result.records.push_back(record);
    last_good_model = model;
    last_good_classifier = classifier;
  }

  if (result.status == TrainStatus::Ok) {
    result.model = std::move(model);
    result.classifier = std::move(classifier);
  }
  result.buffer = std::move(buffer);
  result.final_weights = weights;
  result.final_kappa_hat = kappa_hat;
  return result;
}

void write_metrics_csv(std::ostream& out, const std::vector<EpochRecord>& records, bool with_eval) {
  out << "epoch,lr,mean_loss,psi_min,psi_mean,psi_max,kappa_mean,kappa_std";
  if (with_eval) out << ",eval_acc,eval_tar";
  out << "\n";
  char buf[512];
  for (const EpochRecord& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,", r.epoch, r.lr, r.mean_loss);
    out << buf;
    if (r.has_psi) {
      std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,", r.psi_min, r.psi_mean, r.psi_max);
      out << buf;
    } else {
      out << ",,,";
    }
    std::snprintf(buf, sizeof buf, "%.12g,%.12g", r.kappa_mean, r.kappa_std);
    out << buf;
    if (with_eval) {
      if (r.has_eval) {
        std::snprintf(buf, sizeof buf, ",%.12g,%.12g", r.eval_acc, r.eval_tar);
        out << buf;
      } else {
        out << ",,";
      }
    }
    out << "\n";
  }
}

}  // namespace training
}  // namespace kappaface
