#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "kappaface/errors.hpp"

// Epoch-end margin calibration: standardized class concentrations and
// population counts are blended into a per-class scaler psi in [0, 1] that
// multiplies the base angular margin. Everything is a pure function over
// immutable snapshots; a ClassWeights value is safe to share across threads.

namespace kappaface {

struct SchedulerConfig {
  double temperature = 0.55;  // sigmoid sharpness, in (0, 1]
  double gamma = 0.5;         // population-weight share of psi, in [0, 1]
  double m0 = 0.5;            // base margin in radians, in (0, pi)
  std::uint32_t max_population = 0;  // K; must dominate every class count

  void validate() const;
};

/// Per-class margin calibration snapshot produced once per epoch.
struct ClassWeights {
  Eigen::VectorXd kappa_tilde;  // standardized concentrations
  Eigen::VectorXd w_conc;       // 1 - sigmoid(kappa_tilde * T)
  Eigen::VectorXd w_pop;        // (cos(pi * n_c / K) + 1) / 2
  Eigen::VectorXd psi;          // gamma * w_pop + (1 - gamma) * w_conc
  int epoch = 0;

  Eigen::Index num_classes() const { return psi.size(); }
};

namespace scheduler {

/// Zero-mean, unit population-standard-deviation transform; order
/// preserving. All-equal input (sigma = 0) maps to all zeros.
Eigen::VectorXd standardize_kappas(const Eigen::Ref<const Eigen::VectorXd>& kappa_hat);

/// 1 - sigmoid(kappa_tilde * T): strictly decreasing, 0.5 at zero.
double concentration_weight(double kappa_tilde, double temperature);

/// (cos(pi * n_c / K) + 1) / 2: 1 at n_c = 0, 0 at n_c = K.
double population_weight(std::uint32_t n_c, std::uint32_t max_population);

/// Full pipeline over raw concentrations: standardize, weight, blend.
ClassWeights compute_psi(const Eigen::Ref<const Eigen::VectorXd>& kappa_hat,
                         const std::vector<std::uint32_t>& populations,
                         const SchedulerConfig& config);

/// Same blend for concentrations that are already standardized against an
/// external class population (they are used as kappa_tilde verbatim).
ClassWeights compute_psi_standardized(const Eigen::Ref<const Eigen::VectorXd>& kappa_tilde,
                                      const std::vector<std::uint32_t>& populations,
                                      const SchedulerConfig& config);

/// Epoch-0 snapshot: populations are known before training, concentrations
/// are not, so w_conc is pinned at 0.5 (the sigmoid's value at the mean).
ClassWeights warm_start(const std::vector<std::uint32_t>& populations,
                        const SchedulerConfig& config);

/// CSV report, one row per class:
/// class_id,n_c,kappa_hat,kappa_tilde,w_conc,w_pop,psi
/// with 6 significant digits. `margin_m0` >= 0 appends a trailing `margin`
/// column holding psi * m0.
void write_weights_csv(std::ostream& out, const ClassWeights& weights,
                       const Eigen::Ref<const Eigen::VectorXd>& kappa_hat,
                       const std::vector<std::uint32_t>& populations, double margin_m0 = -1.0);

}  // namespace scheduler
}  // namespace kappaface
