#include "kappaface/margin_scheduler.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace kappaface {

void SchedulerConfig::validate() const {
  if (!(temperature > 0.0 && temperature <= 1.0)) {
    raise(ErrorKind::ConfigMismatch, "temperature must lie in (0, 1]");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) raise(ErrorKind::ConfigMismatch, "gamma must lie in [0, 1]");
  if (!(m0 > 0.0 && m0 < M_PI)) raise(ErrorKind::ConfigMismatch, "m0 must lie in (0, pi)");
  if (max_population == 0) raise(ErrorKind::ConfigMismatch, "max population K must be positive");
}

namespace scheduler {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ClassWeights blend(const Eigen::VectorXd& kappa_tilde, const std::vector<std::uint32_t>& populations,
                   const SchedulerConfig& config) {
  config.validate();
  if (kappa_tilde.size() != static_cast<Eigen::Index>(populations.size())) {
    raise(ErrorKind::DimensionMismatch, "kappa and population vectors differ in length");
  }
  ClassWeights out;
  out.kappa_tilde = kappa_tilde;
  const Eigen::Index c_count = kappa_tilde.size();
  out.w_conc.resize(c_count);
  out.w_pop.resize(c_count);
  out.psi.resize(c_count);
  for (Eigen::Index c = 0; c < c_count; ++c) {
    out.w_conc[c] = concentration_weight(kappa_tilde[c], config.temperature);
    out.w_pop[c] = population_weight(populations[static_cast<std::size_t>(c)], config.max_population);
    out.psi[c] = config.gamma * out.w_pop[c] + (1.0 - config.gamma) * out.w_conc[c];
  }
  return out;
}

}  // namespace

Eigen::VectorXd standardize_kappas(const Eigen::Ref<const Eigen::VectorXd>& kappa_hat) {
  if (kappa_hat.size() == 0) raise(ErrorKind::EmptySet, "no classes to standardize");
  const double mean = kappa_hat.mean();
  const double variance = (kappa_hat.array() - mean).square().mean();
  const double sigma = std::sqrt(variance);
  if (sigma == 0.0) return Eigen::VectorXd::Zero(kappa_hat.size());
  return (kappa_hat.array() - mean) / sigma;
}

double concentration_weight(double kappa_tilde, double temperature) {
  return 1.0 - sigmoid(kappa_tilde * temperature);
}

double population_weight(std::uint32_t n_c, std::uint32_t max_population) {
  if (max_population == 0) raise(ErrorKind::ConfigMismatch, "max population K must be positive");
  if (n_c > max_population) {
    raise(ErrorKind::PopulationExceedsMax,
          "n_c = " + std::to_string(n_c) + " exceeds K = " + std::to_string(max_population));
  }
  const double ratio = static_cast<double>(n_c) / static_cast<double>(max_population);
  return 0.5 * (std::cos(M_PI * ratio) + 1.0);
}

ClassWeights compute_psi(const Eigen::Ref<const Eigen::VectorXd>& kappa_hat,
                         const std::vector<std::uint32_t>& populations,
                         const SchedulerConfig& config) {
  return blend(standardize_kappas(kappa_hat), populations, config);
}

ClassWeights compute_psi_standardized(const Eigen::Ref<const Eigen::VectorXd>& kappa_tilde,
                                      const std::vector<std::uint32_t>& populations,
                                      const SchedulerConfig& config) {
  return blend(kappa_tilde, populations, config);
}

ClassWeights warm_start(const std::vector<std::uint32_t>& populations, const SchedulerConfig& config) {
  return blend(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(populations.size())), populations,
               config);
}

void write_weights_csv(std::ostream& out, const ClassWeights& weights,
                       const Eigen::Ref<const Eigen::VectorXd>& kappa_hat,
                       const std::vector<std::uint32_t>& populations, double margin_m0) {
  const bool with_margin = margin_m0 >= 0.0;
  out << "class_id,n_c,kappa_hat,kappa_tilde,w_conc,w_pop,psi";
  if (with_margin) out << ",margin";
  out << "\n";
  char buf[256];
  for (Eigen::Index c = 0; c < weights.num_classes(); ++c) {
    const double kh = kappa_hat.size() > 0 ? kappa_hat[c] : std::nan("");
    std::snprintf(buf, sizeof buf, "%lld,%u,%.6g,%.6g,%.6g,%.6g,%.6g",
                  static_cast<long long>(c), populations[static_cast<std::size_t>(c)], kh,
                  weights.kappa_tilde[c], weights.w_conc[c], weights.w_pop[c], weights.psi[c]);
    out << buf;
    if (with_margin) {
      std::snprintf(buf, sizeof buf, ",%.6g", weights.psi[c] * margin_m0);
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace scheduler
}  // namespace kappaface
