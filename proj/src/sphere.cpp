#include "kappaface/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kappaface::sphere {

namespace {

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

// Ascending series sum_k (x/2)^{nu+2k} / (k! Gamma(nu+k+1)), accumulated in
// log space. Valid for any nu >= 0; used for x < max(20, nu).
double log_bessel_series(double nu, double x) {
  const double log_half_x = std::log(0.5 * x);
  double log_term = nu * log_half_x - std::lgamma(nu + 1.0);
  double log_sum = log_term;
  for (int k = 1; k < 10000; ++k) {
    log_term += 2.0 * log_half_x - std::log(static_cast<double>(k)) - std::log(nu + k);
    log_sum = log_add_exp(log_sum, log_term);
    if (log_term < log_sum - 60.0 && 4.0 * k * (nu + k) > x * x) break;
  }
  return log_sum;
}

// Olver's uniform asymptotic expansion of I_nu(nu z) for large nu,
// truncated after u_5. The expansion parameter behaves like
// 1/sqrt(nu^2 + x^2), so it also covers moderate nu with large x.
double log_bessel_olver(double nu, double x) {
  const double z = x / nu;
  const double root = std::sqrt(1.0 + z * z);
  const double t = 1.0 / root;
  const double eta = root + std::log(z / (1.0 + root));
  const double t2 = t * t;
  const double u1 = t * (3.0 - 5.0 * t2) / 24.0;
  const double u2 = t2 * (81.0 + t2 * (-462.0 + 385.0 * t2)) / 1152.0;
  const double u3 = t * t2 * (30375.0 + t2 * (-369603.0 + t2 * (765765.0 - 425425.0 * t2))) / 414720.0;
  const double u4 = t2 * t2 *
                    (4465125.0 +
                     t2 * (-94121676.0 + t2 * (349922430.0 + t2 * (-446185740.0 + 185910725.0 * t2)))) /
                    39813120.0;
  const double u5 = t * t2 * t2 *
                    (1519035525.0 +
                     t2 * (-49286948607.0 +
                           t2 * (284499769554.0 + t2 * (-614135872350.0 + 458236535715.0 * t2)))) /
                    6688604160.0;
  const double inv_nu = 1.0 / nu;
  double series = u5;
  for (double u : {u4, u3, u2, u1, 1.0}) series = series * inv_nu + u;
  return nu * eta - 0.5 * std::log(2.0 * M_PI * nu) - 0.25 * std::log1p(z * z) + std::log(series);
}

// Hankel large-argument expansion, used when nu < 1 (where the Olver form
// degenerates) and x is large.
double log_bessel_large_arg(double nu, double x) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= 12; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (static_cast<double>(k) * 8.0 * x);
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return x - 0.5 * std::log(2.0 * M_PI * x) + std::log(sum);
}

}  // namespace

void VmfParams::validate() const {
  if (mean_direction.size() < 2) raise(ErrorKind::InvalidDimension, "vMF needs d >= 2");
  if (!is_unit(mean_direction, 1e-6)) raise(ErrorKind::NonUnitInput, "vMF mean direction must be unit");
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    raise(ErrorKind::InvalidArgument, "kappa must be finite and nonnegative");
  }
}

bool is_unit(const Eigen::Ref<const VectorXd>& v, double tol) {
  return std::abs(v.norm() - 1.0) <= tol;
}

VectorXd normalize(const Eigen::Ref<const VectorXd>& v, double eps) {
  if (v.size() < 2) raise(ErrorKind::InvalidDimension, "need d >= 2");
  const double norm = v.norm();
  if (norm <= eps) raise(ErrorKind::ZeroVector, "norm " + std::to_string(norm) + " below epsilon");
  return v / norm;
}

MatrixXd normalize_rows(const Eigen::Ref<const MatrixXd>& m, double eps) {
  MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.row(i) = normalize(m.row(i).transpose(), eps).transpose();
  }
  return out;
}

double resultant_length(const Eigen::Ref<const MatrixXd>& samples) {
  if (samples.rows() == 0) raise(ErrorKind::EmptySet, "resultant of an empty sample set");
  const VectorXd sum = samples.colwise().sum().transpose();
  return sum.norm() / static_cast<double>(samples.rows());
}

double resultant_length(const std::vector<VectorXd>& samples) {
  if (samples.empty()) raise(ErrorKind::EmptySet, "resultant of an empty sample set");
  const Eigen::Index d = samples.front().size();
  VectorXd sum = VectorXd::Zero(d);
  for (const auto& v : samples) {
    if (v.size() != d) raise(ErrorKind::DimensionMismatch, "mixed dimensions in sample set");
    sum += v;
  }
  return sum.norm() / static_cast<double>(samples.size());
}

double estimate_kappa(double r_bar, int d) {
  if (d < 2) raise(ErrorKind::InvalidDimension, "estimate_kappa needs d >= 2");
  if (r_bar < 0.0 || r_bar > 1.0) {
    raise(ErrorKind::InvalidArgument, "r_bar " + std::to_string(r_bar) + " outside [0, 1]");
  }
  const double r = std::min(r_bar, kResultantClamp);
  const double kappa = r * (static_cast<double>(d) - r * r) / (1.0 - r * r);
  return std::min(kappa, kKappaCap);
}

double log_bessel_i(double nu, double x) {
  if (nu < 0.0 || x < 0.0) raise(ErrorKind::InvalidArgument, "log_bessel_i needs nu, x >= 0");
  if (x == 0.0) return nu == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (x < std::max(20.0, nu)) return log_bessel_series(nu, x);
  if (nu < 1.0) return log_bessel_large_arg(nu, x);
  return log_bessel_olver(nu, x);
}

double vmf_log_normalizer(int d, double kappa) {
  if (d < 2) raise(ErrorKind::InvalidDimension, "vMF needs d >= 2");
  const double dd = static_cast<double>(d);
  const double nu = 0.5 * dd - 1.0;
  // kappa -> 0 limit is the reciprocal surface area of S^{d-1}.
  const double log_uniform = std::lgamma(0.5 * dd) - std::log(2.0) - 0.5 * dd * std::log(M_PI);
  if (kappa == 0.0) return log_uniform;
  if (kappa < std::max(20.0, nu)) {
    // Fold kappa^nu against the series' (kappa/2)^nu analytically; what is
    // left is stable down to arbitrarily small kappa.
    const double log_half_k = std::log(0.5 * kappa);
    const double log_scaled_series = log_bessel_series(nu, kappa) - nu * log_half_k;
    return nu * std::log(2.0) - 0.5 * dd * std::log(2.0 * M_PI) - log_scaled_series;
  }
  return nu * std::log(kappa) - 0.5 * dd * std::log(2.0 * M_PI) - log_bessel_i(nu, kappa);
}

double vmf_log_density(const Eigen::Ref<const VectorXd>& x, const VmfParams& params) {
  params.validate();
  if (x.size() != params.dim()) {
    raise(ErrorKind::DimensionMismatch, "x has dimension " + std::to_string(x.size()) +
                                            ", mean direction has " + std::to_string(params.dim()));
  }
  const double dot = params.mean_direction.dot(x);
  return vmf_log_normalizer(static_cast<int>(params.dim()), params.kappa) + params.kappa * dot;
}

MatrixXd sample_uniform_sphere(int d, int n, Rng& rng) {
  if (d < 2) raise(ErrorKind::InvalidDimension, "need d >= 2");
  if (n < 1) raise(ErrorKind::InvalidArgument, "need n >= 1");
  MatrixXd out(n, d);
  VectorXd v(d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) v[j] = rng.normal();
    out.row(i) = normalize(v).transpose();
  }
  return out;
}

MatrixXd sample_vmf(const VmfParams& params, int n, Rng& rng) {
  params.validate();
  if (n < 1) raise(ErrorKind::InvalidArgument, "need n >= 1");
  const int d = static_cast<int>(params.dim());
  const double kappa = params.kappa;
  const double dm1 = static_cast<double>(d - 1);

  // Wood's envelope constants.
  const double b = dm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + dm1 * dm1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + dm1 * std::log(1.0 - x0 * x0);

  // Householder reflection mapping e_1 onto the mean direction.
  VectorXd pole = VectorXd::Zero(d);
  pole[0] = 1.0;
  VectorXd house = pole - params.mean_direction;
  const double house_norm = house.norm();
  const bool reflect = house_norm > kZeroNormEps;
  if (reflect) house /= house_norm;

  MatrixXd out(n, d);
  VectorXd tangent(d - 1);
  for (int i = 0; i < n; ++i) {
    double w;
    for (;;) {
      const double z = rng.beta(0.5 * dm1, 0.5 * dm1);
      const double u = rng.uniform();
      w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
      if (kappa * w + dm1 * std::log(1.0 - x0 * w) - c >= std::log(u)) break;
    }
    for (int j = 0; j < d - 1; ++j) tangent[j] = rng.normal();
    tangent.normalize();

    VectorXd sample(d);
    sample[0] = w;
    sample.tail(d - 1) = std::sqrt(std::max(0.0, 1.0 - w * w)) * tangent;
    if (reflect) sample -= 2.0 * house.dot(sample) * house;
    out.row(i) = normalize(sample).transpose();
  }
  return out;
}

MatrixXd sample_vmf(const VmfParams& params, int n, std::uint64_t seed) {
  Rng rng(seed);
  return sample_vmf(params, n, rng);
}

}  // namespace kappaface::sphere
