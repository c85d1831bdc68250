#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "kappaface/errors.hpp"
#include "kappaface/rng.hpp"

// Directional statistics on the unit sphere S^{d-1}. Everything here is a
// pure function of its arguments (the sampler's state is the explicit seed
// or caller-owned Rng), so concurrent calls need no synchronization.

namespace kappaface {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace sphere {

constexpr double kZeroNormEps = 1e-12;
constexpr double kKappaCap = 1e7;
constexpr double kResultantClamp = 1.0 - 1e-9;

/// von Mises-Fisher parameters on S^{d-1}: unit mean direction and
/// nonnegative finite concentration.
struct VmfParams {
  VectorXd mean_direction;
  double kappa = 0.0;

  void validate() const;
  Eigen::Index dim() const { return mean_direction.size(); }
};

bool is_unit(const Eigen::Ref<const VectorXd>& v, double tol = 1e-9);

/// v / ||v||_2. Throws ZeroVector when ||v||_2 <= eps, InvalidDimension
/// when v has fewer than 2 coordinates.
VectorXd normalize(const Eigen::Ref<const VectorXd>& v, double eps = kZeroNormEps);

/// Row-wise normalization of a batch; same error contract per row.
MatrixXd normalize_rows(const Eigen::Ref<const MatrixXd>& m, double eps = kZeroNormEps);

/// ||sum of rows||_2 / n for n unit rows; lies in [0, 1].
double resultant_length(const Eigen::Ref<const MatrixXd>& samples);
double resultant_length(const std::vector<VectorXd>& samples);

/// Concentration from mean resultant length: r(d - r^2) / (1 - r^2).
/// r_bar is clamped to kResultantClamp from above and the result is capped
/// at kKappaCap. Strictly increasing in r_bar below the clamp.
double estimate_kappa(double r_bar, int d);

/// log I_nu(x), the modified Bessel function of the first kind, for
/// nu >= 0 and x >= 0. Power series below x = max(20, nu); uniform
/// asymptotic expansion above (large-argument series when nu < 1).
double log_bessel_i(double nu, double x);

/// log of the vMF normalizing constant C_d(kappa) so that the density is
/// C_d(kappa) * exp(kappa * dot(mean, x)).
double vmf_log_normalizer(int d, double kappa);

/// log p(x | mean_direction, kappa); depends on x only through the dot
/// product with the mean direction.
double vmf_log_density(const Eigen::Ref<const VectorXd>& x, const VmfParams& params);

/// n i.i.d. vMF draws as unit rows, by the Wood (1994) rejection scheme:
/// axial cosine from the beta-envelope rejection step, tangential part
/// uniform, then a Householder reflection carries the pole to the mean
/// direction. kappa = 0 degrades to the uniform law through the same path.
MatrixXd sample_vmf(const VmfParams& params, int n, Rng& rng);
MatrixXd sample_vmf(const VmfParams& params, int n, std::uint64_t seed);

/// n uniform draws on S^{d-1} (normalized Gaussians).
MatrixXd sample_uniform_sphere(int d, int n, Rng& rng);

}  // namespace sphere
}  // namespace kappaface
