#pragma once

#include "model.hpp"
#include "npmle.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace dtdens {

enum class BandwidthMethod
{
  dpi1,
  fixed
};

struct Bandwidth
{
  double h;
  BandwidthMethod method = BandwidthMethod::fixed;

  static Bandwidth fixed(double h)
  {
    if (!(h > 0.0) || !std::isfinite(h))
      detail::fail_config("InvalidBandwidth", "bandwidth must be positive");
    return { h, BandwidthMethod::fixed };
  }
};

namespace kernel {

inline constexpr double inv_sqrt_2pi = 0.3989422804014327;

inline double
gauss(double z)
{
  return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

//! Fourth derivative of the standard normal density.
inline double
gauss_d4(double z)
{
  double z2 = z * z;
  return (z2 * z2 - 6.0 * z2 + 3.0) * gauss(z);
}

// R(K) = int K^2 and mu_2(K) = int t^2 K for the Gaussian kernel.
inline constexpr double roughness = 0.28209479177387814; // 1 / (2 sqrt(pi))
inline constexpr double second_moment = 1.0;

} // namespace kernel

//! sum_i w_i K_h(t - x_i) at every t.
inline std::vector<double>
weighted_gaussian_kde(const std::vector<double>& xs,
                      const std::vector<double>& weights, double h,
                      const std::vector<double>& at)
{
  std::vector<double> out(at.size(), 0.0);
  const double inv_h = 1.0 / h;
  for (std::size_t g = 0; g < at.size(); ++g) {
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
      s += weights[i] * kernel::gauss((at[g] - xs[i]) * inv_h);
    out[g] = s * inv_h;
  }
  return out;
}

//! Ordinary kernel estimator n^-1 sum K_h(t - x_i).
inline DensityEstimate
kde_standard(const std::vector<double>& xs, double h, const EvalGrid& grid)
{
  std::vector<double> w(xs.size(), 1.0 / static_cast<double>(xs.size()));
  return { grid, weighted_gaussian_kde(xs, w, h, grid.points()) };
}

//! Kernel estimator for doubly truncated data: the Gaussian kernel convolved
//! with the NPMLE masses. No boundary correction is applied, so mass can leak
//! outside the domain.
inline DensityEstimate
kde_estimate(const TruncatedSample& sample, const NpmleWeights& weights,
             const Bandwidth& bw, const EvalGrid& grid)
{
  if (!weights.converged)
    detail::fail_numerical("DegenerateWeights",
                           "NPMLE did not converge after " +
                             std::to_string(weights.iterations) +
                             " iterations");
  if (!(bw.h > 0.0) || !std::isfinite(bw.h))
    detail::fail_config("InvalidBandwidth", "bandwidth must be positive");
  return { grid,
           weighted_gaussian_kde(sample.xs(), weights.masses, bw.h,
                                 grid.points()) };
}

//! One-stage direct plug-in bandwidth with NPMLE weights.
//!
//! The usual recipe with every empirical average replaced by an average under
//! the NPMLE masses:
//!   sigma  = weighted standard deviation of x
//!   psi6   = -15 / (16 sqrt(pi) sigma^7)                (normal reference)
//!   g      = [-2 K4(0) / (mu2 psi6 n)]^(1/7),  K4(0) = 3 / sqrt(2 pi)
//!   psi4   = sum_i sum_j f_i f_j phi''''_g(x_i - x_j)
//!   h      = [R(K) / (mu2^2 psi4 n)]^(1/5)
//! With f_i = 1/n this is the classical DPI1 selector.
inline Bandwidth
dpi1_bandwidth(const TruncatedSample& sample, const NpmleWeights& weights)
{
  const auto xs = sample.xs();
  const auto& f = weights.masses;
  const double n = static_cast<double>(xs.size());

  double mean = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    mean += f[i] * xs[i];
  double var = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    var += f[i] * (xs[i] - mean) * (xs[i] - mean);
  double sigma = std::sqrt(var);
  if (!(sigma > 0.0))
    detail::fail_numerical("ZeroVariance",
                           "weighted standard deviation of x is zero");

  const double sqrt_pi = std::sqrt(std::numbers::pi);
  const double psi6 = -15.0 / (16.0 * sqrt_pi * std::pow(sigma, 7));
  const double k4_at_0 = 3.0 * kernel::inv_sqrt_2pi;
  const double g =
    std::pow(-2.0 * k4_at_0 / (kernel::second_moment * psi6 * n), 1.0 / 7.0);

  double psi4 = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = i + 1; j < xs.size(); ++j)
      row += f[j] * kernel::gauss_d4((xs[i] - xs[j]) / g);
    psi4 += 2.0 * f[i] * row + f[i] * f[i] * kernel::gauss_d4(0.0);
  }
  psi4 /= std::pow(g, 5);
  if (!(psi4 > 0.0))
    detail::fail_numerical("ZeroVariance",
                           "plug-in curvature estimate is not positive");

  double h = std::pow(kernel::roughness /
                        (kernel::second_moment * kernel::second_moment *
                         psi4 * n),
                      0.2);
  return { h, BandwidthMethod::dpi1 };
}

} // namespace dtdens
