#pragma once

#include "error.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace dtdens {

//! Nodes and weights of an integration rule on a fixed interval.
struct QuadratureRule
{
  std::vector<double> nodes;
  std::vector<double> weights;
};

//! Gauss-Legendre rule with `count` nodes on [lo, hi], nodes ascending.
//!
//! Roots of P_n by Newton iteration from the Chebyshev-like initial guess
//! cos(pi (i - 1/4) / (n + 1/2)).
inline QuadratureRule
gauss_legendre(std::size_t count, double lo = 0.0, double hi = 1.0)
{
  if (count < 1)
    detail::fail_config("InvalidQuadrature", "need at least one node");
  const std::size_t n = count;
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (std::size_t k = 1; k <= n; ++k) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / static_cast<double>(k);
      }
      dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15)
        break;
    }
    double w = 2.0 / ((1.0 - z * z) * dp * dp);
    // z runs from near +1 downwards; store ascending
    rule.nodes[n - 1 - i] = mid + half * z;
    rule.nodes[i] = mid - half * z;
    rule.weights[i] = rule.weights[n - 1 - i] = half * w;
  }
  return rule;
}

} // namespace dtdens
