#pragma once

#include "graph.hpp"
#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace dtdens {

//! Point masses of the NPMLE of F, one per record.
struct NpmleWeights
{
  std::vector<double> masses;
  int iterations = 0;
  bool converged = false;
  double log_likelihood = 0.0;
  //! Log-likelihood after every iteration (only filled on request).
  std::vector<double> trace;
};

struct NpmleOptions
{
  double tol = 1e-8;
  int max_iter = 10000;
  bool record_trace = false;
};

namespace detail {

// For every record i, the records j whose x_j lies in [u_i, v_i].
inline std::vector<std::vector<std::size_t>>
window_members(const TruncatedSample& sample)
{
  return build_graph(sample).adjacency;
}

// Mass of each record's tie group, i.e. dF at x_i.
inline std::vector<double>
tied_mass(const TruncatedSample& sample, const std::vector<double>& masses)
{
  const std::size_t n = sample.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sample[a].x < sample[b].x;
  });
  std::vector<double> out(n);
  for (std::size_t s = 0; s < n;) {
    std::size_t e = s;
    double total = 0.0;
    while (e < n && sample[order[e]].x == sample[order[s]].x)
      total += masses[order[e++]];
    for (std::size_t k = s; k < e; ++k)
      out[order[k]] = total;
    s = e;
  }
  return out;
}

inline std::vector<double>
window_mass(const std::vector<std::vector<std::size_t>>& members,
            const std::vector<double>& masses)
{
  std::vector<double> F(members.size(), 0.0);
  for (std::size_t i = 0; i < members.size(); ++i)
    for (std::size_t j : members[i])
      F[i] += masses[j];
  return F;
}

} // namespace detail

//! Conditional log-likelihood sum_i [log dF(x_i) - log(F(v_i) - F(u_i-))].
inline double
npmle_log_likelihood(const TruncatedSample& sample,
                     const std::vector<double>& masses)
{
  auto members = detail::window_members(sample);
  auto F = detail::window_mass(members, masses);
  auto dF = detail::tied_mass(sample, masses);
  double ll = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i)
    ll += std::log(dF[i]) - std::log(F[i]);
  return ll;
}

//! Efron-Petrosian self-consistency iteration for the NPMLE under double
//! truncation.
//!
//! With F_j the mass currently inside [u_j, v_j], each sweep sets
//! f_i <- 1 / sum_{j : x_i in [u_j, v_j]} 1 / F_j and renormalizes. The update
//! is a minorize-maximize step for the conditional likelihood, so the
//! likelihood never decreases.
//!
//! When the truncation graph is connected but not strongly connected the
//! likelihood has no maximizer: some masses drift to zero, slowly enough
//! (like 1/iteration) to pass the sup-norm test. Such runs are reported with
//! converged = false.
inline NpmleWeights
solve_npmle(const TruncatedSample& sample, const NpmleOptions& opts = {})
{
  const std::size_t n = sample.size();
  const auto graph = build_graph(sample);
  const auto& members = graph.adjacency;
  auto dF_of = [&](const std::vector<double>& m) {
    return detail::tied_mass(sample, m);
  };

  NpmleWeights out;
  std::vector<double> f(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  std::vector<double> F;

  auto loglik = [&](const std::vector<double>& m,
                    const std::vector<double>& Fm) {
    auto dF = dF_of(m);
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      ll += std::log(dF[i]) - std::log(Fm[i]);
    return ll;
  };

  for (int it = 1; it <= opts.max_iter; ++it) {
    F = detail::window_mass(members, f);
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (!(F[j] > 0.0) || !std::isfinite(F[j]))
        detail::fail_numerical("SingularDenominator",
                               "window mass of record " + std::to_string(j) +
                                 " underflowed at iteration " +
                                 std::to_string(it));
      double inv = 1.0 / F[j];
      for (std::size_t i : members[j])
        next[i] += inv;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = 1.0 / next[i];
      total += next[i];
    }
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] /= total;
      delta = std::max(delta, std::abs(next[i] - f[i]));
    }
    f.swap(next);
    out.iterations = it;
    if (opts.record_trace)
      out.trace.push_back(loglik(f, detail::window_mass(members, f)));
    if (delta < opts.tol) {
      out.converged = true;
      break;
    }
  }

  F = detail::window_mass(members, f);
  for (double Fj : F)
    if (!(Fj > 0.0))
      detail::fail_numerical("SingularDenominator",
                             "window mass underflowed at termination");
  out.log_likelihood = loglik(f, F);
  out.masses = std::move(f);
  if (npmle_status(graph).existence == NpmleExistence::does_not_exist)
    out.converged = false;
  return out;
}

//! True when one atom carries more than `threshold` of the mass or the
//! iteration did not converge.
inline bool
is_degenerate(const NpmleWeights& w, double threshold = 0.5)
{
  if (!w.converged)
    return true;
  return std::any_of(w.masses.begin(), w.masses.end(),
                     [&](double m) { return m > threshold; });
}

//! Step-function CDF F_n(t) = sum_{x_i <= t} f_i at every grid point.
inline std::vector<double>
npmle_cdf(const NpmleWeights& w, const TruncatedSample& sample,
          const EvalGrid& grid)
{
  std::vector<std::size_t> order(sample.size());
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sample[a].x < sample[b].x;
  });
  std::vector<double> cdf(grid.size());
  std::size_t k = 0;
  double acc = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    while (k < order.size() && sample[order[k]].x <= grid[g])
      acc += w.masses[order[k++]];
    cdf[g] = std::min(acc, 1.0);
  }
  return cdf;
}

} // namespace dtdens
