#pragma once

#include "estimators.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "simulate.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace dtdens {

struct BootstrapOptions
{
  std::size_t replicates = 250;
  double level = 0.95;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

//! Pointwise percentile bands.
struct BootstrapBands
{
  EvalGrid grid;
  std::vector<double> lower;
  std::vector<double> upper;
  DensityEstimate point;
  std::size_t replicates_used = 0;
  std::size_t replicates_failed = 0;
  //! Successful replicate curves, ordered by replicate index.
  std::vector<std::vector<double>> curves;
};

namespace detail {

// Records in a canonical order so the resampling does not depend on the order
// in which the input file listed them.
inline TruncatedSample
canonical_order(const TruncatedSample& sample)
{
  auto recs = sample.records();
  std::sort(recs.begin(), recs.end(), [](const Record& a, const Record& b) {
    if (a.x != b.x)
      return a.x < b.x;
    if (a.u != b.u)
      return a.u < b.u;
    return a.v < b.v;
  });
  return validate_sample(std::move(recs), sample.domain());
}

} // namespace detail

//! Percentiles at (1 - level)/2 and 1 - (1 - level)/2 across the curves.
inline std::pair<std::vector<double>, std::vector<double>>
percentile_bands(const std::vector<std::vector<double>>& curves, double level)
{
  const std::size_t G = curves.front().size();
  std::vector<double> lo(G), hi(G), col(curves.size());
  const double tail = 0.5 * (1.0 - level);
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t r = 0; r < curves.size(); ++r)
      col[r] = curves[r][g];
    std::sort(col.begin(), col.end());
    lo[g] = quantile_sorted(col, tail);
    hi[g] = quantile_sorted(col, 1.0 - tail);
  }
  return { lo, hi };
}

//! Simple bootstrap: resample (u, v, x) triplets jointly with replacement and
//! re-run `estimator` on each resample. `estimator(sample)` returns the
//! density values on `grid`, or std::nullopt / throws dtdens::Error to mark
//! the replicate as failed.
template<class Estimator>
BootstrapBands
bootstrap_bands(const TruncatedSample& sample, Estimator&& estimator,
                const EvalGrid& grid, const BootstrapOptions& opts = {})
{
  if (opts.replicates < 1)
    detail::fail_config("InvalidReplicates", "need at least one replicate");
  if (!(opts.level > 0.0 && opts.level < 1.0))
    detail::fail_config("InvalidLevel", "level must be in (0, 1)");

  const TruncatedSample base = detail::canonical_order(sample);
  std::optional<std::vector<double>> point = estimator(base);
  if (!point)
    detail::fail_numerical("EstimatorFailed",
                           "estimator failed on the original sample");

  const std::size_t B = opts.replicates;
  std::vector<std::optional<std::vector<double>>> slots(B);
  parallel_for(B, opts.workers, [&](std::size_t b) {
    std::mt19937_64 rng(mix_seed(opts.seed, b));
    std::uniform_int_distribution<std::size_t> pick(0, base.size() - 1);
    std::vector<Record> recs(base.size());
    for (auto& r : recs)
      r = base[pick(rng)];
    try {
      slots[b] = estimator(validate_sample(std::move(recs), base.domain()));
    } catch (const Error& e) {
      if (e.category() == ErrorCategory::configuration)
        throw;
      slots[b] = std::nullopt;
    }
  });

  BootstrapBands out{ grid, {}, {}, { grid, *point }, 0, 0, {} };
  for (auto& s : slots) {
    if (s)
      out.curves.push_back(std::move(*s));
    else
      ++out.replicates_failed;
  }
  out.replicates_used = out.curves.size();
  if (2 * out.replicates_failed > B)
    detail::fail_numerical("TooManyFailures",
                           std::to_string(out.replicates_failed) + " of " +
                             std::to_string(B) + " replicates failed");
  std::tie(out.lower, out.upper) = percentile_bands(out.curves, opts.level);
  return out;
}

//! Bands for one of the built-in estimators. With `freeze_tuning`, lambda or
//! h is taken from the fit to the original data instead of being re-selected
//! in every replicate. Degenerate NPMLE replicates count as failures.
inline BootstrapBands
bootstrap_bands(const TruncatedSample& sample, MethodSpec spec,
                const EvalGrid& grid, const BootstrapOptions& opts = {},
                bool freeze_tuning = false)
{
  if (freeze_tuning) {
    auto original = run_estimator(detail::canonical_order(sample), spec, grid);
    if (spec.method == Method::kde)
      spec.bandwidth = original.bandwidth;
    else
      spec.lambda = original.lambda;
  }
  auto est = [&](const TruncatedSample& s) -> std::optional<std::vector<double>> {
    auto res = run_estimator(s, spec, grid);
    if (res.degenerate)
      return std::nullopt;
    return std::move(res.estimate.values);
  };
  return bootstrap_bands(sample, est, grid, opts);
}

} // namespace dtdens
