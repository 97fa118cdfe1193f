#pragma once

#include "kde.hpp"
#include "npmle.hpp"
#include "spline.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dtdens {

enum class Method
{
  spline_ord,
  spline_cor,
  kde
};

inline std::string
to_string(Method m)
{
  switch (m) {
    case Method::spline_ord:
      return "spline-ord";
    case Method::spline_cor:
      return "spline-cor";
    case Method::kde:
      return "kde";
  }
  return "unknown";
}

inline Method
parse_method(const std::string& s)
{
  if (s == "spline-ord")
    return Method::spline_ord;
  if (s == "spline-cor")
    return Method::spline_cor;
  if (s == "kde")
    return Method::kde;
  detail::fail_config("UnknownMethod", "unknown method '" + s + "'");
}

//! Estimator configuration shared by the CLI, the study harness and the
//! bootstrap.
struct MethodSpec
{
  Method method = Method::spline_cor;
  std::optional<double> lambda;    // splines: fixed lambda, skips CV
  double alpha = 1.4;              // splines: CV penalty multiplier
  SplineBasisOptions basis;        // splines
  std::optional<double> bandwidth; // kde: fixed h, otherwise DPI1
  NpmleOptions npmle;              // kde
  double degenerate_threshold = 0.5;
};

struct EstimateResult
{
  DensityEstimate estimate;
  Method method;
  // spline diagnostics
  std::optional<double> lambda;
  std::vector<CvPoint> cv_trace;
  int newton_iters = 0;
  // kde diagnostics
  std::optional<double> bandwidth;
  bool degenerate = false;
  std::optional<NpmleWeights> weights;
};

inline EstimateResult
run_estimator(const TruncatedSample& sample, const MethodSpec& spec,
              const EvalGrid& grid)
{
  if (spec.method == Method::kde) {
    auto w = solve_npmle(sample, spec.npmle);
    bool degenerate = is_degenerate(w, spec.degenerate_threshold);
    if (!w.converged)
      detail::fail_numerical("DegenerateWeights",
                             "NPMLE did not converge after " +
                               std::to_string(w.iterations) + " iterations");
    Bandwidth bw = spec.bandwidth ? Bandwidth::fixed(*spec.bandwidth)
                                  : dpi1_bandwidth(sample, w);
    EstimateResult out{ kde_estimate(sample, w, bw, grid), spec.method };
    out.bandwidth = bw.h;
    out.degenerate = degenerate;
    out.weights = std::move(w);
    return out;
  }

  SplineOptions opts;
  opts.mode = spec.method == Method::spline_ord ? SplineMode::ordinary
                                                : SplineMode::corrected;
  opts.lambda = spec.lambda;
  opts.alpha = spec.alpha;
  opts.basis = spec.basis;
  auto fit = fit_spline(sample, opts);
  if (!fit.converged)
    detail::fail_numerical("NewtonDiverged",
                           "Newton iteration did not converge at lambda=" +
                             std::to_string(fit.lambda));
  EstimateResult out{ fit.estimate(grid), spec.method };
  out.lambda = fit.lambda;
  out.cv_trace = std::move(fit.cv_trace);
  out.newton_iters = fit.newton_iters;
  return out;
}

} // namespace dtdens
