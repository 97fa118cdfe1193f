#pragma once

#include "estimators.hpp"
#include "model.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace dtdens {

enum class ScenarioId
{
  S1,
  S2,
  S3,
  S4
};

enum class TauMode
{
  constant,
  random
};

inline std::string
to_string(ScenarioId id)
{
  return "S" + std::to_string(static_cast<int>(id) + 1);
}

inline std::string
to_string(TauMode m)
{
  return m == TauMode::constant ? "constant" : "random";
}

inline ScenarioId
parse_scenario(const std::string& s)
{
  if (s == "S1")
    return ScenarioId::S1;
  if (s == "S2")
    return ScenarioId::S2;
  if (s == "S3")
    return ScenarioId::S3;
  if (s == "S4")
    return ScenarioId::S4;
  detail::fail_config("UnknownScenario", "unknown scenario '" + s + "'");
}

inline TauMode
parse_tau_mode(const std::string& s)
{
  if (s == "constant")
    return TauMode::constant;
  if (s == "random")
    return TauMode::random;
  detail::fail_config("UnknownTauMode", "tau must be constant or random");
}

//! Simulation design:
//!   S1  X ~ Unif(0,1),        U ~ Unif(-1/3, 1)
//!   S2  X ~ Unif(0,1),        sqrt(3/4 (U + 1/3)) ~ Unif(0,1)
//!   S3  X ~ Beta(3/2, 5),     U as in S2
//!   S4  X ~ Normal(1/2, 1/10), U ~ Beta(20, 20)
//! with V = U + tau, tau = 1/3 or tau ~ Unif(1/3 - 1/20, 1/3 + 1/20).
struct Scenario
{
  ScenarioId id = ScenarioId::S1;
  TauMode tau_mode = TauMode::constant;
  std::size_t n = 200;
  std::uint64_t seed = 0;

  std::string label() const { return to_string(id) + "/" + to_string(tau_mode); }
};

//! A single draw of (U, V, X) before the truncation filter.
struct Proposal
{
  Record record;
  bool accepted;
};

namespace detail {

inline double
draw_beta(std::mt19937_64& rng, double a, double b)
{
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  double x = ga(rng);
  double y = gb(rng);
  return x / (x + y);
}

} // namespace detail

inline Proposal
propose(const Scenario& sc, std::mt19937_64& rng)
{
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double x = 0.0;
  switch (sc.id) {
    case ScenarioId::S1:
    case ScenarioId::S2:
      x = unif(rng);
      break;
    case ScenarioId::S3:
      x = detail::draw_beta(rng, 1.5, 5.0);
      break;
    case ScenarioId::S4:
      x = std::normal_distribution<double>(0.5, 0.1)(rng);
      break;
  }
  double u = 0.0;
  switch (sc.id) {
    case ScenarioId::S1:
      u = -1.0 / 3.0 + (4.0 / 3.0) * unif(rng);
      break;
    case ScenarioId::S2:
    case ScenarioId::S3: {
      double w = unif(rng);
      u = (4.0 / 3.0) * w * w - 1.0 / 3.0;
      break;
    }
    case ScenarioId::S4:
      u = detail::draw_beta(rng, 20.0, 20.0);
      break;
  }
  double tau = sc.tau_mode == TauMode::constant
                 ? 1.0 / 3.0
                 : (1.0 / 3.0 - 0.05) + 0.1 * unif(rng);
  double v = u + tau;
  // the domain is [0, 1]; the normal law of S4 is restricted to it as well
  bool ok = u <= x && x <= v && 0.0 <= x && x <= 1.0;
  return { { u, v, x }, ok };
}

//! Rejection sampler for the observable law of (U, V, X) given U <= X <= V.
inline TruncatedSample
sample_scenario(const Scenario& sc)
{
  if (sc.n < 1)
    detail::fail_config("InvalidSampleSize", "n must be at least 1");
  std::mt19937_64 rng(sc.seed);
  std::vector<Record> out;
  out.reserve(sc.n);
  std::size_t misses = 0;
  while (out.size() < sc.n) {
    auto p = propose(sc, rng);
    if (p.accepted) {
      out.push_back(p.record);
      misses = 0;
    } else if (++misses >= 1000000) {
      detail::fail_numerical("AcceptanceStall",
                             "1e6 consecutive rejections in " + sc.label());
    }
  }
  return validate_sample(std::move(out), Interval{ 0.0, 1.0 });
}

struct AcceptanceStats
{
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  //! Per equal-width x-bin on [0, 1]: proposals and acceptances.
  std::vector<std::size_t> bin_proposals;
  std::vector<std::size_t> bin_accepted;

  double rate() const
  {
    return static_cast<double>(accepted) / static_cast<double>(proposals);
  }
  std::vector<double> bin_rates() const
  {
    std::vector<double> r(bin_proposals.size());
    for (std::size_t b = 0; b < r.size(); ++b)
      r[b] = static_cast<double>(bin_accepted[b]) /
             static_cast<double>(bin_proposals[b]);
    return r;
  }
};

//! Empirical selection probability overall and conditional on x-bins.
inline AcceptanceStats
acceptance_stats(const Scenario& sc, std::size_t proposals, std::size_t bins)
{
  std::mt19937_64 rng(sc.seed);
  AcceptanceStats st;
  st.proposals = proposals;
  st.bin_proposals.assign(bins, 0);
  st.bin_accepted.assign(bins, 0);
  for (std::size_t i = 0; i < proposals; ++i) {
    auto p = propose(sc, rng);
    double x = p.record.x;
    if (p.accepted)
      ++st.accepted;
    if (x < 0.0 || x > 1.0)
      continue;
    auto b = std::min(bins - 1, static_cast<std::size_t>(x * bins));
    ++st.bin_proposals[b];
    if (p.accepted)
      ++st.bin_accepted[b];
  }
  return st;
}

//! Unnormalized target density of X. For S4 this is the plain normal density.
inline double
scenario_pdf(ScenarioId id, double x)
{
  switch (id) {
    case ScenarioId::S1:
    case ScenarioId::S2:
      return (0.0 <= x && x <= 1.0) ? 1.0 : 0.0;
    case ScenarioId::S3: {
      if (x < 0.0 || x > 1.0)
        return 0.0;
      const double log_beta =
        std::lgamma(1.5) + std::lgamma(5.0) - std::lgamma(6.5);
      return std::sqrt(x) * std::pow(1.0 - x, 4) * std::exp(-log_beta);
    }
    case ScenarioId::S4: {
      double z = (x - 0.5) / 0.1;
      return std::exp(-0.5 * z * z) / (0.1 * std::sqrt(2.0 * std::numbers::pi));
    }
  }
  return 0.0;
}

//! True density on the grid; S4 is renormalized to its mass on [0, 1].
inline DensityEstimate
true_density(ScenarioId id, const EvalGrid& grid)
{
  double scale = 1.0;
  if (id == ScenarioId::S4) {
    // P(0 <= X <= 1) = erf(5 / sqrt(2))
    scale = 1.0 / std::erf(5.0 / std::numbers::sqrt2);
  }
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    v[i] = scale * scenario_pdf(id, grid[i]);
  return { grid, v };
}

//! Integrated squared error by the trapezoid rule on the shared grid.
inline double
ise(const DensityEstimate& estimate, const DensityEstimate& truth)
{
  if (!(estimate.grid == truth.grid) ||
      estimate.values.size() != truth.values.size())
    detail::fail_config("GridMismatch", "estimate and truth use different grids");
  std::vector<double> sq(truth.values.size());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    double d = estimate.values[i] - truth.values[i];
    sq[i] = d * d;
  }
  return trapezoid_integral(sq, truth.grid);
}

// Study harness --------------------------------------------------------------

struct TrialRecord
{
  std::string scenario; // e.g. "S2/constant"
  std::size_t n = 0;
  std::size_t trial = 0;
  Method method = Method::spline_cor;
  double ise = std::numeric_limits<double>::quiet_NaN(); // NaN when errored
  bool failed = false; // errored, or returned a degenerate estimate
  std::string error;   // error name when errored
};

struct MethodSummary
{
  double mise = 0.0;
  double sdise = 0.0;
  double mdise = 0.0;
  double iqrise = 0.0;
  std::size_t trials = 0;
  std::size_t failures = 0; // errors + degenerate estimates
  std::size_t errors = 0;   // excluded from every statistic
};

struct StudyReport
{
  //! Keyed by (scenario label, n, method name).
  std::map<std::tuple<std::string, std::size_t, std::string>, MethodSummary>
    summaries;
  std::vector<TrialRecord> log;

  const MethodSummary& at(const Scenario& sc, Method m) const
  {
    return summaries.at({ sc.label(), sc.n, to_string(m) });
  }
};

//! Type-7 sample quantile of sorted data.
inline double
quantile_sorted(const std::vector<double>& sorted, double p)
{
  if (sorted.empty())
    return std::numeric_limits<double>::quiet_NaN();
  double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  auto lo = static_cast<std::size_t>(std::floor(h));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

//! Summary statistics over the ISEs of the trials that returned an estimate.
inline MethodSummary
summarize(const std::vector<TrialRecord>& trials)
{
  MethodSummary s;
  s.trials = trials.size();
  std::vector<double> v;
  for (const auto& t : trials) {
    if (t.failed)
      ++s.failures;
    if (std::isnan(t.ise)) {
      ++s.errors;
      continue;
    }
    v.push_back(t.ise);
  }
  if (v.empty()) {
    s.mise = s.sdise = s.mdise = s.iqrise =
      std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0.0;
  for (double e : v)
    sum += e;
  s.mise = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double e : v)
    ss += (e - s.mise) * (e - s.mise);
  s.sdise = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  std::sort(v.begin(), v.end());
  s.mdise = quantile_sorted(v, 0.5);
  s.iqrise = quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
  return s;
}

//! Groups a trial log by (scenario, n, method) and summarizes each group.
inline StudyReport
aggregate(std::vector<TrialRecord> log)
{
  std::map<std::tuple<std::string, std::size_t, std::string>,
           std::vector<TrialRecord>>
    groups;
  for (const auto& t : log)
    groups[{ t.scenario, t.n, to_string(t.method) }].push_back(t);
  StudyReport rep;
  for (const auto& [key, trials] : groups)
    rep.summaries[key] = summarize(trials);
  rep.log = std::move(log);
  return rep;
}

struct StudyOptions
{
  std::size_t trials = 250;
  std::size_t workers = 1;
  std::size_t grid_count = 101;
  MethodSpec base; // method field is overridden per method
};

//! Monte Carlo study. Trial t of scenario s uses the seed
//! mix_seed(s.seed, t), so results do not depend on the worker count.
inline StudyReport
run_study(const std::vector<Scenario>& scenarios,
          const std::vector<Method>& methods, const StudyOptions& opts)
{
  if (opts.trials < 1)
    detail::fail_config("InvalidTrials", "need at least one trial");
  if (methods.empty() || scenarios.empty())
    detail::fail_config("InvalidStudy", "no scenarios or methods requested");
  const EvalGrid grid(Interval{ 0.0, 1.0 }, opts.grid_count);
  const std::size_t per_scenario = opts.trials;
  const std::size_t tasks = scenarios.size() * per_scenario;
  std::vector<std::vector<TrialRecord>> slots(tasks);

  parallel_for(tasks, opts.workers, [&](std::size_t task) {
    const auto& base = scenarios[task / per_scenario];
    const std::size_t trial = task % per_scenario;
    Scenario sc = base;
    sc.seed = mix_seed(base.seed, trial);
    auto sample = sample_scenario(sc);
    auto truth = true_density(sc.id, grid);
    for (Method m : methods) {
      TrialRecord rec{ base.label(), base.n, trial, m };
      MethodSpec spec = opts.base;
      spec.method = m;
      try {
        auto res = run_estimator(sample, spec, grid);
        rec.ise = ise(res.estimate, truth);
        rec.failed = res.degenerate;
      } catch (const Error& e) {
        if (e.category() == ErrorCategory::configuration)
          throw;
        rec.failed = true;
        rec.error = e.name();
      }
      slots[task].push_back(std::move(rec));
    }
  });

  std::vector<TrialRecord> log;
  for (auto& s : slots)
    for (auto& r : s)
      log.push_back(std::move(r));
  return aggregate(std::move(log));
}

// Persistence ------------------------------------------------------------------

inline void
write_trial_log(std::ostream& out, const std::vector<TrialRecord>& log)
{
  out << "scenario,n,trial,method,ise,failed,error\n";
  out << std::setprecision(17);
  for (const auto& t : log) {
    out << t.scenario << ',' << t.n << ',' << t.trial << ','
        << to_string(t.method) << ',';
    if (std::isnan(t.ise))
      out << "NA";
    else
      out << t.ise;
    out << ',' << (t.failed ? 1 : 0) << ',' << t.error << '\n';
  }
}

inline std::vector<TrialRecord>
read_trial_log(std::istream& in)
{
  std::vector<TrialRecord> log;
  std::string line;
  std::getline(in, line); // header
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      f.push_back(cell);
    if (f.size() == 6)
      f.emplace_back();
    if (f.size() != 7)
      detail::fail_validation("MalformedCsv", "bad trial log line: " + line);
    TrialRecord t;
    t.scenario = f[0];
    t.n = std::stoul(f[1]);
    t.trial = std::stoul(f[2]);
    t.method = parse_method(f[3]);
    t.ise = f[4] == "NA" ? std::numeric_limits<double>::quiet_NaN()
                         : std::stod(f[4]);
    t.failed = f[5] == "1";
    t.error = f[6];
    log.push_back(std::move(t));
  }
  return log;
}

//! Markdown tables shaped like the mean/SD and median/IQR study tables.
inline std::string
summary_markdown(const StudyReport& rep)
{
  std::ostringstream md;
  md << std::fixed << std::setprecision(4);
  md << "| scenario | n | method | MISE | SDISE | MDISE | IQRISE | failures "
        "| errors |\n";
  md << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& [key, s] : rep.summaries) {
    md << "| " << std::get<0>(key) << " | " << std::get<1>(key) << " | "
       << std::get<2>(key) << " | " << s.mise << " | " << s.sdise << " | "
       << s.mdise << " | " << s.iqrise << " | " << s.failures << " | "
       << s.errors << " |\n";
  }
  return md.str();
}

} // namespace dtdens
