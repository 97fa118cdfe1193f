#pragma once

// Command-line front end. Kept in a header so the tests can drive it
// in-process; dtdens_cli.cpp only forwards argv.

#include <dtdens/dtdens.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iomanip>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dtdens::cli {

using nlohmann::json;

enum ExitCode : int
{
  ok = 0,
  validation_error = 1,
  numerical_error = 2
};

struct GlobalFlags
{
  std::uint64_t seed = 0;
  std::size_t workers = default_workers();
  std::size_t grid = 101;
  std::string plot_data;
};

inline std::vector<std::string>
split_list(const std::string& s)
{
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty())
      out.push_back(item);
  return out;
}

inline std::optional<Interval>
parse_domain(const std::string& s)
{
  if (s.empty())
    return std::nullopt;
  auto parts = split_list(s);
  if (parts.size() != 2)
    detail::fail_config("InvalidDomain", "--domain expects lo,hi");
  return Interval{ std::stod(parts[0]), std::stod(parts[1]) };
}

inline void
write_plot_data(const std::string& path, const EvalGrid& grid,
                const std::vector<double>& values,
                const std::vector<double>* lower = nullptr,
                const std::vector<double>* upper = nullptr)
{
  if (path.empty())
    return;
  std::ofstream out(path);
  if (!out)
    detail::fail_config("FileNotWritable", "cannot write '" + path + "'");
  out << std::setprecision(17);
  out << (lower ? "x\tvalue\tlower\tupper\n" : "x\tvalue\n");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out << grid[i] << '\t' << values[i];
    if (lower)
      out << '\t' << (*lower)[i] << '\t' << (*upper)[i];
    out << '\n';
  }
}

inline json
cv_trace_json(const std::vector<CvPoint>& trace)
{
  json arr = json::array();
  for (const auto& p : trace)
    arr.push_back({ { "lambda", p.lambda },
                    { "score", std::isfinite(p.score) ? json(p.score)
                                                      : json(nullptr) } });
  return arr;
}

inline json
summary_json(const StudyReport& rep)
{
  json arr = json::array();
  for (const auto& [key, s] : rep.summaries) {
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    arr.push_back({ { "scenario", std::get<0>(key) },
                    { "n", std::get<1>(key) },
                    { "method", std::get<2>(key) },
                    { "mise", num(s.mise) },
                    { "sdise", num(s.sdise) },
                    { "mdise", num(s.mdise) },
                    { "iqrise", num(s.iqrise) },
                    { "trials", s.trials },
                    { "failures", s.failures },
                    { "errors", s.errors } });
  }
  return arr;
}

//! Options shared by `estimate` and `bootstrap`.
struct EstimatorFlags
{
  std::string method;
  std::string bw;
  std::optional<double> lambda;
  double alpha = 1.4;
  std::size_t quad = 200;
  double tol = 1e-8;
  int max_iter = 10000;
  double threshold = 0.5;

  void attach(CLI::App* sub, bool method_required)
  {
    auto* m = sub->add_option("--method", method,
                              "estimator: spline-ord | spline-cor | kde")
                ->check(CLI::IsMember({ "spline-ord", "spline-cor", "kde" }));
    if (method_required)
      m->required();
    sub->add_option("--bw", bw,
                    "kde bandwidth: dpi1 or a positive number [default: dpi1]");
    sub->add_option("--lambda", lambda,
                    "fixed spline smoothing parameter (skips cross-validation)");
    sub->add_option("--alpha", alpha, "cross-validation penalty multiplier")
      ->capture_default_str();
    sub->add_option("--quad", quad, "quadrature nodes for spline integrals")
      ->capture_default_str();
    sub->add_option("--tol", tol, "NPMLE convergence tolerance (kde)")
      ->capture_default_str();
    sub->add_option("--max-iter", max_iter, "NPMLE iteration cap (kde)")
      ->capture_default_str();
    sub->add_option("--threshold", threshold,
                    "mass above which NPMLE weights count as degenerate")
      ->capture_default_str();
  }

  MethodSpec spec() const
  {
    MethodSpec s;
    s.method = parse_method(method);
    bool is_kde = s.method == Method::kde;
    if (!is_kde && !bw.empty())
      detail::fail_config("ConflictingFlags", "--bw only applies to kde");
    if (is_kde && lambda)
      detail::fail_config("ConflictingFlags",
                          "--lambda only applies to spline methods");
    s.lambda = lambda;
    s.alpha = alpha;
    s.basis.quad_size = quad;
    if (!bw.empty() && bw != "dpi1") {
      std::size_t used = 0;
      double h = 0.0;
      try {
        h = std::stod(bw, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != bw.size())
        detail::fail_config("InvalidBandwidth", "--bw must be dpi1 or a number");
      s.bandwidth = Bandwidth::fixed(h).h;
    }
    s.npmle.tol = tol;
    s.npmle.max_iter = max_iter;
    s.degenerate_threshold = threshold;
    return s;
  }
};

inline int
report_error(std::ostream& err, const std::string& name,
             const std::string& message, int code)
{
  json j = { { "error", name }, { "message", message } };
  err << j.dump() << '\n';
  return code;
}

//! Parses argv and runs one subcommand. JSON results go to `out`,
//! diagnostics and errors to `err`.
inline int
run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  CLI::App app{ "Density estimation from doubly truncated data", "dtdens" };
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--workers", g.workers,
                 "worker threads (1 = sequential) [default: all cores]")
    ->default_str("");
  app.add_option("--grid", g.grid, "evaluation grid points")
    ->check(CLI::Range(std::size_t{ 2 }, std::size_t{ 1000000 }));
  app.add_option("--plot-data", g.plot_data,
                 "also write a TSV (x, value[, lower, upper]) for plotting");

  // check
  std::string check_file;
  auto* check = app.add_subcommand(
    "check", "truncation graph diagnostic for NPMLE existence/uniqueness");
  check->add_option("file", check_file, "CSV with header u,v,x")->required();

  // npmle
  std::string npmle_file;
  double npmle_tol = 1e-8, npmle_threshold = 0.5;
  int npmle_max_iter = 10000;
  auto* npmle = app.add_subcommand("npmle", "NPMLE of F by self-consistency");
  npmle->add_option("file", npmle_file, "CSV with header u,v,x")->required();
  npmle->add_option("--tol", npmle_tol, "sup-norm tolerance on masses");
  npmle->add_option("--max-iter", npmle_max_iter, "iteration cap");
  npmle->add_option("--threshold", npmle_threshold,
                    "mass above which weights count as degenerate");

  // estimate
  std::string est_file, est_domain;
  EstimatorFlags est_flags;
  auto* estimate = app.add_subcommand("estimate", "density estimate on a grid");
  estimate->add_option("file", est_file, "CSV with header u,v,x")->required();
  estimate->add_option("--domain", est_domain,
                       "working domain lo,hi [default: x-range padded by 5%]");
  est_flags.attach(estimate, true);

  // simulate
  std::string sim_scenarios = "S2", sim_tau = "constant",
              sim_methods = "spline-ord,spline-cor,kde", sim_out;
  std::size_t sim_n = 200, sim_trials = 250;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo ISE study");
  simulate->add_option("--scenario", sim_scenarios,
                       "comma list of S1,S2,S3,S4");
  simulate->add_option("--tau", sim_tau, "comma list of constant,random");
  simulate->add_option("--n", sim_n, "sample size");
  simulate->add_option("--trials", sim_trials, "Monte Carlo trials M");
  simulate->add_option("--methods", sim_methods, "comma list of estimators");
  simulate->add_option("--out", sim_out,
                       "directory for trials.csv, summary.json, summary.md");

  // bootstrap
  std::string boot_file, boot_domain;
  EstimatorFlags boot_flags;
  boot_flags.method = "spline-cor";
  std::size_t boot_B = 250;
  double boot_level = 0.95;
  bool boot_freeze = false;
  auto* bootstrap = app.add_subcommand("bootstrap",
                                       "pointwise percentile bootstrap bands");
  bootstrap->add_option("file", boot_file, "CSV with header u,v,x")->required();
  bootstrap->add_option("--domain", boot_domain,
                        "working domain lo,hi [default: x-range padded by 5%]");
  boot_flags.attach(bootstrap, false);
  bootstrap->add_option("--B", boot_B, "bootstrap replicates");
  bootstrap->add_option("--level", boot_level, "pointwise coverage level");
  bootstrap->add_flag("--freeze", boot_freeze,
                      "reuse lambda/h from the original fit in every replicate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    return report_error(err, "UsageError", e.what(), validation_error);
  }

  try {
    if (g.workers == 0)
      g.workers = 1;

    if (*check) {
      auto sample = read_csv_file(check_file);
      auto status = npmle_status(sample);
      json comps = json::array();
      for (const auto& c : status.components) {
        json members = json::array();
        for (auto v : c)
          members.push_back(v + 1);
        comps.push_back(members);
      }
      json j = { { "status", to_string(status.existence) },
                 { "n", sample.size() },
                 { "scc_count", status.components.size() },
                 { "components", comps },
                 { "sink_vertex", status.sink_vertex
                                    ? json(*status.sink_vertex + 1)
                                    : json(nullptr) } };
      err << "status: " << to_string(status.existence) << "\n"
          << "strongly connected components: " << status.components.size()
          << "\n";
      if (status.sink_vertex)
        err << "vertex " << *status.sink_vertex + 1
            << " has no edge leaving its component\n";
      out << j.dump(2) << '\n';
      return ok;
    }

    if (*npmle) {
      auto sample = read_csv_file(npmle_file);
      NpmleOptions o;
      o.tol = npmle_tol;
      o.max_iter = npmle_max_iter;
      auto w = solve_npmle(sample, o);
      json j = { { "masses", w.masses },
                 { "converged", w.converged },
                 { "iterations", w.iterations },
                 { "log_likelihood", w.log_likelihood },
                 { "degenerate", is_degenerate(w, npmle_threshold) } };
      out << j.dump(2) << '\n';
      return ok;
    }

    if (*estimate) {
      auto sample = read_csv_file(est_file, parse_domain(est_domain));
      auto spec = est_flags.spec();
      EvalGrid grid(sample.domain(), g.grid);
      auto res = run_estimator(sample, spec, grid);
      json j = { { "method", to_string(spec.method) },
                 { "grid", grid.points() },
                 { "values", res.estimate.values } };
      if (spec.method == Method::kde) {
        j["h"] = *res.bandwidth;
        j["degenerate_flag"] = res.degenerate;
      } else {
        j["lambda"] = *res.lambda;
        j["cv_trace"] = cv_trace_json(res.cv_trace);
        j["newton_iters"] = res.newton_iters;
      }
      write_plot_data(g.plot_data, grid, res.estimate.values);
      out << j.dump(2) << '\n';
      return ok;
    }

    if (*simulate) {
      std::vector<Scenario> scenarios;
      for (const auto& s : split_list(sim_scenarios)) {
        for (const auto& t : split_list(sim_tau)) {
          Scenario sc{ parse_scenario(s), parse_tau_mode(t), sim_n, 0 };
          std::uint64_t key = static_cast<std::uint64_t>(sc.id) * 2 +
                              static_cast<std::uint64_t>(sc.tau_mode);
          sc.seed = mix_seed(mix_seed(g.seed, key), sim_n);
          scenarios.push_back(sc);
        }
      }
      std::vector<Method> methods;
      for (const auto& m : split_list(sim_methods))
        methods.push_back(parse_method(m));
      StudyOptions so;
      so.trials = sim_trials;
      so.workers = g.workers;
      so.grid_count = g.grid;
      auto rep = run_study(scenarios, methods, so);
      json j = { { "trials", sim_trials },
                 { "n", sim_n },
                 { "seed", g.seed },
                 { "summary", summary_json(rep) } };
      if (!sim_out.empty()) {
        std::filesystem::create_directories(sim_out);
        std::ofstream log(std::filesystem::path(sim_out) / "trials.csv");
        write_trial_log(log, rep.log);
        std::ofstream sj(std::filesystem::path(sim_out) / "summary.json");
        sj << j.dump(2) << '\n';
        std::ofstream md(std::filesystem::path(sim_out) / "summary.md");
        md << summary_markdown(rep);
        if (!log || !sj || !md)
          detail::fail_config("FileNotWritable",
                              "cannot write study output to '" + sim_out + "'");
      }
      out << j.dump(2) << '\n';
      return ok;
    }

    if (*bootstrap) {
      auto sample = read_csv_file(boot_file, parse_domain(boot_domain));
      auto spec = boot_flags.spec();
      EvalGrid grid(sample.domain(), g.grid);
      BootstrapOptions bo;
      bo.replicates = boot_B;
      bo.level = boot_level;
      bo.seed = g.seed;
      bo.workers = g.workers;
      auto bands = bootstrap_bands(sample, spec, grid, bo, boot_freeze);
      json j = { { "method", to_string(spec.method) },
                 { "grid", grid.points() },
                 { "point", bands.point.values },
                 { "lower", bands.lower },
                 { "upper", bands.upper },
                 { "failed", bands.replicates_failed },
                 { "used", bands.replicates_used },
                 { "level", boot_level } };
      write_plot_data(g.plot_data, grid, bands.point.values, &bands.lower,
                      &bands.upper);
      out << j.dump(2) << '\n';
      return ok;
    }
  } catch (const Error& e) {
    int code = e.category() == ErrorCategory::numerical ? numerical_error
                                                        : validation_error;
    return report_error(err, e.name(), e.what(), code);
  } catch (const std::exception& e) {
    return report_error(err, "InternalError", e.what(), numerical_error);
  }
  return ok;
}

} // namespace dtdens::cli
