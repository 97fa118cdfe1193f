#include "oracles.hpp"
#include "test_util.hpp"

#include <catch_amalgamated.hpp>

#include <dtdens/kde.hpp>
#include <dtdens/simulate.hpp>

using namespace dtdens;
using Catch::Approx;

namespace {

NpmleWeights
converged(std::vector<double> masses)
{
  NpmleWeights w;
  w.masses = std::move(masses);
  w.converged = true;
  w.iterations = 1;
  return w;
}

double
normal_pdf(double x, double mu, double sd)
{
  double z = (x - mu) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

std::vector<Record>
shifted(const TruncatedSample& s, double scale, double shift)
{
  std::vector<Record> out;
  for (const auto& r : s.records())
    out.push_back({ scale * r.u + shift, scale * r.v + shift,
                    scale * r.x + shift });
  return out;
}

//! First sample of the scenario, from `seed` on, whose NPMLE exists.
TruncatedSample
sample_with_npmle(ScenarioId id, TauMode tau, std::size_t n, std::uint64_t seed)
{
  for (;; ++seed) {
    auto s = sample_scenario({ id, tau, n, seed });
    if (npmle_status(s).existence == NpmleExistence::unique_exists)
      return s;
  }
}

} // namespace

TEST_CASE("single atom gives a normal density", "[kde]")
{
  auto sample = validate_sample({ { 0.0, 1.0, 0.3 } }, Interval{ 0, 1 });
  EvalGrid g(Interval{ 0, 1 }, 11);
  auto est = kde_estimate(sample, converged({ 1.0 }), Bandwidth::fixed(0.2), g);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(est.values[i] == Approx(normal_pdf(g[i], 0.3, 0.2)).epsilon(1e-13));
}

TEST_CASE("two weighted atoms at equal distance", "[kde]")
{
  auto sample = validate_sample({ { 0, 1, 0.2 }, { 0, 1, 0.8 } }, Interval{ 0, 1 });
  EvalGrid g(Interval{ 0, 1 }, 3);
  auto est =
    kde_estimate(sample, converged({ 0.7, 0.3 }), Bandwidth::fixed(0.1), g);
  double want = 0.7 * normal_pdf(0.5, 0.2, 0.1) + 0.3 * normal_pdf(0.5, 0.8, 0.1);
  CHECK(est.values[1] == Approx(want).epsilon(1e-13));
}

TEST_CASE("uniform masses reproduce the ordinary estimator exactly", "[kde]")
{
  auto sample = sample_scenario({ ScenarioId::S2, TauMode::constant, 50, 3 });
  const double n = static_cast<double>(sample.size());
  EvalGrid g(sample.domain(), 101);
  auto a = kde_estimate(sample, converged(std::vector<double>(50, 1.0 / n)),
                        Bandwidth::fixed(0.07), g);
  auto b = kde_standard(sample.xs(), 0.07, g);
  CHECK(a.values == b.values);
}

TEST_CASE("plug-in bandwidth matches the integral form", "[kde]")
{
  auto sample = sample_with_npmle(ScenarioId::S3, TauMode::constant, 200, 5);
  auto w = solve_npmle(sample);
  REQUIRE(w.converged);
  double h = dpi1_bandwidth(sample, w).h;
  CHECK(h == Approx(oracle::dpi1_by_integration(sample.xs(), w.masses))
               .epsilon(1e-6));
}

TEST_CASE("unweighted plug-in bandwidth on a large normal sample", "[kde]")
{
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z;
  std::vector<Record> recs;
  for (int i = 0; i < 10000; ++i) {
    double x = z(rng);
    recs.push_back({ -10.0, 10.0, x });
  }
  auto sample = validate_sample(recs, Interval{ -10, 10 });
  // the NPMLE of an untruncated sample is uniform
  auto w = converged(std::vector<double>(10000, 1e-4));
  double h = dpi1_bandwidth(sample, w).h;
  double ref = oracle::dpi1_by_integration(
    sample.xs(), std::vector<double>(10000, 1e-4));
  CHECK(std::abs(h / ref - 1.0) < 0.15);
  // normal-reference rule of thumb is close for normal data
  CHECK(std::abs(h / (1.06 * std::pow(10000.0, -0.2)) - 1.0) < 0.15);
}

TEST_CASE("plug-in bandwidth errors on tied data", "[kde]")
{
  auto sample = validate_sample({ { 0, 1, 0.5 }, { 0, 1, 0.5 }, { 0, 1, 0.5 } },
                                Interval{ 0, 1 });
  auto w = converged({ 1.0 / 3, 1.0 / 3, 1.0 / 3 });
  CHECK(thrown_name([&] { dpi1_bandwidth(sample, w); }) == "ZeroVariance");
}

TEST_CASE("plug-in bandwidth is scale equivariant", "[kde][property]")
{
  auto sample = sample_with_npmle(ScenarioId::S2, TauMode::random, 150, 8);
  auto w = solve_npmle(sample);
  double h = dpi1_bandwidth(sample, w).h;
  for (double c : { 0.1, 3.0, 250.0 }) {
    auto scaled = validate_sample(shifted(sample, c, 0.0));
    auto ws = solve_npmle(scaled);
    CHECK(dpi1_bandwidth(scaled, ws).h == Approx(c * h).epsilon(1e-8));
  }
}

TEST_CASE("estimate integrates to one over an extended grid",
          "[kde][property]")
{
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto sample =
      sample_with_npmle(ScenarioId::S3, TauMode::constant, 200, 10 * seed);
    auto w = solve_npmle(sample);
    REQUIRE(w.converged);
    auto bw = dpi1_bandwidth(sample, w);
    auto xs = sample.xs();
    auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    EvalGrid g(Interval{ *lo - 6 * bw.h, *hi + 6 * bw.h }, 2001);
    auto est = kde_estimate(sample, w, bw, g);
    CHECK(std::abs(trapezoid_integral(est.values, g) - 1.0) < 1e-4);
    for (double v : est.values)
      CHECK(v >= 0.0);
  }
}

TEST_CASE("shifting the data shifts the estimate", "[kde][property]")
{
  auto sample = sample_with_npmle(ScenarioId::S2, TauMode::constant, 100, 9);
  auto w = solve_npmle(sample);
  auto bw = dpi1_bandwidth(sample, w);
  const double c = 2.5;
  auto moved = validate_sample(shifted(sample, 1.0, c),
                               Interval{ sample.domain().lo + c,
                                         sample.domain().hi + c });
  auto wm = solve_npmle(moved);
  auto bm = dpi1_bandwidth(moved, wm);
  CHECK(bm.h == Approx(bw.h).epsilon(1e-9));
  EvalGrid g(sample.domain(), 51);
  EvalGrid gm(moved.domain(), 51);
  auto a = kde_estimate(sample, w, bw, g);
  auto b = kde_estimate(moved, wm, bm, gm);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(b.values[i] == Approx(a.values[i]).epsilon(1e-8).margin(1e-12));
}

TEST_CASE("samples without an NPMLE are refused", "[kde]")
{
  auto sample = validate_sample(oracle::seven_records());
  NpmleWeights w = solve_npmle(sample);
  CHECK_FALSE(w.converged);
  EvalGrid g(sample.domain(), 11);
  CHECK(thrown_name([&] {
          kde_estimate(sample, w, Bandwidth::fixed(0.3), g);
        }) == "DegenerateWeights");
}

TEST_CASE("estimate refuses unconverged weights", "[kde]")
{
  auto sample = validate_sample({ { 0, 1, 0.5 } }, Interval{ 0, 1 });
  NpmleWeights w{ { 1.0 }, 10000, false, 0.0, {} };
  EvalGrid g(Interval{ 0, 1 }, 5);
  CHECK(thrown_name([&] {
          kde_estimate(sample, w, Bandwidth::fixed(0.1), g);
        }) == "DegenerateWeights");
  CHECK(thrown_name([] { Bandwidth::fixed(0.0); }) == "InvalidBandwidth");
  CHECK(thrown_name([] { Bandwidth::fixed(-1.0); }) == "InvalidBandwidth");
}
