#include "oracles.hpp"
#include "test_util.hpp"

#include <catch_amalgamated.hpp>

#include <dtdens/simulate.hpp>
#include <dtdens/spline.hpp>

using namespace dtdens;
using Catch::Approx;

namespace {

TruncatedSample
s2_sample(std::size_t n, std::uint64_t seed)
{
  return sample_scenario({ ScenarioId::S2, TauMode::constant, n, seed });
}

//! Same x values with every window opened up to the whole domain.
TruncatedSample
untruncated(const TruncatedSample& s)
{
  std::vector<Record> recs;
  for (const auto& r : s.records())
    recs.push_back({ s.domain().lo, s.domain().hi, r.x });
  return validate_sample(recs, s.domain());
}

Eigen::VectorXd
random_coef(std::size_t m, std::mt19937_64& rng)
{
  std::normal_distribution<double> z;
  Eigen::VectorXd c(m);
  c(0) = z(rng);
  for (std::size_t k = 1; k < m; ++k)
    c(k) = 0.3 * z(rng);
  return c;
}

} // namespace

TEST_CASE("anchor count and basis construction", "[spline]")
{
  CHECK(default_anchor_count(200) == 63);
  CHECK(default_anchor_count(20) == 20);

  auto two = validate_sample({ { 0, 1, 0.2 }, { 0, 1, 0.7 } }, Interval{ 0, 1 });
  CHECK(thrown_name([&] { build_basis(two); }) == "TooFewDistinctPoints");

  auto sample = s2_sample(200, 1);
  auto basis = build_basis(sample);
  CHECK(basis.anchors.size() == 63);
  CHECK(basis.dim() == 64);
  CHECK(basis.quadrature.nodes.size() == 200);

  // penalty matrix: symmetric, positive semidefinite, zero on the null space
  CHECK((basis.gram - basis.gram.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(basis.gram);
  CHECK(eig.eigenvalues().minCoeff() > -1e-10);
  CHECK(basis.gram.row(0).cwiseAbs().maxCoeff() == 0.0);
  for (Eigen::Index k = 1; k < basis.gram.rows(); ++k)
    CHECK(basis.gram(k, k) >= 0.0);

  // quadrature weights positive, summing to the domain length
  double total = 0.0;
  for (double w : basis.quadrature.weights) {
    CHECK(w > 0.0);
    total += w;
  }
  CHECK(total == Approx(basis.domain.length()).epsilon(1e-13));

  // every basis function has zero mean over the domain
  for (Eigen::Index j = 0; j < basis.quad_design.cols(); ++j) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < basis.quad_design.rows(); ++k)
      s += basis.quadrature.weights[k] * basis.quad_design(k, j);
    CHECK(std::abs(s) < 1e-9);
  }
}

TEST_CASE("gauss-legendre rule integrates polynomials exactly", "[spline]")
{
  auto rule = gauss_legendre(10, -1.0, 3.0);
  for (int p = 0; p < 20; ++p) {
    double got = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k)
      got += rule.weights[k] * std::pow(rule.nodes[k], p);
    double want = (std::pow(3.0, p + 1) - std::pow(-1.0, p + 1)) / (p + 1);
    CHECK(got == Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("likelihood values at the zero function", "[spline]")
{
  auto three = validate_sample({ { 0, 1, 0.2 }, { 0, 1, 0.5 }, { 0, 1, 0.7 } },
                               Interval{ 0, 1 });
  auto basis = build_basis(three);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(basis.dim());
  CHECK(std::abs(neg_log_lik_ordinary(zero, three, basis).value) < 1e-14);

  auto half = validate_sample({ { 0.0, 0.5, 0.25 } }, Interval{ 0, 1 });
  CHECK(neg_log_lik_corrected(zero, half, basis).value ==
        Approx(-std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("gradients and Hessians match finite differences", "[spline]")
{
  auto sample = s2_sample(200, 2);
  auto basis = build_basis(sample);
  std::mt19937_64 rng(41);
  for (SplineMode mode : { SplineMode::ordinary, SplineMode::corrected }) {
    SplineLikelihood lik(sample, basis, mode);
    for (int rep = 0; rep < 10; ++rep) {
      Eigen::VectorXd c = random_coef(basis.dim(), rng);
      auto ev = lik.evaluate(c);
      auto fg = oracle::fd_gradient(
        [&](const Eigen::VectorXd& x) { return lik.value(x); }, c);
      auto fh = oracle::fd_jacobian(
        [&](const Eigen::VectorXd& x) {
          return Eigen::VectorXd(lik.evaluate(x, false).gradient);
        },
        c);
      CHECK(oracle::relative_error(ev.gradient, fg) < 1e-5);
      CHECK(oracle::relative_error(ev.hessian, fh) < 1e-5);
    }
  }
}

TEST_CASE("corrected equals ordinary under vacuous truncation", "[spline]")
{
  auto sample = untruncated(s2_sample(150, 3));
  auto basis = build_basis(sample);
  SplineLikelihood ord(sample, basis, SplineMode::ordinary);
  SplineLikelihood cor(sample, basis, SplineMode::corrected);
  std::mt19937_64 rng(42);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd c = random_coef(basis.dim(), rng);
    auto a = ord.evaluate(c), b = cor.evaluate(c);
    CHECK(a.value == Approx(b.value).epsilon(1e-12));
    CHECK((a.gradient - b.gradient).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.hessian - b.hessian).cwiseAbs().maxCoeff() < 1e-12);
  }

  for (double lambda : { 1e-6, 1e-4, 1e-2, 1.0 }) {
    SplineOptions o;
    o.lambda = lambda;
    o.mode = SplineMode::ordinary;
    auto fo = fit_spline(sample, o);
    o.mode = SplineMode::corrected;
    auto fc = fit_spline(sample, o);
    CHECK((fo.coefficients - fc.coefficients).cwiseAbs().maxCoeff() < 1e-8);
  }

  SplineOptions cv;
  cv.mode = SplineMode::ordinary;
  auto fo = fit_spline(sample, cv);
  cv.mode = SplineMode::corrected;
  auto fc = fit_spline(sample, cv);
  EvalGrid g(sample.domain(), 101);
  auto da = fo.estimate(g).values, db = fc.estimate(g).values;
  double sup = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i)
    sup = std::max(sup, std::abs(da[i] - db[i]));
  CHECK(sup < 1e-6);
}

TEST_CASE("fitted densities are valid", "[spline][property]")
{
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (auto id : { ScenarioId::S2, ScenarioId::S3 }) {
      auto sample = sample_scenario({ id, TauMode::constant, 200, seed });
      for (SplineMode mode : { SplineMode::ordinary, SplineMode::corrected }) {
        SplineOptions o;
        o.mode = mode;
        auto fit = fit_spline(sample, o);
        REQUIRE(fit.converged);
        CHECK(std::abs(fit.side_condition()) < 1e-6);
        double mass = 0.0;
        for (std::size_t k = 0; k < fit.basis.quadrature.nodes.size(); ++k) {
          double d = fit.density(fit.basis.quadrature.nodes[k]);
          CHECK(d > 0.0);
          mass += fit.basis.quadrature.weights[k] * d;
        }
        CHECK(std::abs(mass - 1.0) < 1e-8);
        for (double v : fit.estimate(EvalGrid(sample.domain())).values)
          CHECK(v > 0.0);
      }
    }
  }
}

TEST_CASE("uniform data gives a nearly flat ordinary fit", "[spline]")
{
  auto sample = sample_scenario({ ScenarioId::S1, TauMode::constant, 500, 4 });
  SplineOptions o;
  o.mode = SplineMode::ordinary;
  auto fit = fit_spline(sample, o);
  for (double x = 0.1; x <= 0.9 + 1e-12; x += 0.01)
    CHECK(std::abs(fit.density(x) - 1.0) < 0.15);
}

TEST_CASE("largest lambda pushes the fit into the null space", "[spline]")
{
  auto sample = s2_sample(200, 5);
  const double lambda = default_lambda_grid(sample.size()).back();
  SplineOptions o;
  o.lambda = lambda;
  auto fit = fit_spline(sample, o);
  // best L2 approximation of eta by d k1 on the quadrature grid
  const auto& Q = fit.basis.quad_design;
  const auto& w = fit.basis.quadrature.weights;
  Eigen::VectorXd eta = Q * fit.coefficients;
  double num = 0.0, den = 0.0;
  for (Eigen::Index k = 0; k < Q.rows(); ++k) {
    num += w[k] * eta(k) * Q(k, 0);
    den += w[k] * Q(k, 0) * Q(k, 0);
  }
  double d = num / den;
  double sup = 0.0;
  for (Eigen::Index k = 0; k < Q.rows(); ++k)
    sup = std::max(sup, std::abs(eta(k) - d * Q(k, 0)));
  CHECK(sup < 1e-3);
}

TEST_CASE("penalized objective is convex along random directions",
          "[spline][property]")
{
  auto sample = s2_sample(200, 6);
  auto basis = build_basis(sample);
  std::mt19937_64 rng(43);
  for (SplineMode mode : { SplineMode::ordinary, SplineMode::corrected }) {
    SplineLikelihood lik(sample, basis, mode);
    const double lambda = 1e-4;
    auto obj = [&](const Eigen::VectorXd& c) {
      return lik.value(c) + lambda * c.dot(basis.gram * c);
    };
    for (int rep = 0; rep < 10; ++rep) {
      Eigen::VectorXd c = random_coef(basis.dim(), rng);
      Eigen::VectorXd dir = random_coef(basis.dim(), rng).normalized();
      const double t = 1e-2;
      double second = obj(c + t * dir) - 2.0 * obj(c) + obj(c - t * dir);
      CHECK(second > 0.0);
    }
  }
}

TEST_CASE("Newton never increases the objective", "[spline][property]")
{
  auto sample = s2_sample(200, 7);
  auto basis = build_basis(sample);
  std::mt19937_64 rng(44);
  for (SplineMode mode : { SplineMode::ordinary, SplineMode::corrected }) {
    SplineLikelihood lik(sample, basis, mode);
    for (double lambda : { 1e-7, 1e-4, 1e-1 }) {
      auto res = newton_minimize(lik, basis.gram, lambda,
                                 random_coef(basis.dim(), rng));
      CHECK(res.converged);
      for (std::size_t k = 1; k < res.objective_trace.size(); ++k)
        CHECK(res.objective_trace[k] <= res.objective_trace[k - 1]);
    }
  }
}

TEST_CASE("cross-validation score", "[spline]")
{
  auto sample = s2_sample(200, 8);
  auto basis = build_basis(sample);
  SplineLikelihood lik(sample, basis, SplineMode::corrected);
  Eigen::VectorXd start = Eigen::VectorXd::Zero(basis.dim());
  start(0) = null_space_mle(lik);

  // alpha = 0 leaves the in-sample fit term
  auto res = newton_minimize(lik, basis.gram, 1e-4, start);
  auto t0 = cv_terms(lik, basis.gram, 1e-4, res.coef, 0.0);
  CHECK(t0.score == Approx(lik.value(res.coef)).epsilon(1e-14));

  // finite everywhere on the default grid, correction decreasing in lambda
  auto grid = default_lambda_grid(sample.size());
  Eigen::VectorXd warm = start;
  std::vector<double> correction;
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
    auto r = newton_minimize(lik, basis.gram, *it, warm);
    REQUIRE(r.converged);
    warm = r.coef;
    auto t = cv_terms(lik, basis.gram, *it, r.coef, 1.4);
    CHECK(std::isfinite(t.score));
    correction.push_back(t.correction);
  }
  // `correction` runs from the largest lambda down
  for (std::size_t k = 1; k < correction.size(); ++k)
    CHECK(correction[k] > correction[k - 1]);
}

TEST_CASE("duplicating the data does not raise the selected lambda",
          "[spline]")
{
  const double grid_step = std::pow(10.0, 9.0 / 39.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto sample = s2_sample(200, 100 + seed);
    auto recs = sample.records();
    auto twice = recs;
    twice.insert(twice.end(), recs.begin(), recs.end());
    auto doubled = validate_sample(twice, sample.domain());
    auto a = fit_spline(sample);
    SplineOptions o;
    o.basis.anchors = a.basis.anchors.size();
    auto b = fit_spline(doubled, o);
    CHECK(b.lambda <= a.lambda * grid_step * (1.0 + 1e-9));
  }
}

TEST_CASE("fixed lambda skips cross-validation", "[spline]")
{
  auto fit = fit_spline(s2_sample(100, 9), SplineOptions{ .lambda = 0.01 });
  CHECK(fit.lambda == 0.01);
  CHECK(fit.cv_trace.empty());
}

TEST_CASE("spline error paths", "[spline]")
{
  // every x sits at the right edge of its window: the likelihood keeps
  // improving as the log-density tilts to the right
  std::vector<Record> edge;
  for (int i = 0; i < 20; ++i) {
    double x = 0.3 + 0.03 * i;
    edge.push_back({ x - 0.3, x, x });
  }
  auto sample = validate_sample(edge, Interval{ 0, 1 });
  CHECK(thrown_name([&] { fit_spline(sample); }) == "NullSpaceUnbounded");

  auto narrow = validate_sample(
    { { 0, 1, 0.2 }, { 0, 1, 0.5 }, { 0.6999, 0.7001, 0.7 } }, Interval{ 0, 1 });
  CHECK(thrown_name([&] { fit_spline(narrow); }) == "EmptyTruncationInterval");

  auto ok = s2_sample(50, 10);
  auto basis = build_basis(ok);
  SplineLikelihood lik(ok, basis, SplineMode::ordinary);
  Eigen::VectorXd huge = Eigen::VectorXd::Zero(basis.dim());
  huge(0) = 5000.0;
  CHECK(thrown_name([&] { lik.evaluate(huge); }) == "OverflowGuard");

  CHECK(thrown_name([&] { fit_spline(ok, SplineOptions{ .lambda = -1.0 }); }) ==
        "InvalidLambda");
}
