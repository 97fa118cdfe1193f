#pragma once

#include "model.hpp"
#include "quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dtdens {

enum class SplineMode
{
  ordinary,
  corrected
};

inline std::string
to_string(SplineMode m)
{
  return m == SplineMode::ordinary ? "ordinary" : "corrected";
}

//! Reproducing kernel of the cubic smoothing spline on [0, 1] with the
//! averaging side condition int eta = 0. The penalty is int (eta'')^2, its
//! null space (after the side condition) is spanned by k1.
namespace rk {

inline double
k1(double t)
{
  return t - 0.5;
}

inline double
k2(double t)
{
  double a = k1(t);
  return 0.5 * (a * a - 1.0 / 12.0);
}

inline double
k4(double t)
{
  double a = k1(t);
  double a2 = a * a;
  return (a2 * a2 - 0.5 * a2 + 7.0 / 240.0) / 24.0;
}

inline double
cubic(double s, double t)
{
  return k2(s) * k2(t) - k4(std::abs(s - t));
}

} // namespace rk

struct SplineBasisOptions
{
  //! Number of kernel anchors; default min(n, 30 + ceil(10 n^(2/9))).
  std::optional<std::size_t> anchors;
  std::size_t quad_size = 200;
};

//! Finite-dimensional representation eta(x) = d k1(t) + sum_j c_j s R(t, xi_j)
//! with t the position of x rescaled to [0, 1]. Coefficient 0 is the
//! null-space coefficient d. The kernel columns carry a fixed scale s chosen
//! so the penalty matrix has unit mean diagonal; J(eta) itself is unaffected.
struct SplineBasis
{
  Interval domain;
  std::vector<double> anchors; // on [0, 1]
  double kernel_scale = 1.0;
  std::size_t null_dim = 1;
  Eigen::MatrixXd gram;        // penalty J(eta) = coef' gram coef
  QuadratureRule quadrature;   // on the domain, x units
  Eigen::VectorXd unit_weights; // quadrature weights on [0, 1]
  std::vector<double> cell_edges; // on [0, 1], one cell per node
  Eigen::MatrixXd quad_design; // basis at the quadrature nodes

  std::size_t dim() const { return anchors.size() + 1; }

  double to_unit(double x) const
  {
    return (x - domain.lo) / domain.length();
  }

  Eigen::RowVectorXd features(double x) const
  {
    double t = to_unit(x);
    Eigen::RowVectorXd row(dim());
    row(0) = rk::k1(t);
    for (std::size_t j = 0; j < anchors.size(); ++j)
      row(j + 1) = kernel_scale * rk::cubic(t, anchors[j]);
    return row;
  }

  Eigen::MatrixXd design(const std::vector<double>& xs) const
  {
    Eigen::MatrixXd out(xs.size(), dim());
    for (std::size_t i = 0; i < xs.size(); ++i)
      out.row(i) = features(xs[i]);
    return out;
  }

  //! Quadrature weights (on [0, 1]) restricted to [u, v]: every node owns the
  //! cell between consecutive cumulative weights, and partially covered cells
  //! keep only the covered length.
  Eigen::VectorXd window_weights(double u, double v) const
  {
    double a = std::clamp(to_unit(u), 0.0, 1.0);
    double b = std::clamp(to_unit(v), 0.0, 1.0);
    const auto K = quadrature.nodes.size();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(K);
    for (std::size_t k = 0; k < K; ++k) {
      double lo = cell_edges[k], hi = cell_edges[k + 1];
      if (a <= lo && hi <= b)
        w(k) = unit_weights(k);
      else
        w(k) = std::max(0.0, std::min(hi, b) - std::max(lo, a));
    }
    return w;
  }

  std::size_t nodes_inside(double u, double v) const
  {
    std::size_t count = 0;
    for (double z : quadrature.nodes)
      if (u <= z && z <= v)
        ++count;
    return count;
  }
};

inline std::size_t
default_anchor_count(std::size_t n)
{
  double q = 30.0 + std::ceil(10.0 * std::pow(static_cast<double>(n), 2.0 / 9.0));
  return std::min(n, static_cast<std::size_t>(q));
}

inline SplineBasis
build_basis(const TruncatedSample& sample, const SplineBasisOptions& opts = {})
{
  std::vector<double> distinct = sample.xs();
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()),
                 distinct.end());
  if (distinct.size() < 3)
    detail::fail_validation("TooFewDistinctPoints",
                            "need at least 3 distinct x values, got " +
                              std::to_string(distinct.size()));
  if (opts.quad_size < 2)
    detail::fail_config("InvalidQuadrature", "need at least 2 nodes");

  SplineBasis basis;
  basis.domain = sample.domain();

  std::size_t q = opts.anchors ? *opts.anchors : default_anchor_count(sample.size());
  q = std::clamp<std::size_t>(q, 1, distinct.size());
  // anchors at evenly spaced order statistics of the distinct x values
  for (std::size_t j = 0; j < q; ++j) {
    double pos = q == 1 ? 0.5 * (distinct.size() - 1)
                        : static_cast<double>(j) * (distinct.size() - 1) /
                            static_cast<double>(q - 1);
    basis.anchors.push_back(
      basis.to_unit(distinct[static_cast<std::size_t>(std::lround(pos))]));
  }

  const std::size_t m = basis.dim();
  basis.gram = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t k = 0; k < q; ++k)
      basis.gram(j + 1, k + 1) = rk::cubic(basis.anchors[j], basis.anchors[k]);
  basis.kernel_scale =
    std::sqrt(static_cast<double>(q) / basis.gram.diagonal().sum());
  basis.gram *= basis.kernel_scale * basis.kernel_scale;

  auto unit = gauss_legendre(opts.quad_size, 0.0, 1.0);
  const std::size_t K = unit.nodes.size();
  basis.unit_weights = Eigen::Map<const Eigen::VectorXd>(unit.weights.data(), K);
  basis.cell_edges.resize(K + 1);
  basis.cell_edges[0] = 0.0;
  for (std::size_t k = 0; k < K; ++k)
    basis.cell_edges[k + 1] = basis.cell_edges[k] + unit.weights[k];
  basis.cell_edges[K] = 1.0;

  const double L = basis.domain.length();
  basis.quadrature.nodes.resize(K);
  basis.quadrature.weights.resize(K);
  basis.quad_design.resize(K, m);
  for (std::size_t k = 0; k < K; ++k) {
    basis.quadrature.nodes[k] = basis.domain.lo + L * unit.nodes[k];
    basis.quadrature.weights[k] = L * unit.weights[k];
    basis.quad_design(k, 0) = rk::k1(unit.nodes[k]);
    for (std::size_t j = 0; j < q; ++j)
      basis.quad_design(k, j + 1) =
        basis.kernel_scale * rk::cubic(unit.nodes[k], basis.anchors[j]);
  }
  return basis;
}

//! Value, gradient and Hessian of a likelihood term.
struct ObjectiveValue
{
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

//! Minus log-likelihood (divided by n) of the logistic density model, either
//! ordinary,
//!   -(1/n) sum eta(x_i) + log int e^eta,
//! or corrected for double truncation,
//!   -(1/n) sum [eta(x_i) - log int_{[u_i, v_i]} e^eta].
//! Integrals are in x units on the shared quadrature grid.
class SplineLikelihood
{
public:
  SplineLikelihood(const TruncatedSample& sample, const SplineBasis& basis,
                   SplineMode mode)
    : basis_(&basis)
    , mode_(mode)
    , n_(sample.size())
    , log_length_(std::log(basis.domain.length()))
  {
    obs_design_ = basis.design(sample.xs());
    obs_mean_ = obs_design_.colwise().mean().transpose();
    record_row_.assign(sample.size(), 0);
    if (mode == SplineMode::ordinary) {
      windows_ = basis.unit_weights.transpose();
      row_weights_ = Eigen::VectorXd::Ones(1);
      return;
    }
    // records sharing a clipped window share one row, weighted by its count
    std::map<std::pair<double, double>, std::size_t> rows;
    std::vector<std::size_t> counts;
    std::vector<Eigen::VectorXd> w;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const auto& r = sample[i];
      if (basis.nodes_inside(r.u, r.v) < 2)
        detail::fail_validation(
          "EmptyTruncationInterval",
          "record " + std::to_string(i) +
            " has a truncation interval narrower than the quadrature "
            "resolution");
      std::pair<double, double> key{ std::clamp(basis.to_unit(r.u), 0.0, 1.0),
                                     std::clamp(basis.to_unit(r.v), 0.0, 1.0) };
      auto [it, fresh] = rows.try_emplace(key, w.size());
      if (fresh) {
        w.push_back(basis.window_weights(r.u, r.v));
        counts.push_back(0);
      }
      ++counts[it->second];
      record_row_[i] = it->second;
    }
    windows_.resize(static_cast<Eigen::Index>(w.size()),
                    static_cast<Eigen::Index>(basis.quadrature.nodes.size()));
    row_weights_.resize(static_cast<Eigen::Index>(w.size()));
    for (std::size_t k = 0; k < w.size(); ++k) {
      windows_.row(k) = w[k].transpose();
      row_weights_(k) = static_cast<double>(counts[k]) / static_cast<double>(n_);
    }
  }

  SplineMode mode() const { return mode_; }
  const SplineBasis& basis() const { return *basis_; }
  std::size_t size() const { return n_; }

  ObjectiveValue evaluate(const Eigen::VectorXd& coef,
                          bool with_hessian = true) const
  {
    Tilted t = tilt(coef);
    ObjectiveValue out;
    out.value = -obs_mean_.dot(coef) + log_length_ + t.shift +
                row_weights_.dot(t.log_norm.array().log().matrix());
    Eigen::MatrixXd means = t.probs * basis_->quad_design; // rows: mu_r
    out.gradient = -obs_mean_ + means.transpose() * row_weights_;
    if (with_hessian) {
      Eigen::VectorXd pbar = t.probs.transpose() * row_weights_;
      out.hessian = basis_->quad_design.transpose() * pbar.asDiagonal() *
                      basis_->quad_design -
                    means.transpose() * row_weights_.asDiagonal() * means;
      out.hessian = 0.5 * (out.hessian + out.hessian.transpose()).eval();
    }
    return out;
  }

  double value(const Eigen::VectorXd& coef) const
  {
    Tilted t = tilt(coef);
    return -obs_mean_.dot(coef) + log_length_ + t.shift +
           row_weights_.dot(t.log_norm.array().log().matrix());
  }

  //! Per-observation score vectors phi(x_i) - E_i[phi], one row per record.
  Eigen::MatrixXd scores(const Eigen::VectorXd& coef) const
  {
    Tilted t = tilt(coef);
    Eigen::MatrixXd means = t.probs * basis_->quad_design;
    Eigen::MatrixXd out = obs_design_;
    for (std::size_t i = 0; i < n_; ++i)
      out.row(static_cast<Eigen::Index>(i)) -=
        means.row(static_cast<Eigen::Index>(record_row_[i]));
    return out;
  }

  //! Limits of d/dd L(d k1) as d -> +inf and d -> -inf.
  std::pair<double, double> null_slope_limits() const
  {
    const auto& nodes = basis_->quad_design.col(0);
    double upper = 0.0, lower = 0.0;
    for (Eigen::Index i = 0; i < windows_.rows(); ++i) {
      Eigen::Index first = -1, last = -1;
      for (Eigen::Index k = 0; k < windows_.cols(); ++k) {
        if (windows_(i, k) > 0.0) {
          if (first < 0)
            first = k;
          last = k;
        }
      }
      upper += row_weights_(i) * nodes(last);
      lower += row_weights_(i) * nodes(first);
    }
    return { upper - obs_mean_(0), lower - obs_mean_(0) };
  }

  //! eta at the quadrature nodes.
  Eigen::VectorXd eta_nodes(const Eigen::VectorXd& coef) const
  {
    return basis_->quad_design * coef;
  }

private:
  struct Tilted
  {
    double shift;
    Eigen::VectorXd log_norm; // per window: sum_k w_ik e^(eta_k - shift)
    Eigen::MatrixXd probs;    // per window: normalized tilted weights
  };

  Tilted tilt(const Eigen::VectorXd& coef) const
  {
    if (!coef.allFinite())
      detail::fail_numerical("NewtonDiverged", "non-finite coefficients");
    Eigen::VectorXd eta = eta_nodes(coef);
    double top = eta.maxCoeff();
    if (top > 700.0)
      detail::fail_numerical("OverflowGuard",
                             "log-density exceeds 700 on the quadrature grid");
    Eigen::RowVectorXd e = (eta.array() - top).exp().matrix().transpose();
    Tilted t;
    t.shift = top;
    t.probs = windows_.array().rowwise() * e.array();
    t.log_norm = t.probs.rowwise().sum();
    if ((t.log_norm.array() <= 0.0).any())
      detail::fail_numerical("OverflowGuard",
                             "normalizer underflowed on a truncation window");
    t.probs.array().colwise() /= t.log_norm.array();
    return t;
  }

  const SplineBasis* basis_;
  SplineMode mode_;
  std::size_t n_;
  double log_length_;
  Eigen::MatrixXd obs_design_;
  Eigen::VectorXd obs_mean_;
  Eigen::MatrixXd windows_;         // one row per distinct window
  Eigen::VectorXd row_weights_;     // share of records using each row
  std::vector<std::size_t> record_row_;
};

inline ObjectiveValue
neg_log_lik_ordinary(const Eigen::VectorXd& coef, const TruncatedSample& sample,
                     const SplineBasis& basis)
{
  return SplineLikelihood(sample, basis, SplineMode::ordinary).evaluate(coef);
}

inline ObjectiveValue
neg_log_lik_corrected(const Eigen::VectorXd& coef,
                      const TruncatedSample& sample, const SplineBasis& basis)
{
  return SplineLikelihood(sample, basis, SplineMode::corrected).evaluate(coef);
}

// Newton solver ---------------------------------------------------------------

struct NewtonOptions
{
  double grad_tol = 1e-7;
  double decrement_tol = 1e-12;
  int max_iter = 50;
  int max_halvings = 30;
};

struct NewtonResult
{
  Eigen::VectorXd coef;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  //! Penalized objective after every accepted step, starting value first.
  std::vector<double> objective_trace;
};

namespace detail {

inline Eigen::VectorXd
solve_spd(const Eigen::MatrixXd& A, const Eigen::VectorXd& b)
{
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() == Eigen::Success)
    return llt.solve(b);
  // nearly singular: retry with a small ridge scaled to the diagonal
  double ridge = 1e-12 * std::max(A.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  for (int k = 0; k < 8; ++k, ridge *= 100.0) {
    Eigen::MatrixXd B = A;
    B.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> retry(B);
    if (retry.info() == Eigen::Success)
      return retry.solve(b);
  }
  fail_numerical("SingularSystem", "penalized Hessian is not positive definite");
}

} // namespace detail

//! Damped Newton for likelihood + lambda * coef' gram coef with step halving;
//! accepted steps never increase the objective.
inline NewtonResult
newton_minimize(const SplineLikelihood& lik, const Eigen::MatrixXd& gram,
                double lambda, Eigen::VectorXd start,
                const NewtonOptions& opts = {})
{
  auto penalized = [&](const Eigen::VectorXd& c) {
    return lik.value(c) + lambda * c.dot(gram * c);
  };

  NewtonResult res;
  res.coef = std::move(start);
  res.objective = penalized(res.coef);
  res.objective_trace.push_back(res.objective);
  for (int it = 0; it < opts.max_iter; ++it) {
    auto ev = lik.evaluate(res.coef);
    Eigen::VectorXd grad = ev.gradient + 2.0 * lambda * (gram * res.coef);
    Eigen::MatrixXd H = ev.hessian + 2.0 * lambda * gram;
    Eigen::VectorXd step = -detail::solve_spd(H, grad);
    // the gradient test alone can pass far from the optimum when lambda is
    // tiny and H is nearly singular, so the Newton decrement must be small too
    double decrement = -grad.dot(step);
    if (grad.lpNorm<Eigen::Infinity>() < opts.grad_tol &&
        decrement < opts.decrement_tol) {
      res.converged = true;
      return res;
    }

    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h, scale *= 0.5) {
      Eigen::VectorXd trial = res.coef + scale * step;
      double value;
      try {
        value = penalized(trial);
      } catch (const Error& e) {
        if (e.name() == "OverflowGuard")
          continue;
        throw;
      }
      if (std::isfinite(value) && value <= res.objective) {
        accepted = value < res.objective || scale == 1.0;
        res.coef = std::move(trial);
        res.objective = value;
        res.objective_trace.push_back(value);
        break;
      }
    }
    res.iterations = it + 1;
    if (!accepted) {
      // no decrease possible: either at the optimum up to rounding or stuck
      auto last = lik.evaluate(res.coef, false);
      Eigen::VectorXd g = last.gradient + 2.0 * lambda * (gram * res.coef);
      res.converged = g.lpNorm<Eigen::Infinity>() < 1e3 * opts.grad_tol;
      return res;
    }
  }
  auto last = lik.evaluate(res.coef, false);
  Eigen::VectorXd g = last.gradient + 2.0 * lambda * (gram * res.coef);
  res.converged = g.lpNorm<Eigen::Infinity>() < opts.grad_tol;
  return res;
}

//! Maximum likelihood within the null space {d k1}. Returns d, or throws
//! NullSpaceUnbounded when the likelihood keeps improving as |d| grows, in
//! which case no penalized minimizer is guaranteed.
inline double
null_space_mle(const SplineLikelihood& lik)
{
  const auto& basis = lik.basis();
  const std::size_t m = basis.dim();
  auto slope = [&](double d) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
    c(0) = d;
    return lik.evaluate(c, false).gradient(0);
  };

  // As d -> +inf (-inf) the tilted mean of k1 on every window moves to the
  // window's last (first) quadrature node with positive weight, so the slope
  // tends to these limits. A minimizer exists iff they straddle zero.
  auto [upper, lower] = lik.null_slope_limits();
  const double eps = 1e-12;
  if (!(upper > eps) || !(lower < -eps))
    detail::fail_numerical(
      "NullSpaceUnbounded",
      "likelihood has no minimizer in the null space of the penalty");

  double lo = -1.0, hi = 1.0;
  while (slope(lo) > 0.0) {
    hi = lo;
    lo *= 2.0;
    if (lo < -1200.0)
      detail::fail_numerical("NullSpaceUnbounded",
                             "null-space minimizer beyond overflow range");
  }
  while (slope(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1200.0)
      detail::fail_numerical("NullSpaceUnbounded",
                             "null-space minimizer beyond overflow range");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    double mid = 0.5 * (lo + hi);
    if (slope(mid) > 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

// Cross-validation --------------------------------------------------------------

struct CvTerms
{
  double score;
  double fit;        // minus log-likelihood / n
  double correction; // trace term before multiplying by alpha
};

//! Kullback-Leibler cross-validation score
//!   L(eta) + alpha tr[(H + 2 lambda gram)^-1 C] / n,
//! with H the likelihood Hessian and C the empirical covariance of the
//! per-observation scores.
inline CvTerms
cv_terms(const SplineLikelihood& lik, const Eigen::MatrixXd& gram,
         double lambda, const Eigen::VectorXd& coef, double alpha)
{
  auto ev = lik.evaluate(coef);
  Eigen::MatrixXd S = lik.scores(coef);
  Eigen::MatrixXd centered = S.rowwise() - S.colwise().mean();
  const double n = static_cast<double>(lik.size());
  Eigen::MatrixXd C = centered.transpose() * centered / n;
  Eigen::MatrixXd H = ev.hessian + 2.0 * lambda * gram;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    detail::fail_numerical("SingularSystem",
                           "penalized Hessian not invertible at lambda=" +
                             std::to_string(lambda));
  auto D = ldlt.vectorD();
  if (D.minCoeff() <= 1e-14 * D.maxCoeff())
    detail::fail_numerical("SingularSystem",
                           "penalized Hessian not invertible at lambda=" +
                             std::to_string(lambda));
  double correction = ldlt.solve(C).trace() / n;
  if (!std::isfinite(correction))
    detail::fail_numerical("SingularSystem", "non-finite trace correction");
  return { ev.value + alpha * correction, ev.value, correction };
}

// Fitting ------------------------------------------------------------------------

struct SplineOptions
{
  SplineMode mode = SplineMode::corrected;
  //! Fixed smoothing parameter; bypasses cross-validation.
  std::optional<double> lambda;
  //! Candidate lambdas; default 40 log-spaced points on [1e-7, 1e2] / n.
  std::vector<double> lambda_grid;
  double alpha = 1.4;
  bool refine = true;
  SplineBasisOptions basis;
  NewtonOptions newton;
};

struct CvPoint
{
  double lambda;
  double score;
};

//! Fitted log-density eta with the selected smoothing parameter.
struct SplineFit
{
  SplineBasis basis;
  Eigen::VectorXd coefficients;
  double lambda = 0.0;
  SplineMode mode = SplineMode::corrected;
  std::vector<CvPoint> cv_trace;
  int newton_iters = 0;
  bool converged = false;

  double eta(double x) const { return basis.features(x).dot(coefficients); }

  //! log of int e^eta over the domain on the quadrature grid.
  double log_normalizer() const
  {
    Eigen::VectorXd e = basis.quad_design * coefficients;
    double top = e.maxCoeff();
    double s = 0.0;
    for (Eigen::Index k = 0; k < e.size(); ++k)
      s += basis.quadrature.weights[k] * std::exp(e(k) - top);
    return top + std::log(s);
  }

  //! int eta over the domain, zero by construction of the basis.
  double side_condition() const
  {
    Eigen::VectorXd e = basis.quad_design * coefficients;
    double s = 0.0;
    for (Eigen::Index k = 0; k < e.size(); ++k)
      s += basis.quadrature.weights[k] * e(k);
    return s;
  }

  double density(double x) const { return std::exp(eta(x) - log_normalizer()); }

  std::vector<double> density(const std::vector<double>& xs) const
  {
    double lz = log_normalizer();
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
      out[i] = std::exp(eta(xs[i]) - lz);
    return out;
  }

  DensityEstimate estimate(const EvalGrid& grid) const
  {
    return { grid, density(grid.points()) };
  }
};

inline std::vector<double>
default_lambda_grid(std::size_t n, std::size_t count = 40)
{
  std::vector<double> grid(count);
  const double lo = std::log10(1e-7), hi = std::log10(1e2);
  for (std::size_t i = 0; i < count; ++i) {
    double p = count == 1 ? hi
                          : lo + (hi - lo) * static_cast<double>(i) /
                                   static_cast<double>(count - 1);
    grid[i] = std::pow(10.0, p) / static_cast<double>(n);
  }
  return grid;
}

//! Penalized likelihood density estimate.
//!
//! Certifies that the likelihood has a minimizer in the penalty null space,
//! then fits every candidate lambda (largest first, warm-started), scores each
//! by cross-validation, refines the best one by golden-section search in
//! log lambda, and refits at the winner.
inline SplineFit
fit_spline(const TruncatedSample& sample, const SplineOptions& opts = {})
{
  if (!(opts.alpha >= 0.0))
    detail::fail_config("InvalidAlpha", "alpha must be non-negative");
  SplineFit fit;
  fit.mode = opts.mode;
  fit.basis = build_basis(sample, opts.basis);
  const SplineLikelihood lik(sample, fit.basis, opts.mode);
  const Eigen::MatrixXd& gram = fit.basis.gram;

  Eigen::VectorXd start = Eigen::VectorXd::Zero(fit.basis.dim());
  start(0) = null_space_mle(lik);

  if (opts.lambda) {
    if (!(*opts.lambda > 0.0) || !std::isfinite(*opts.lambda))
      detail::fail_config("InvalidLambda", "lambda must be positive");
    auto res = newton_minimize(lik, gram, *opts.lambda, start, opts.newton);
    fit.coefficients = res.coef;
    fit.lambda = *opts.lambda;
    fit.newton_iters = res.iterations;
    fit.converged = res.converged;
    return fit;
  }

  std::vector<double> grid = opts.lambda_grid.empty()
                               ? default_lambda_grid(sample.size())
                               : opts.lambda_grid;
  for (double l : grid)
    if (!(l > 0.0) || !std::isfinite(l))
      detail::fail_config("InvalidLambda", "lambda grid must be positive");
  std::sort(grid.begin(), grid.end(), std::greater<>());

  struct Candidate
  {
    double lambda;
    double score;
    NewtonResult res;
  };
  std::vector<Candidate> fits;
  Eigen::VectorXd warm = start;
  int total_iters = 0;

  auto try_fit = [&](double lambda,
                     const Eigen::VectorXd& from) -> std::optional<Candidate> {
    try {
      auto res = newton_minimize(lik, gram, lambda, from, opts.newton);
      total_iters += res.iterations;
      if (!res.converged)
        return std::nullopt;
      double score = cv_terms(lik, gram, lambda, res.coef, opts.alpha).score;
      return Candidate{ lambda, score, std::move(res) };
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::numerical)
        throw;
      return std::nullopt;
    }
  };

  for (double lambda : grid) {
    auto c = try_fit(lambda, warm);
    if (c) {
      warm = c->res.coef;
      fit.cv_trace.push_back({ lambda, c->score });
      fits.push_back(std::move(*c));
    } else {
      fit.cv_trace.push_back({ lambda, std::numeric_limits<double>::infinity() });
      fits.push_back({ lambda, std::numeric_limits<double>::infinity(), {} });
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < fits.size(); ++i)
    if (fits[i].score < fits[best].score)
      best = i;
  if (!std::isfinite(fits[best].score))
    detail::fail_numerical("NewtonDiverged",
                           "no candidate lambda produced a converged fit");

  Candidate winner = fits[best];
  if (opts.refine && fits.size() > 1) {
    std::size_t left = best == 0 ? 0 : best - 1;
    std::size_t right = std::min(best + 1, fits.size() - 1);
    // grid is descending, so `left` holds the larger lambda
    double a = std::log(fits[right].lambda);
    double b = std::log(fits[left].lambda);
    const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
    auto eval = [&](double loglam) {
      auto c = try_fit(std::exp(loglam), winner.res.coef);
      if (!c)
        return std::numeric_limits<double>::infinity();
      fit.cv_trace.push_back({ c->lambda, c->score });
      if (c->score < winner.score)
        winner = std::move(*c);
      return fit.cv_trace.back().score;
    };
    double x1 = b - ratio * (b - a), x2 = a + ratio * (b - a);
    double f1 = eval(x1), f2 = eval(x2);
    while (b - a > 1e-2) {
      if (f1 < f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - ratio * (b - a);
        f1 = eval(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + ratio * (b - a);
        f2 = eval(x2);
      }
    }
  }

  fit.coefficients = winner.res.coef;
  fit.lambda = winner.lambda;
  fit.newton_iters = total_iters;
  fit.converged = winner.res.converged;
  return fit;
}

//! Cross-validation score of an existing fit on `sample`.
inline double
cv_score(const SplineFit& fit, const TruncatedSample& sample,
         double alpha = 1.4)
{
  SplineLikelihood lik(sample, fit.basis, fit.mode);
  return cv_terms(lik, fit.basis.gram, fit.lambda, fit.coefficients, alpha)
    .score;
}

} // namespace dtdens
