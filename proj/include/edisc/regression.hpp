#pragma once

// Sparse regression of a target term on the remaining terms of an equation.
//
// The LASSO objective minimized here is
//
//     1/2 ||y - X b||^2 + lambda * sum_j ||x_j|| |b_j|
//
// i.e. the ordinary LASSO on unit-norm-scaled columns, with coefficients
// reported on the original scale. Columns are scaled but never centred: an
// intercept only enters through the constant token.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "edisc/error.hpp"
#include "edisc/tokens.hpp"

namespace edisc {

struct LassoOptions {
  int max_sweeps = 10000;
  double tol = 1e-8;
};

namespace detail {

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// Tries the exact solution on the current active set and sign pattern; returns
// it when it satisfies the optimality conditions.
inline std::optional<Eigen::VectorXd> polish(const Eigen::MatrixXd& G, const Eigen::VectorXd& c,
                                             const Eigen::VectorXd& b, double lambda,
                                             const std::vector<bool>& usable) {
  const Eigen::Index k = b.size();
  std::vector<Eigen::Index> act;
  for (Eigen::Index j = 0; j < k; ++j)
    if (b[j] != 0.0) act.push_back(j);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(k);
  if (!act.empty()) {
    const auto m = static_cast<Eigen::Index>(act.size());
    Eigen::MatrixXd Ga(m, m);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      rhs[a] = c[act[a]] - lambda * (b[act[a]] > 0 ? 1.0 : -1.0);
      for (Eigen::Index e = 0; e < m; ++e) Ga(a, e) = G(act[a], act[e]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(Ga);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
    Eigen::VectorXd sol = ldlt.solve(rhs);
    for (Eigen::Index a = 0; a < m; ++a) {
      if (!std::isfinite(sol[a])) return std::nullopt;
      if (lambda > 0.0 && (sol[a] == 0.0 || (sol[a] > 0) != (b[act[a]] > 0))) return std::nullopt;
      out[act[a]] = sol[a];
    }
  }
  const double slack = 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < k; ++j) {
    if (out[j] != 0.0 || !usable[static_cast<std::size_t>(j)]) continue;
    const double grad = c[j] - G.row(j).dot(out);
    if (std::abs(grad) > lambda + slack) return std::nullopt;
  }
  return out;
}

}  // namespace detail

/// LASSO by cyclic coordinate descent from Gram quantities G = X^T X and
/// c = X^T y (unscaled). Returns coefficients on the original scale.
inline Eigen::VectorXd lasso_gram(const Eigen::MatrixXd& G_raw, const Eigen::VectorXd& c_raw,
                                  double lambda, const LassoOptions& opt = {}) {
  if (lambda < 0.0 || !std::isfinite(lambda)) throw NumericError("lambda must be finite and >= 0");
  if (!G_raw.allFinite() || !c_raw.allFinite()) throw NumericError("non-finite design or response");
  const Eigen::Index k = c_raw.size();
  Eigen::VectorXd norms(k);
  std::vector<bool> usable(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    norms[j] = std::sqrt(std::max(0.0, G_raw(j, j)));
    usable[static_cast<std::size_t>(j)] = norms[j] > 0.0;
  }
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!usable[static_cast<std::size_t>(i)]) continue;
    c[i] = c_raw[i] / norms[i];
    for (Eigen::Index j = 0; j < k; ++j)
      if (usable[static_cast<std::size_t>(j)]) G(i, j) = G_raw(i, j) / (norms[i] * norms[j]);
  }

  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  bool converged = false;
  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (!usable[static_cast<std::size_t>(j)]) continue;
      const double r = c[j] - G.row(j).dot(b) + G(j, j) * b[j];
      const double nb = detail::soft_threshold(r, lambda) / G(j, j);
      max_change = std::max(max_change, std::abs(nb - b[j]));
      b[j] = nb;
    }
    if (max_change < opt.tol) {
      if (auto p = detail::polish(G, c, b, lambda, usable)) b = *p;
      converged = true;
      break;
    }
    if (sweep % 25 == 0) {
      if (auto p = detail::polish(G, c, b, lambda, usable)) {
        b = *p;
        converged = true;
        break;
      }
    }
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(k);
  for (Eigen::Index j = 0; j < k; ++j)
    if (usable[static_cast<std::size_t>(j)]) out[j] = b[j] / norms[j];
  if (!converged) {
    throw ConvergenceError("coordinate descent did not converge in " +
                               std::to_string(opt.max_sweeps) + " sweeps",
                           std::vector<double>(out.data(), out.data() + out.size()));
  }
  return out;
}

inline Eigen::VectorXd lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                             const LassoOptions& opt = {}) {
  if (X.rows() != y.size()) throw NumericError("design and response lengths differ");
  if (!X.allFinite() || !y.allFinite()) throw NumericError("non-finite design or response");
  return lasso_gram(X.transpose() * X, X.transpose() * y, lambda, opt);
}

/// The objective `lasso` minimizes, evaluated at `b`.
inline double lasso_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                              const Eigen::VectorXd& b) {
  double pen = 0.0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) pen += X.col(j).norm() * std::abs(b[j]);
  return 0.5 * (y - X * b).squaredNorm() + lambda * pen;
}

/// Picks lambda from `grid` by contiguous-block cross-validation. Ties go to
/// the larger lambda.
inline double cross_validated_lambda(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     const std::vector<double>& grid, int folds,
                                     const LassoOptions& opt = {}) {
  const Eigen::Index n = X.rows(), k = X.cols();
  if (grid.empty()) throw ConfigError("empty lambda grid");
  if (grid.size() == 1 || n < folds * 2 || k == 0) return grid.back();
  std::vector<Eigen::MatrixXd> Gb;
  std::vector<Eigen::VectorXd> cb;
  std::vector<double> yy;
  Eigen::MatrixXd Gt = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd ct = Eigen::VectorXd::Zero(k);
  for (int f = 0; f < folds; ++f) {
    const Eigen::Index lo = n * f / folds, hi = n * (f + 1) / folds;
    auto Xb = X.middleRows(lo, hi - lo);
    auto ybk = y.segment(lo, hi - lo);
    Gb.push_back(Xb.transpose() * Xb);
    cb.push_back(Xb.transpose() * ybk);
    yy.push_back(ybk.squaredNorm());
    Gt += Gb.back();
    ct += cb.back();
  }
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double best = std::numeric_limits<double>::infinity(), best_lambda = sorted.front();
  for (double lam : sorted) {
    double err = 0.0;
    for (int f = 0; f < folds; ++f) {
      Eigen::VectorXd b;
      try {
        b = lasso_gram(Gt - Gb[f], ct - cb[f], lam, opt);
      } catch (const ConvergenceError& e) {
        b = Eigen::Map<const Eigen::VectorXd>(e.last_iterate().data(),
                                              static_cast<Eigen::Index>(e.last_iterate().size()));
      }
      err += yy[f] - 2.0 * b.dot(cb[f]) + b.dot(Gb[f] * b);
    }
    if (err < best * (1.0 - 1e-12)) {
      best = err;
      best_lambda = lam;
    }
  }
  return best_lambda;
}

struct FitOptions {
  std::optional<double> lambda;  // empty: cross-validated over lambda_grid
  std::vector<double> lambda_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  int folds = 5;
  double epsilon = 1e-6;  // relative to the largest fitted magnitude
  LassoOptions lasso;
  std::optional<std::string> target_variable;  // restrict target choice
};

struct FitResult {
  std::string target_key;
  std::map<std::string, double> coefficients;  // retained terms, target = 1
  double residual_norm = 0.0;
  std::vector<std::string> pruned;
  double lambda = 0.0;
  Equation equation;  // retained terms only
};

/// Fits `target` against `others` (all given by term) and prunes. The target
/// term keeps coefficient 1.
inline FitResult fit_with_target(const Equation& eq, std::size_t target, TermCache& cache,
                                 const FitOptions& opt) {
  const auto& terms = eq.terms();
  const auto n = static_cast<Eigen::Index>(cache.data().size());
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < terms.size(); ++i)
    if (i != target) others.push_back(i);
  const auto& yv = cache(terms[target]);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(yv.data(), n);
  auto design = [&](const std::vector<std::size_t>& cols) {
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto& v = cache(terms[cols[j]]);
      X.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(v.data(), n);
    }
    return X;
  };
  Eigen::MatrixXd X = design(others);
  if (!X.allFinite() || !y.allFinite()) throw NumericError("non-finite term evaluation");

  FitResult r;
  r.target_key = canonical_key(terms[target]);
  r.lambda = opt.lambda ? *opt.lambda
                        : cross_validated_lambda(X, y, opt.lambda_grid, opt.folds, opt.lasso);
  Eigen::VectorXd b = lasso(X, y, r.lambda, opt.lasso);

  const double biggest = b.size() ? b.cwiseAbs().maxCoeff() : 0.0;
  const double cut = opt.epsilon * biggest;
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < others.size(); ++j) {
    const double c = b[static_cast<Eigen::Index>(j)];
    if (c != 0.0 && std::abs(c) >= cut) kept.push_back(others[j]);
    else r.pruned.push_back(canonical_key(terms[others[j]]));
  }
  Eigen::VectorXd bk;
  if (kept.size() != others.size() && !kept.empty()) {
    bk = lasso(design(kept), y, r.lambda, opt.lasso);
    std::vector<std::size_t> nonzero;
    Eigen::VectorXd bnz(bk.size());
    for (std::size_t j = 0; j < kept.size(); ++j) {
      const double c = bk[static_cast<Eigen::Index>(j)];
      if (c != 0.0) {
        bnz[static_cast<Eigen::Index>(nonzero.size())] = c;
        nonzero.push_back(kept[j]);
      } else {
        r.pruned.push_back(canonical_key(terms[kept[j]]));
      }
    }
    kept = nonzero;
    bk = bnz.head(static_cast<Eigen::Index>(kept.size())).eval();
  } else if (!kept.empty()) {
    bk = b;
  }
  Eigen::VectorXd resid = y;
  if (!kept.empty()) resid -= design(kept) * bk;
  r.residual_norm = resid.norm();

  std::vector<Term> out{terms[target].with_coefficient(1.0)};
  r.coefficients[r.target_key] = 1.0;
  for (std::size_t j = 0; j < kept.size(); ++j) {
    const double c = bk[static_cast<Eigen::Index>(j)];
    out.push_back(terms[kept[j]].with_coefficient(c));
    r.coefficients[canonical_key(terms[kept[j]])] = c;
  }
  r.equation = Equation(std::move(out), 0);
  return r;
}

/// Indices of terms eligible as target: terms with a time derivative (of the
/// configured variable, when set).
inline std::vector<std::size_t> target_candidates(const Equation& eq,
                                                  const std::optional<std::string>& var) {
  std::vector<std::size_t> c;
  for (std::size_t i = 0; i < eq.terms().size(); ++i) {
    const auto& t = eq.terms()[i];
    if (var ? t.has_time_derivative_of(*var) : t.has_time_derivative()) c.push_back(i);
  }
  return c;
}

/// Chooses a target uniformly among derivative-carrying terms, regresses it
/// on the remaining terms and prunes insignificant coefficients.
template <class Rng>
FitResult fit_equation(const Equation& eq, TermCache& cache, const FitOptions& opt, Rng& rng) {
  if (eq.complexity() < 2) throw DegenerateEquationError("equation needs at least 2 terms");
  auto cand = target_candidates(eq, opt.target_variable);
  if (cand.empty()) throw DegenerateEquationError("no term eligible as target");
  std::uniform_int_distribution<std::size_t> pick(0, cand.size() - 1);
  return fit_with_target(eq, cand[pick(rng)], cache, opt);
}

template <class Rng>
FitResult fit_equation(const Equation& eq, const DataSet& data, const FitOptions& opt, Rng& rng) {
  TermCache cache(data);
  return fit_equation(eq, cache, opt, rng);
}

/// How safely the equation can be solved for the first time derivative of
/// `var` along the observed states: min over the grid of the signed partial
/// derivative of the residual with respect to that derivative, divided by its
/// largest magnitude. Values <= 0 mean the partial vanishes or changes sign.
inline double resolvability_margin(const Equation& eq, const DataSet& data,
                                   const std::string& var) {
  std::vector<double> J(data.size(), 0.0);
  for (std::size_t i = 0; i < eq.terms().size(); ++i) {
    const auto& t = eq.terms()[i];
    const double w = i == eq.target_index() ? 1.0 : -t.coefficient();
    auto p = evaluate_term_partial(t, data, var);
    for (std::size_t k = 0; k < J.size(); ++k) J[k] += w * p[k];
  }
  double mean = 0.0, big = 0.0;
  for (double x : J) {
    mean += x;
    big = std::max(big, std::abs(x));
  }
  if (big == 0.0) return -1.0;
  const double s = mean >= 0.0 ? 1.0 : -1.0;
  double lo = std::numeric_limits<double>::infinity();
  for (double x : J) lo = std::min(lo, s * x);
  return lo / big;
}

}  // namespace edisc
