#pragma once

// Fixed-library baseline: sequentially thresholded least squares over a ten
// term polynomial library, with library bootstrapping (random column subsets
// and resampled rows) to obtain coefficient distributions.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "edisc/dataio.hpp"
#include "edisc/error.hpp"
#include "edisc/tokens.hpp"

namespace edisc {

struct FixedLibrary {
  std::vector<Term> terms;
  std::vector<std::string> keys;
  Eigen::MatrixXd values;  // rows: grid points, columns: terms
};

/// Library for the equation of `own` in a two-variable system (u, v), in the
/// order: own, uv, other, u^2, v^2, 1, uv^2, vu^2, u^3, v^3.
inline FixedLibrary build_library(const DataSet& data, const std::string& own) {
  if (data.variables().size() != 2)
    throw ConfigError("the fixed library needs exactly two state variables");
  const auto& u = data.variables()[0];
  const auto& v = data.variables()[1];
  if (own != u && own != v) throw ConfigError("unknown variable '" + own + "'");
  const auto& other = own == u ? v : u;
  auto F = [](const std::string& x) { return Token::field(x); };
  FixedLibrary lib;
  lib.terms = {Term({F(own)}),           Term({F(u), F(v)}),       Term({F(other)}),
               Term({F(u), F(u)}),       Term({F(v), F(v)}),       Term({Token::constant()}),
               Term({F(u), F(v), F(v)}), Term({F(u), F(u), F(v)}), Term({F(u), F(u), F(u)}),
               Term({F(v), F(v), F(v)})};
  const auto n = static_cast<Eigen::Index>(data.size());
  lib.values.resize(n, static_cast<Eigen::Index>(lib.terms.size()));
  for (std::size_t j = 0; j < lib.terms.size(); ++j) {
    lib.keys.push_back(canonical_key(lib.terms[j]));
    const auto col = evaluate_term(lib.terms[j], data);
    lib.values.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
  }
  if (!lib.values.allFinite()) throw NumericError("non-finite library evaluation");
  return lib;
}

/// Least squares, then repeatedly zero coefficients below `threshold` in
/// magnitude and refit on the survivors until the support stops changing.
/// Returns nothing when a reduced system is rank deficient.
inline std::optional<Eigen::VectorXd> stlsq(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                            double threshold, int max_iter = 100) {
  const Eigen::Index k = X.cols();
  std::vector<Eigen::Index> active(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) active[static_cast<std::size_t>(j)] = j;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  for (int it = 0; it < max_iter; ++it) {
    b.setZero();
    if (active.empty()) return b;
    Eigen::MatrixXd Xa(X.rows(), static_cast<Eigen::Index>(active.size()));
    for (std::size_t a = 0; a < active.size(); ++a) Xa.col(static_cast<Eigen::Index>(a)) = X.col(active[a]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xa);
    if (qr.rank() < Xa.cols()) return std::nullopt;
    const Eigen::VectorXd ba = qr.solve(y);
    std::vector<Eigen::Index> next;
    for (std::size_t a = 0; a < active.size(); ++a) {
      b[active[a]] = ba[static_cast<Eigen::Index>(a)];
      if (std::abs(ba[static_cast<Eigen::Index>(a)]) >= threshold) next.push_back(active[a]);
    }
    if (next.size() == active.size()) return b;
    active = std::move(next);
  }
  return b;
}

struct BaselineOptions {
  int n_boot = 1000;
  double keep_fraction = 0.8;
  double threshold = 0.2;
  bool resample_rows = true;
  bool normalize = true;  // fit on data divided by per-variable sample std
  int interpolate = 201;  // spline resampling points, 0 keeps the data grid
  double inclusion = 0.5;
};

struct BaselineTerm {
  std::string key;
  double inclusion = 0.0;  // fraction of completed trials with a nonzero coefficient
  std::optional<double> mean;        // raw units, over trials where nonzero
  std::optional<double> half_width;  // 1.96 * standard error of that mean
};

struct BaselineResult {
  std::string variable;
  std::vector<std::string> keys;
  std::vector<std::vector<double>> trials;  // raw-unit coefficients per trial
  std::size_t skipped = 0;
  std::vector<BaselineTerm> terms;

  std::vector<std::string> support(double inclusion) const {
    std::vector<std::string> s;
    for (const auto& t : terms)
      if (t.inclusion >= inclusion) s.push_back(t.key);
    return s;
  }
};

/// Spline-resampled copy of `data` on `points` uniform times, with first
/// derivatives taken from the same splines.
inline DataSet resample_with_spline(const DataSet& data, int points) {
  const auto& g = data.grid();
  std::vector<double> t;
  for (int i = 0; i < points; ++i)
    t.push_back(i + 1 == points ? g.back() : g.front() + (g.back() - g.front()) * i / (points - 1));
  std::vector<std::vector<double>> ch;
  std::vector<std::vector<double>> d1;
  for (const auto& v : data.variables()) {
    CubicSpline s(g, data.channel(v));
    std::vector<double> a, b;
    for (double x : t) {
      a.push_back(s(x, 0));
      b.push_back(s(x, 1));
    }
    ch.push_back(std::move(a));
    d1.push_back(std::move(b));
  }
  DataSet out(t, data.variables(), ch, data.axis());
  for (std::size_t k = 0; k < data.variables().size(); ++k)
    out = out.with_derivative(data.variables()[k], 1, d1[k]);
  return out;
}

/// Library bootstrapping for the equation of `variable`. `data` must carry
/// first derivatives unless spline resampling is enabled.
template <class Rng>
BaselineResult bootstrap_discover(const DataSet& data, const std::string& variable,
                                  const BaselineOptions& opt, Rng& rng) {
  if (opt.n_boot < 1) throw ConfigError("n_boot must be >= 1");
  if (!(opt.keep_fraction > 0.0 && opt.keep_fraction <= 1.0))
    throw ConfigError("keep_fraction must lie in (0, 1]");
  if (opt.threshold < 0.0) throw ConfigError("threshold must be >= 0");
  DataSet work = opt.interpolate > 0 ? resample_with_spline(data, opt.interpolate) : data;
  std::map<std::string, double> scale;
  for (const auto& v : work.variables()) scale[v] = 1.0;
  if (opt.normalize) {
    for (const auto& v : work.variables()) scale[v] = sample_std(data.channel(v));
    work = normalize(work).data;
  }
  if (!work.has_derivative(variable, 1))
    throw EvaluationError("baseline needs the first derivative of " + variable);
  const auto lib = build_library(work, variable);
  const auto& yd = work.derivative(variable, 1);
  const auto n = static_cast<Eigen::Index>(work.size());
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(yd.data(), n);
  const auto k = lib.terms.size();

  std::vector<double> to_raw(k);
  for (std::size_t j = 0; j < k; ++j) {
    double s = scale.at(variable);
    for (const auto& f : lib.terms[j].factors())
      if (f.is_raw_field()) s /= scale.at(f.variable);
    to_raw[j] = s;
  }

  BaselineResult res;
  res.variable = variable;
  res.keys = lib.keys;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<Eigen::Index> row(0, n - 1);
  std::uniform_int_distribution<std::size_t> col(0, k - 1);
  for (int trial = 0; trial < opt.n_boot; ++trial) {
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < k; ++j)
      if (unif(rng) < opt.keep_fraction) cols.push_back(j);
    if (cols.empty()) cols.push_back(col(rng));
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = opt.resample_rows ? row(rng) : i;
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(cols.size()));
    Eigen::VectorXd yy(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto r = rows[static_cast<std::size_t>(i)];
      yy[i] = y[r];
      for (std::size_t c = 0; c < cols.size(); ++c)
        X(i, static_cast<Eigen::Index>(c)) = lib.values(r, static_cast<Eigen::Index>(cols[c]));
    }
    auto b = stlsq(X, yy, opt.threshold);
    if (!b) {
      ++res.skipped;
      continue;
    }
    std::vector<double> full(k, 0.0);
    for (std::size_t c = 0; c < cols.size(); ++c)
      full[cols[c]] = (*b)[static_cast<Eigen::Index>(c)] * to_raw[cols[c]];
    res.trials.push_back(std::move(full));
  }

  for (std::size_t j = 0; j < k; ++j) {
    BaselineTerm t{lib.keys[j], 0.0, {}, {}};
    std::vector<double> nz;
    for (const auto& tr : res.trials)
      if (tr[j] != 0.0) nz.push_back(tr[j]);
    if (!res.trials.empty())
      t.inclusion = static_cast<double>(nz.size()) / static_cast<double>(res.trials.size());
    if (!nz.empty()) {
      const auto m = static_cast<double>(nz.size());
      double shift = 0.0;
      for (double x : nz) shift += x - nz[0];
      shift /= m;
      t.mean = nz[0] + shift;
      double ss = 0.0;
      for (double x : nz) ss += (x - nz[0] - shift) * (x - nz[0] - shift);
      t.half_width = nz.size() > 1 ? 1.96 * std::sqrt(ss / (m - 1)) / std::sqrt(m) : 0.0;
    }
    res.terms.push_back(t);
  }
  return res;
}

/// "(0.5274 ± 0.0049)*u + (-0.025 ± 0.0001)*u*v" over terms at or above the
/// inclusion cut.
inline std::string render_baseline(const BaselineResult& r, double inclusion, int precision = 4) {
  auto num = [&](double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, x);
    return std::string(buf);
  };
  std::string rhs;
  for (const auto& t : r.terms) {
    if (t.inclusion < inclusion || !t.mean) continue;
    if (!rhs.empty()) rhs += " + ";
    rhs += "(" + num(*t.mean) + " ± " + num(t.half_width.value_or(0.0)) + ")";
    const auto term = parse_term_key(t.key);
    if (!term.is_constant()) rhs += "*" + term.pretty();
  }
  return Token::deriv(r.variable, 1).pretty() + " = " + (rhs.empty() ? "0" : rhs);
}

/// Reference Lotka-Volterra coefficients: du/dt = alpha*u - beta*u*v,
/// dv/dt = -gamma*v + delta*u*v.
struct LotkaVolterra {
  double alpha = 0.55, beta = 0.028, gamma = 0.84, delta = 0.026;
};

struct CoefficientErrors {
  double u = 0.0, v = 0.0, uv_u = 0.0, uv_v = 0.0;
  double mean_uv() const { return 0.5 * (uv_u + uv_v); }
  double mean() const { return (u + v + mean_uv()) / 3.0; }
};

/// Relative errors |fitted - reference| / |reference| of the four
/// Lotka-Volterra coefficients. Missing terms count as coefficient 0.
inline CoefficientErrors coefficient_errors(
    const std::map<std::string, std::map<std::string, double>>& coefs, const std::string& u,
    const std::string& v, const LotkaVolterra& ref = {}) {
  auto get = [&](const std::string& var, const std::string& key) {
    auto it = coefs.find(var);
    if (it == coefs.end()) return 0.0;
    auto jt = it->second.find(key);
    return jt == it->second.end() ? 0.0 : jt->second;
  };
  const auto uv = canonical_key(Term({Token::field(u), Token::field(v)}));
  auto rel = [](double x, double r) { return std::abs(x - r) / std::abs(r); };
  CoefficientErrors e;
  e.u = rel(get(u, u), ref.alpha);
  e.uv_u = rel(get(u, uv), -ref.beta);
  e.v = rel(get(v, v), -ref.gamma);
  e.uv_v = rel(get(v, uv), ref.delta);
  return e;
}

}  // namespace edisc
