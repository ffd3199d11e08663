#pragma once

// Integration of sampled equation systems. Each equation may contain first
// derivatives nonlinearly (products such as du/dt * v), so the derivative
// vector is recovered at every evaluation by damped Newton iteration, then
// advanced with an adaptive Dormand-Prince 5(4) pair with dense output.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "edisc/dataio.hpp"
#include "edisc/error.hpp"
#include "edisc/tokens.hpp"

namespace edisc {

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 50;
};

class ResolvedSystem {
 public:
  ResolvedSystem() = default;

  /// `equations` maps each state variable to its equation. Tokens may be
  /// state values, first time derivatives, the constant, or 1/t.
  ResolvedSystem(const std::map<std::string, Equation>& equations, NewtonOptions opt = {})
      : opt_(opt) {
    for (const auto& [var, eq] : equations) {
      vars_.push_back(var);
      eqs_.push_back(eq);
    }
    for (const auto& eq : eqs_) {
      for (const auto& term : eq.terms()) {
        for (const auto& f : term.factors()) {
          if (f.family == Family::derivative) {
            if (f.order > 1)
              throw ValidationError("term '" + canonical_key(term) +
                                    "' has a derivative of order " + std::to_string(f.order) +
                                    "; only first-order systems can be integrated");
            if (index_of(f.variable) < 0)
              throw ValidationError("term '" + canonical_key(term) + "' uses '" + f.variable +
                                    "', which is not a state variable");
          }
        }
      }
    }
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      bool own = false;
      for (const auto& term : eqs_[i].terms()) own = own || term.has_time_derivative_of(vars_[i]);
      if (!own)
        throw ValidationError("equation for " + vars_[i] + " has no derivative of " + vars_[i]);
    }
    last_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vars_.size()));
  }

  const std::vector<std::string>& variables() const noexcept { return vars_; }
  std::size_t dimension() const noexcept { return vars_.size(); }
  int last_iterations() const noexcept { return iterations_; }

  /// Residuals target - sum c_j a_j and their Jacobian w.r.t. the derivatives.
  void residual(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& d, Eigen::VectorXd& F,
                Eigen::MatrixXd& J) const {
    const auto m = static_cast<Eigen::Index>(vars_.size());
    F.setZero(m);
    J.setZero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& eq = eqs_[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < eq.terms().size(); ++k) {
        const auto& term = eq.terms()[k];
        const double w = k == eq.target_index() ? 1.0 : -term.coefficient();
        const auto& fs = term.factors();
        std::vector<double> vals(fs.size());
        for (std::size_t a = 0; a < fs.size(); ++a) vals[a] = factor_value(fs[a], t, y, d);
        double prod = 1.0;
        for (double v : vals) prod *= v;
        F[i] += w * prod;
        for (std::size_t a = 0; a < fs.size(); ++a) {
          if (!fs[a].is_time_derivative()) continue;
          double rest = 1.0;
          for (std::size_t b = 0; b < fs.size(); ++b)
            if (b != a) rest *= vals[b];
          J(i, index_of(fs[a].variable)) += w * rest;
        }
      }
    }
  }

  /// Derivative vector at (t, y), warm-started from the previous solution.
  Eigen::VectorXd operator()(double t, const Eigen::VectorXd& y) {
    const auto m = static_cast<Eigen::Index>(vars_.size());
    Eigen::VectorXd d = last_, F(m), Ft(m);
    Eigen::MatrixXd J(m, m), Jt(m, m);
    residual(t, y, d, F, J);
    iterations_ = 0;
    auto converged = [&] {
      return d.allFinite() &&
             F.cwiseAbs().maxCoeff() <= opt_.tol * std::max(1.0, residual_scale(t, y, d));
    };
    if (converged()) return d;
    for (int it = 1; it <= opt_.max_iter; ++it) {
      iterations_ = it;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
      if (!lu.isInvertible())
        throw NewtonError("singular derivative Jacobian at t=" + format_number(t));
      const Eigen::VectorXd step = lu.solve(-F);
      double lambda = 1.0;
      const double f0 = F.norm();
      Eigen::VectorXd trial = d + step;
      residual(t, y, trial, Ft, Jt);
      while (!(Ft.norm() <= f0) && lambda > 1.0 / 1024) {
        lambda *= 0.5;
        trial = d + lambda * step;
        residual(t, y, trial, Ft, Jt);
      }
      d = trial;
      F = Ft;
      J = Jt;
      if (!d.allFinite()) break;
      if (converged()) {
        last_ = d;
        return d;
      }
    }
    throw NewtonError("Newton iteration did not converge in " + std::to_string(opt_.max_iter) +
                      " iterations at t=" + format_number(t));
  }

  void reset() { last_.setZero(); }

 private:
  std::ptrdiff_t index_of(const std::string& v) const {
    auto it = std::find(vars_.begin(), vars_.end(), v);
    return it == vars_.end() ? -1 : it - vars_.begin();
  }

  double factor_value(const Token& f, double t, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& d) const {
    switch (f.family) {
      case Family::constant: return 1.0;
      case Family::inverse_coordinate: return 1.0 / t;
      case Family::derivative: {
        const auto k = index_of(f.variable);
        return f.order == 0 ? y[k] : d[k];
      }
    }
    return 0.0;
  }

  // Largest single-term magnitude, so the residual test is relative.
  double residual_scale(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& d) const {
    double s = 0.0;
    for (const auto& eq : eqs_)
      for (const auto& term : eq.terms()) {
        double p = term.coefficient();
        for (const auto& f : term.factors()) p *= factor_value(f, t, y, d);
        s = std::max(s, std::abs(p));
      }
    return s;
  }

  std::vector<std::string> vars_;
  std::vector<Equation> eqs_;
  NewtonOptions opt_;
  Eigen::VectorXd last_;
  int iterations_ = 0;
};

inline ResolvedSystem resolve(const std::map<std::string, Equation>& equations,
                              NewtonOptions opt = {}) {
  return ResolvedSystem(equations, opt);
}

struct Trajectory {
  std::vector<std::string> variables;
  std::vector<double> times;
  std::vector<std::vector<double>> states;  // [time][variable]
  std::size_t steps = 0;
  std::size_t rejected = 0;
};

struct IntegrateOptions {
  double rtol = 1e-7;
  double atol = 1e-9;
  std::size_t max_steps = 1000000;
};

inline std::vector<double> uniform_times(double t0, double t1, int points) {
  if (points < 2) throw ConfigError("report_points must be >= 2");
  std::vector<double> out;
  for (int i = 0; i < points; ++i)
    out.push_back(i + 1 == points ? t1 : t0 + (t1 - t0) * i / (points - 1));
  return out;
}

/// Dormand-Prince 5(4) with the standard step controller. The state is
/// reported at `report` times (ascending, first equal to the start time) via
/// the method's fifth-order continuous extension.
template <class F>
Trajectory integrate_fn(F&& f, const std::vector<std::string>& variables,
                        const std::vector<double>& y0, const std::vector<double>& report,
                        const IntegrateOptions& opt = {}) {
  if (report.size() < 2) throw ConfigError("need at least two report times");
  const double t0 = report.front(), t1 = report.back();
  if (!(t1 > t0)) throw ConfigError("integration span must satisfy t1 > t0");
  if (!std::is_sorted(report.begin(), report.end())) throw ConfigError("report times unsorted");
  if (y0.size() != variables.size()) throw ConfigError("initial state has wrong dimension");
  for (double v : y0)
    if (!std::isfinite(v)) throw ConfigError("initial state must be finite");

  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0,
                          d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0,
                          d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

  using V = Eigen::VectorXd;
  const auto n = static_cast<Eigen::Index>(y0.size());
  Trajectory tr;
  tr.variables = variables;
  V y = Eigen::Map<const V>(y0.data(), n);
  double t = t0;
  const double span = t1 - t0;

  auto eval = [&](double tt, const V& yy) -> V {
    V k = f(tt, yy);
    if (!k.allFinite()) throw DivergenceError("non-finite derivative at t=" + format_number(tt), t);
    return k;
  };
  auto errnorm = [&](const V& err, const V& ya, const V& yb) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sc = opt.atol + opt.rtol * std::max(std::abs(ya[i]), std::abs(yb[i]));
      s += (err[i] / sc) * (err[i] / sc);
    }
    return std::sqrt(s / static_cast<double>(n));
  };

  V k1 = eval(t, y);
  // initial step (Hairer, Norsett and Wanner, II.4)
  double h;
  {
    const double d0 = errnorm(y, y, y), dd1 = errnorm(k1, y, y);
    double h0 = (d0 < 1e-5 || dd1 < 1e-5) ? 1e-6 : 0.01 * d0 / dd1;
    h0 = std::min(h0, span);
    V y1 = y + h0 * k1;
    double d2 = 0.0;
    try {
      d2 = errnorm(eval(t + h0, y1) - k1, y, y) / h0;
    } catch (const Error&) {
      d2 = 0.0;
    }
    const double h1 = std::max(dd1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                  : std::pow(0.01 / std::max(dd1, d2), 0.2);
    h = std::min({100 * h0, h1, span});
    k1 = eval(t, y);
  }

  std::size_t next = 0;
  auto record = [&](const std::vector<double>& s) {
    tr.times.push_back(report[next]);
    tr.states.push_back(s);
    ++next;
  };
  while (next < report.size() && report[next] <= t0) record(y0);

  const double hmin = 1e-12 * span;
  while (next < report.size()) {
    if (tr.steps + tr.rejected >= opt.max_steps)
      throw StiffnessError("step budget exhausted at t=" + format_number(t), t);
    if (h < hmin) throw StiffnessError("step size underflow at t=" + format_number(t), t);
    const bool last = t + h >= t1;
    if (last) h = t1 - t;
    V k2, k3, k4, k5, k6, k7, y5;
    bool ok = true;
    try {
      k2 = eval(t + c2 * h, y + h * (a21 * k1));
      k3 = eval(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
      k4 = eval(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
      k5 = eval(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      k6 = eval(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      y5 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
      if (!y5.allFinite()) throw DivergenceError("non-finite state", t);
      k7 = eval(t + h, y5);
    } catch (const NewtonError&) {
      ok = false;
    } catch (const DivergenceError&) {
      ok = false;
    }
    if (!ok) {
      ++tr.rejected;
      h *= 0.25;
      if (h < hmin)
        throw DivergenceError("derivative evaluation failed near t=" + format_number(t), t);
      continue;
    }
    const V err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = errnorm(err, y, y5);
    if (en <= 1.0) {
      const V ydiff = y5 - y;
      const V bspl = h * k1 - ydiff;
      const V r4 = ydiff - h * k7 - bspl;
      const V r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      const double tn = last ? t1 : t + h;
      while (next < report.size() && report[next] <= tn) {
        const double th = (report[next] - t) / h, th1 = 1.0 - th;
        V yi = y + th * (ydiff + th1 * (bspl + th * (r4 + th1 * r5)));
        if (report[next] == tn) yi = y5;
        record(std::vector<double>(yi.data(), yi.data() + n));
      }
      t = tn;
      y = y5;
      k1 = k7;
      ++tr.steps;
      const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
      h *= fac;
    } else {
      ++tr.rejected;
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
    }
  }
  return tr;
}

/// Integrates a resolved system; the Newton warm start begins at zero.
inline Trajectory integrate(ResolvedSystem& rs, const std::vector<double>& y0,
                            const std::vector<double>& report, const IntegrateOptions& opt = {}) {
  rs.reset();
  return integrate_fn([&](double t, const Eigen::VectorXd& y) { return rs(t, y); },
                      rs.variables(), y0, report, opt);
}

inline Trajectory integrate(ResolvedSystem& rs, const std::vector<double>& y0, double t0,
                            double t1, int report_points, const IntegrateOptions& opt = {}) {
  return integrate(rs, y0, uniform_times(t0, t1, report_points), opt);
}

struct Envelope {
  std::vector<std::string> variables;
  std::vector<double> times;
  std::vector<std::vector<double>> min, max, mean;  // [time][variable]
  std::size_t members = 0;
  std::size_t excluded = 0;
};

inline Envelope envelope(const std::vector<Trajectory>& trajectories, std::size_t excluded = 0) {
  if (trajectories.empty()) throw ContractError("envelope of an empty trajectory set");
  const auto& ref = trajectories.front();
  Envelope e{ref.variables, ref.times, ref.states, ref.states, ref.states, trajectories.size(),
             excluded};
  for (std::size_t k = 1; k < trajectories.size(); ++k) {
    const auto& tr = trajectories[k];
    if (tr.times != ref.times || tr.variables != ref.variables)
      throw ContractError("trajectories do not share a report grid");
    for (std::size_t i = 0; i < tr.times.size(); ++i)
      for (std::size_t j = 0; j < tr.variables.size(); ++j) {
        const double v = tr.states[i][j];
        e.min[i][j] = std::min(e.min[i][j], v);
        e.max[i][j] = std::max(e.max[i][j], v);
        e.mean[i][j] += v;
      }
  }
  for (auto& row : e.mean)
    for (auto& v : row) v /= static_cast<double>(trajectories.size());
  return e;
}

inline void write_trajectory_csv(const Trajectory& tr, std::ostream& out) {
  out << "t";
  for (const auto& v : tr.variables) out << "," << v;
  out << "\n";
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    out << format_number(tr.times[i]);
    for (double x : tr.states[i]) out << "," << format_number(x);
    out << "\n";
  }
}

inline void write_envelope_csv(const Envelope& e, std::ostream& out) {
  out << "t";
  for (const auto& v : e.variables) out << "," << v << "_min," << v << "_mean," << v << "_max";
  out << "\n";
  for (std::size_t i = 0; i < e.times.size(); ++i) {
    out << format_number(e.times[i]);
    for (std::size_t j = 0; j < e.variables.size(); ++j)
      out << "," << format_number(e.min[i][j]) << "," << format_number(e.mean[i][j]) << ","
          << format_number(e.max[i][j]);
    out << "\n";
  }
}

/// One panel per variable: shaded min/max band, dashed mean, observed data
/// in red when `data` carries that variable.
inline std::string envelope_svg(const Envelope& e, const DataSet* data = nullptr) {
  const double W = 640, H = 240, pad = 40;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
    << H * static_cast<double>(e.variables.size()) << "\">\n";
  for (std::size_t j = 0; j < e.variables.size(); ++j) {
    const auto& var = e.variables[j];
    const double top = H * static_cast<double>(j);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < e.times.size(); ++i) {
      lo = std::min(lo, e.min[i][j]);
      hi = std::max(hi, e.max[i][j]);
    }
    const bool with_data = data && data->has_variable(var);
    if (with_data)
      for (double v : data->channel(var)) lo = std::min(lo, v), hi = std::max(hi, v);
    if (!(hi > lo)) hi = lo + 1.0;
    const double t0 = e.times.front(), t1 = e.times.back();
    auto X = [&](double t) { return pad + (W - 2 * pad) * (t - t0) / (t1 - t0); };
    auto Y = [&](double v) { return top + H - pad / 2 - (H - pad) * (v - lo) / (hi - lo); };
    auto pt = [&](double t, double v) { return format_number(X(t)) + "," + format_number(Y(v)); };
    s << "<text x=\"4\" y=\"" << top + 16 << "\" font-size=\"12\">" << var << "</text>\n";
    s << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < e.times.size(); ++i) s << pt(e.times[i], e.max[i][j]) << " ";
    for (std::size_t i = e.times.size(); i-- > 0;) s << pt(e.times[i], e.min[i][j]) << " ";
    s << "\"/>\n<polyline fill=\"none\" stroke=\"black\" stroke-dasharray=\"6,4\" points=\"";
    for (std::size_t i = 0; i < e.times.size(); ++i) s << pt(e.times[i], e.mean[i][j]) << " ";
    s << "\"/>\n";
    if (with_data) {
      s << "<polyline fill=\"none\" stroke=\"red\" points=\"";
      const auto& g = data->grid();
      const auto& c = data->channel(var);
      for (std::size_t i = 0; i < g.size(); ++i) s << pt(g[i], c[i]) << " ";
      s << "\"/>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

/// delta*u - gamma*ln u + beta*v - alpha*ln v for du/dt = alpha*u - beta*u*v,
/// dv/dt = -gamma*v + delta*u*v.
inline double lv_first_integral(double u, double v, double alpha, double beta, double gamma,
                                double delta) {
  return delta * u - gamma * std::log(u) + beta * v - alpha * std::log(v);
}

}  // namespace edisc
