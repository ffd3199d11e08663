#pragma once

// Shared synthetic data for tests: a noise-free Lotka-Volterra trajectory.

#include <cmath>
#include <map>

#include "edisc/dataio.hpp"
#include "edisc/solver.hpp"

namespace testdata {

inline constexpr double kAlpha = 0.55, kBeta = 0.028, kGamma = 0.84, kDelta = 0.026;

/// du/dt = 0.55u - 0.028uv, dv/dt = -0.84v + 0.026uv from (30, 4) on
/// [0, t1] with `points` samples.
inline edisc::DataSet lotka_volterra(double t1 = 20.0, int points = 2001) {
  auto f = [](double, const Eigen::VectorXd& y) {
    Eigen::VectorXd d(2);
    d[0] = kAlpha * y[0] - kBeta * y[0] * y[1];
    d[1] = -kGamma * y[1] + kDelta * y[0] * y[1];
    return d;
  };
  edisc::IntegrateOptions o;
  o.rtol = 1e-12;
  o.atol = 1e-12;
  const auto tr = edisc::integrate_fn(f, {"u", "v"}, {30.0, 4.0},
                                      edisc::uniform_times(0.0, t1, points), o);
  std::vector<double> u, v;
  for (const auto& s : tr.states) {
    u.push_back(s[0]);
    v.push_back(s[1]);
  }
  return edisc::DataSet(tr.times, {"u", "v"}, {u, v});
}

/// Attaches the exact right-hand sides as first derivatives.
inline edisc::DataSet with_exact_derivatives(const edisc::DataSet& ds) {
  const auto& u = ds.channel("u");
  const auto& v = ds.channel("v");
  std::vector<double> du, dv;
  for (std::size_t i = 0; i < u.size(); ++i) {
    du.push_back(kAlpha * u[i] - kBeta * u[i] * v[i]);
    dv.push_back(-kGamma * v[i] + kDelta * u[i] * v[i]);
  }
  return ds.with_derivative("u", 1, du).with_derivative("v", 1, dv);
}

}  // namespace testdata
