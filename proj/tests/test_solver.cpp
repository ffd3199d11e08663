#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "edisc/solver.hpp"
#include "lv_data.hpp"

using namespace edisc;
using testdata::kAlpha;
using testdata::kBeta;
using testdata::kDelta;
using testdata::kGamma;

namespace {

Token U() { return Token::field("u"); }
Token V() { return Token::field("v"); }
Token dU() { return Token::deriv("u", 1); }
Token dV() { return Token::deriv("v", 1); }
Term C(double c) { return Term({Token::constant()}, c); }

std::map<std::string, Equation> lv_system() {
  return {{"u", Equation({Term({dU()}), Term({U()}, kAlpha), Term({U(), V()}, -kBeta)}, 0)},
          {"v", Equation({Term({dV()}), Term({V()}, -kGamma), Term({U(), V()}, kDelta)}, 0)}};
}

Eigen::VectorXd lv_rhs(double, const Eigen::VectorXd& y) {
  Eigen::VectorXd d(2);
  d << kAlpha * y[0] - kBeta * y[0] * y[1], -kGamma * y[1] + kDelta * y[0] * y[1];
  return d;
}

// Period of the orbit through (30, 4): the first return to v = 4 from above,
// located on a fine reference trajectory. v decreases at the start.
double lv_period() {
  IntegrateOptions o;
  o.rtol = o.atol = 1e-12;
  const auto tr = integrate_fn(lv_rhs, {"u", "v"}, {30.0, 4.0}, uniform_times(0, 40, 400001), o);
  bool rose = false;
  for (std::size_t i = 1; i < tr.times.size(); ++i) {
    const double a = tr.states[i - 1][1] - 4.0, b = tr.states[i][1] - 4.0;
    if (a < 0 && b >= 0) rose = true;
    if (rose && a > 0 && b <= 0) return tr.times[i - 1] + (tr.times[i] - tr.times[i - 1]) * a / (a - b);
  }
  return NAN;
}

Trajectory constant_traj(double c, int n = 5) {
  Trajectory t;
  t.variables = {"u"};
  t.times = uniform_times(0, 1, n);
  t.states.assign(static_cast<std::size_t>(n), {c});
  return t;
}

}  // namespace

TEST(Resolve, ExplicitSystemInOneIteration) {
  auto rs = resolve(lv_system());
  Eigen::VectorXd y(2);
  y << 30, 4;
  const auto d = rs(0.0, y);
  EXPECT_NEAR(d[0], kAlpha * 30 - kBeta * 120, 1e-12);
  EXPECT_NEAR(d[1], -kGamma * 4 + kDelta * 120, 1e-12);
  EXPECT_EQ(rs.last_iterations(), 1);
}

TEST(Resolve, UnitRate) {
  auto rs = resolve({{"u", Equation({Term({dU()}), C(1.0)}, 0)}});
  for (double u : {-3.0, 0.0, 7.5}) {
    Eigen::VectorXd y(1);
    y << u;
    EXPECT_NEAR(rs(1.0, y)[0], 1.0, 1e-14);
  }
}

TEST(Resolve, ImplicitSystemMatchesBisectionOracle) {
  // first reported case (a) system, mean coefficients
  std::map<std::string, Equation> sys{
      {"u", Equation({Term({dU()}), Term({U()}, 0.5598), Term({U(), V()}, -0.028), Term({dV()}, 0.0941),
                      Term({dU(), V()}, 0.0019), Term({dU(), dV()}, 0.0023), C(-0.1073)},
                     0)},
      {"v", Equation({Term({dV()}), Term({V()}, -0.8278), Term({U(), V()}, 0.0256), Term({dU()}, 0.0037),
                      Term({dU(), dV()}, -0.0021), C(0.0998)},
                     0)}};
  const double u = 30, v = 4;
  // eliminate du/dt with the first equation, then bisect on dv/dt
  auto du_of = [&](double dv) {
    return (0.5598 * u - 0.028 * u * v + 0.0941 * dv - 0.1073) / (1 - 0.0019 * v - 0.0023 * dv);
  };
  auto h = [&](double dv) {
    const double du = du_of(dv);
    return dv - (-0.8278 * v + 0.0256 * u * v + 0.0037 * du - 0.0021 * du * dv + 0.0998);
  };
  double lo = -5, hi = 5;
  ASSERT_LT(h(lo) * h(hi), 0.0);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (h(lo) * h(mid) <= 0 ? hi : lo) = mid;
  }
  const double dv = 0.5 * (lo + hi), du = du_of(dv);

  auto rs = resolve(sys);
  Eigen::VectorXd y(2);
  y << u, v;
  const auto d = rs(0.0, y);
  EXPECT_NEAR(d[0], du, 1e-8);
  EXPECT_NEAR(d[1], dv, 1e-8);
  EXPECT_GT(rs.last_iterations(), 1);
}

TEST(Resolve, RejectsWhatCannotBeIntegrated) {
  EXPECT_THROW(resolve({{"u", Equation({Term({Token::deriv("u", 2)}), Term({dU()}, 1.0), Term({U()}, -1.0)}, 0)}}),
               ValidationError);
  EXPECT_THROW(resolve({{"u", Equation({Term({dU()}), Term({Token::field("w")}, 1.0)}, 0)}}), ValidationError);
  EXPECT_THROW(resolve({{"u", Equation({Term({dV()}), Term({U()}, 1.0)}, 0)}}), ValidationError);
}

TEST(Resolve, SingularJacobianFails) {
  // du/dt * (u - 2): the partial vanishes at u = 2
  auto rs = resolve({{"u", Equation({Term({dU(), U()}), Term({dU()}, 2.0), C(1.0)}, 0)}});
  Eigen::VectorXd y(1);
  y << 2.0;
  EXPECT_THROW(rs(0.0, y), NewtonError);
}

TEST(Integrate, ZeroRateKeepsInitialValue) {
  auto rs = resolve({{"u", Equation({Term({dU()}), C(0.0)}, 0)}});
  const auto tr = integrate(rs, {5.0}, 0.0, 3.0, 31);
  ASSERT_EQ(tr.times.size(), 31u);
  for (const auto& s : tr.states) EXPECT_EQ(s[0], 5.0);
}

TEST(Integrate, ExponentialDecay) {
  auto rs = resolve({{"u", Equation({Term({dU()}), Term({U()}, -1.0)}, 0)}});
  const auto tr = integrate(rs, {1.0}, 0.0, 1.0, 101);
  double worst = 0.0;
  for (std::size_t i = 0; i < tr.times.size(); ++i)
    worst = std::max(worst, std::abs(tr.states[i][0] - std::exp(-tr.times[i])));
  EXPECT_LT(worst, 1e-6);
}

TEST(Integrate, LotkaVolterraFirstIntegralConserved) {
  const double T = lv_period();
  ASSERT_TRUE(std::isfinite(T));
  auto rs = resolve(lv_system());
  const auto tr = integrate(rs, {30.0, 4.0}, 0.0, T, 1001);
  const double h0 = lv_first_integral(30, 4, kAlpha, kBeta, kGamma, kDelta);
  double drift = 0.0;
  for (const auto& s : tr.states)
    drift = std::max(drift, std::abs(lv_first_integral(s[0], s[1], kAlpha, kBeta, kGamma, kDelta) - h0));
  EXPECT_LT(drift / std::abs(h0), 1e-4);
  // the orbit closes
  EXPECT_NEAR(tr.states.back()[0], 30.0, 1e-3);
  EXPECT_NEAR(tr.states.back()[1], 4.0, 1e-3);
}

TEST(Integrate, SelfConvergence) {
  IntegrateOptions coarse, fine, ref;
  fine.rtol = coarse.rtol / 2;
  fine.atol = coarse.atol / 2;
  ref.rtol = ref.atol = 1e-13;
  auto run = [](double T, const IntegrateOptions& o) {
    auto rs = resolve(lv_system());
    return integrate(rs, {30.0, 4.0}, uniform_times(0, T, 11), o).states.back();
  };
  // over a unit span the endpoint moves by less than the coarse tolerance
  const auto a = run(1.0, coarse), b = run(1.0, fine);
  for (std::size_t j = 0; j < 2; ++j)
    EXPECT_LT(std::abs(a[j] - b[j]), coarse.rtol * std::abs(a[j]) + coarse.atol) << j;
  // over the full span the global error accumulates but still shrinks with the tolerance
  const auto c = run(20.0, coarse), f = run(20.0, fine), r = run(20.0, ref);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_LT(std::abs(f[j] - r[j]), 0.75 * std::abs(c[j] - r[j])) << j;
    EXPECT_LT(std::abs(c[j] - r[j]), 1e-5 * std::abs(r[j])) << j;
  }
}

TEST(Integrate, NewtonLayerMatchesClosedForm) {
  auto rs = resolve(lv_system());
  const auto times = uniform_times(0, 20, 401);
  const auto a = integrate(rs, {30.0, 4.0}, times);
  const auto b = integrate_fn(lv_rhs, {"u", "v"}, {30.0, 4.0}, times);
  for (std::size_t i = 0; i < times.size(); ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(a.states[i][j], b.states[i][j], 1e-9);
}

TEST(Integrate, BlowUpIsReported) {
  // du/dt = u^2 from 1 escapes at t = 1
  auto rs = resolve({{"u", Equation({Term({dU()}), Term({U(), U()}, 1.0)}, 0)}});
  try {
    integrate(rs, {1.0}, 0.0, 2.0, 11);
    FAIL();
  } catch (const IntegrationError& e) {
    EXPECT_NEAR(e.last_good_time(), 1.0, 1e-3);
  }
}

TEST(Integrate, BadArguments) {
  auto rs = resolve(lv_system());
  EXPECT_THROW(integrate(rs, {30.0, 4.0}, 1.0, 1.0, 10), ConfigError);
  EXPECT_THROW(integrate(rs, {30.0}, 0.0, 1.0, 10), ConfigError);
  EXPECT_THROW(integrate(rs, {30.0, 4.0}, 0.0, 1.0, 1), ConfigError);
}

TEST(Envelope, Examples) {
  const auto single = envelope({constant_traj(2.5)});
  for (std::size_t i = 0; i < single.times.size(); ++i) {
    EXPECT_EQ(single.min[i][0], 2.5);
    EXPECT_EQ(single.max[i][0], 2.5);
    EXPECT_EQ(single.mean[i][0], 2.5);
  }
  const auto two = envelope({constant_traj(1), constant_traj(3)}, 4);
  EXPECT_EQ(two.members, 2u);
  EXPECT_EQ(two.excluded, 4u);
  for (std::size_t i = 0; i < two.times.size(); ++i) {
    EXPECT_EQ(two.min[i][0], 1);
    EXPECT_EQ(two.max[i][0], 3);
    EXPECT_EQ(two.mean[i][0], 2);
  }
  EXPECT_THROW(envelope({}), ContractError);
  EXPECT_THROW(envelope({constant_traj(1, 5), constant_traj(1, 6)}), ContractError);
}

TEST(Envelope, UnionContainsPartsAndOrdersBand) {
  std::vector<Trajectory> s1, all;
  for (double a : {0.5, 0.55, 0.6}) {
    auto sys = lv_system();
    sys["u"] = Equation({Term({dU()}), Term({U()}, a), Term({U(), V()}, -kBeta)}, 0);
    auto rs = resolve(sys);
    all.push_back(integrate(rs, {30.0, 4.0}, 0.0, 10.0, 51));
    if (a != 0.6) s1.push_back(all.back());
  }
  const auto e1 = envelope(s1), e = envelope(all);
  for (std::size_t i = 0; i < e.times.size(); ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_LE(e.min[i][j], e1.min[i][j]);
      EXPECT_GE(e.max[i][j], e1.max[i][j]);
      EXPECT_LE(e.min[i][j], e.mean[i][j]);
      EXPECT_LE(e.mean[i][j], e.max[i][j]);
    }
}

TEST(Output, CsvAndSvg) {
  auto rs = resolve(lv_system());
  const auto tr = integrate(rs, {30.0, 4.0}, 0.0, 1.0, 3);
  std::ostringstream s;
  write_trajectory_csv(tr, s);
  EXPECT_EQ(s.str().substr(0, 6), "t,u,v\n");
  const auto svg = envelope_svg(envelope({tr}));
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
}
