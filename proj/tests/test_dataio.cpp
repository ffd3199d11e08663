#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "edisc/dataio.hpp"

using namespace edisc;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / ("edisc_dataio_" + name);
  std::ofstream(p) << body;
  return p.string();
}

const std::string kLynxHare = std::string(EDISC_SOURCE_DIR) + "/data/hudson-bay-lynx-hare.csv";

std::vector<double> uniform(double a, double h, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(a + h * i);
  return g;
}

}  // namespace

TEST(LoadCsv, HudsonBayRowCountMatchesFile) {
  std::ifstream in(kLynxHare);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  const auto ds = load_csv(kLynxHare, "Year", {"Lynx", "Hare"});
  EXPECT_EQ(ds.variables().size(), 2u);
  EXPECT_EQ(ds.size(), lines - 1);
  EXPECT_DOUBLE_EQ(ds.grid().front(), 1900.0);
  EXPECT_DOUBLE_EQ(ds.channel("Hare").front(), 30.0);
  EXPECT_DOUBLE_EQ(ds.channel("Lynx").front(), 4.0);
}

TEST(LoadCsv, ZeroChannel) {
  const auto p = write_temp("zeros.csv", "t,u\n0,0\n1,0\n2,0\n");
  const auto ds = load_csv(p, "t", {"u"});
  EXPECT_EQ(ds.grid(), (std::vector<double>{0, 1, 2}));
  EXPECT_EQ(ds.channel("u"), (std::vector<double>{0, 0, 0}));
  EXPECT_FALSE(ds.has_derivative("u", 1));
}

TEST(LoadCsv, NonIncreasingGridRejected) {
  const auto p = write_temp("dup.csv", "t,u\n0,1\n1,2\n1,3\n");
  EXPECT_THROW(load_csv(p, "t", {"u"}), ValidationError);
}

TEST(LoadCsv, ErrorsNameTheProblem) {
  EXPECT_THROW(load_csv("/nonexistent/file.csv", "t", {"u"}), LoadError);
  const auto p = write_temp("cols.csv", "t,u\n0,1\n1,2\n2,3\n");
  try {
    load_csv(p, "t", {"w"});
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("'w'"), std::string::npos);
  }
  const auto q = write_temp("bad.csv", "t,u\n0,1\n1,x\n2,3\n");
  try {
    load_csv(q, "t", {"u"});
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(LoadCsv, RoundTripIsBitExact) {
  const auto ds = load_csv(kLynxHare, "Year", {"Lynx", "Hare"});
  std::ostringstream s;
  write_csv(ds, s, "Year");
  const auto p = write_temp("roundtrip.csv", s.str());
  const auto back = load_csv(p, "Year", {"Lynx", "Hare"});
  EXPECT_EQ(back.grid(), ds.grid());
  EXPECT_EQ(back.channel("Lynx"), ds.channel("Lynx"));
  EXPECT_EQ(back.channel("Hare"), ds.channel("Hare"));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-1e6, 1e6);
  std::vector<double> g, v;
  for (int i = 0; i < 50; ++i) {
    g.push_back(i);
    v.push_back(d(rng) / 7.0);
  }
  DataSet r(g, {"u"}, {v});
  std::ostringstream s2;
  write_csv(r, s2);
  EXPECT_EQ(load_csv(write_temp("rt2.csv", s2.str()), "t", {"u"}).channel("u"), v);
}

TEST(DataSet, InvariantsEnforced) {
  EXPECT_THROW(DataSet({0, 1}, {"u"}, {{1, 2}}), ValidationError);
  EXPECT_THROW(DataSet({0, 1, 2}, {"u"}, {{1, 2}}), ValidationError);
  EXPECT_THROW(DataSet({0, 1, 2}, {"u"}, {{1, NAN, 2}}), ValidationError);
  EXPECT_THROW(DataSet({0, 2, 1}, {"u"}, {{1, 2, 3}}), ValidationError);
  DataSet ok({0, 1, 2}, {"u"}, {{4, 5, 6}});
  EXPECT_EQ(ok.derivative("u", 0), ok.channel("u"));
  EXPECT_THROW(ok.derivative("u", 1), EvaluationError);
}

TEST(Differentiate, CentralExactForQuadratics) {
  const auto g = uniform(0.0, 0.5, 11);
  std::vector<double> u;
  for (double t : g) u.push_back(t * t);
  DiffOptions o;
  o.method = DiffMethod::central;
  const auto d = differentiate(DataSet(g, {"u"}, {u}), "u", 1, o).derivative("u", 1);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(d[i], 2 * g[i], 1e-12);
}

TEST(Differentiate, CentralSineWithinTolerance) {
  const auto g = uniform(0.0, 0.01, 629);
  std::vector<double> u;
  for (double t : g) u.push_back(std::sin(t));
  DiffOptions o;
  o.method = DiffMethod::central;
  const auto d = differentiate(DataSet(g, {"u"}, {u}), "u", 1, o).derivative("u", 1);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(d[i] - std::cos(g[i])));
  EXPECT_LT(worst, 1e-3);
}

// Quadratic least-squares fit per window solved independently through the
// normal equations on raw (uncentred) times.
std::vector<double> brute_quadratic_slope(const std::vector<double>& x, const std::vector<double>& y,
                                          int w) {
  const int n = static_cast<int>(x.size()), h = w / 2;
  std::vector<double> out;
  for (int i = 0; i < n; ++i) {
    int lo = std::clamp(i - h, 0, n - w);
    double A[3][3] = {}, b[3] = {};
    for (int k = lo; k < lo + w; ++k) {
      const double s = x[k] - x[i];
      const double phi[3] = {1, s, s * s};
      for (int r = 0; r < 3; ++r) {
        b[r] += phi[r] * y[k];
        for (int c = 0; c < 3; ++c) A[r][c] += phi[r] * phi[c];
      }
    }
    // Cramer's rule for the middle unknown
    auto det = [](double M[3][3]) {
      return M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1]) -
             M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0]) +
             M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]);
    };
    double B[3][3];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) B[r][c] = c == 1 ? b[r] : A[r][c];
    out.push_back(det(B) / det(A));
  }
  return out;
}

TEST(Differentiate, SmoothedMatchesBruteForceFit) {
  const auto ds = load_csv(kLynxHare, "Year", {"Lynx", "Hare"});
  DiffOptions o;
  o.method = DiffMethod::smoothed;
  o.window = 5;
  const auto d = differentiate(ds, "Lynx", 1, o).derivative("Lynx", 1);
  const auto oracle = brute_quadratic_slope(ds.grid(), ds.channel("Lynx"), 5);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(d[i], oracle[i], 1e-10);
}

TEST(Differentiate, LinearAndConstantProperties) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-5, 5);
  const auto g = uniform(0.0, 0.3, 25);
  std::vector<double> f, h, c(g.size(), 3.5);
  for (std::size_t i = 0; i < g.size(); ++i) {
    f.push_back(U(rng));
    h.push_back(U(rng));
  }
  const double a = 1.7, b = -0.4;
  std::vector<double> mix;
  for (std::size_t i = 0; i < g.size(); ++i) mix.push_back(a * f[i] + b * h[i]);
  for (auto m : {DiffMethod::central, DiffMethod::smoothed, DiffMethod::spline}) {
    DiffOptions o;
    o.method = m;
    for (int order = 1; order <= 2; ++order) {
      const auto df = differentiate_values(g, f, order, o);
      const auto dh = differentiate_values(g, h, order, o);
      const auto dm = differentiate_values(g, mix, order, o);
      for (std::size_t i = 0; i < g.size(); ++i)
        EXPECT_NEAR(dm[i], a * df[i] + b * dh[i], 1e-12 * (1 + std::abs(dm[i])));
    }
    for (double x : differentiate_values(g, c, 1, o)) EXPECT_NEAR(x, 0.0, 1e-12);
  }
}

TEST(Differentiate, ErrorsAndLimits) {
  DataSet small({0, 1, 2, 3}, {"u"}, {{1, 2, 4, 8}});
  DiffOptions o;
  o.method = DiffMethod::central;
  EXPECT_THROW(differentiate(small, "u", 2, o), StencilError);
  o.max_order = 1;
  EXPECT_THROW(differentiate(small, "u", 2, o), ConfigError);
  EXPECT_THROW(differentiate(small, "u", 0, o), ConfigError);
  DataSet tiny({0, 1, 2}, {"u"}, {{1, 2, 4}});
  DiffOptions s;
  EXPECT_THROW(differentiate(tiny, "u", 1, s), StencilError);
  s.window = 4;
  EXPECT_THROW(differentiate(small, "u", 1, s), ConfigError);
}

TEST(Differentiate, ExistingEntriesUntouched) {
  const auto ds = load_csv(kLynxHare, "Year", {"Lynx", "Hare"});
  DiffOptions o;
  const auto d1 = differentiate(ds, "Lynx", 1, o);
  const auto d2 = differentiate(d1, "Hare", 1, o);
  EXPECT_EQ(d2.derivative("Lynx", 1), d1.derivative("Lynx", 1));
  EXPECT_EQ(d2.channel("Lynx"), ds.channel("Lynx"));
}

TEST(Spline, ReproducesCubicsExactly) {
  const auto g = uniform(-1.0, 0.4, 9);
  std::vector<double> y;
  auto f = [](double t) { return 2 * t * t * t - t * t + 3 * t - 1; };
  for (double t : g) y.push_back(f(t));
  CubicSpline s(g, y);
  for (double t : {-0.93, 0.0, 0.41, 1.9, 2.2}) {
    EXPECT_NEAR(s(t, 0), f(t), 1e-10);
    EXPECT_NEAR(s(t, 1), 6 * t * t - 2 * t + 3, 1e-9);
    EXPECT_NEAR(s(t, 2), 12 * t - 2, 1e-8);
  }
}

TEST(Normalize, DividesByStandardDeviation) {
  const auto ds = load_csv(kLynxHare, "Year", {"Lynx", "Hare"});
  const auto n = normalize(with_all_derivatives(ds, DiffOptions{}));
  EXPECT_NEAR(n.factors.at("Lynx"), 16.656, 5e-4);
  EXPECT_NEAR(n.factors.at("Hare"), 21.414, 5e-4);
  EXPECT_NEAR(sample_std(n.data.channel("Lynx")), 1.0, 1e-12);
}
