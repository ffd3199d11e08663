#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "edisc/regression.hpp"
#include "lasso_oracle.hpp"
#include "lv_data.hpp"

using namespace edisc;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index k, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::MatrixXd X(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j) X(i, j) = N(rng);
  return X;
}

Token U() { return Token::field("u"); }
Token V() { return Token::field("v"); }
Token dU() { return Token::deriv("u", 1); }

DataSet exponential(double rate) {
  std::vector<double> t, u, du;
  for (int i = 0; i <= 200; ++i) {
    t.push_back(0.01 * i);
    u.push_back(std::exp(rate * t.back()));
    du.push_back(rate * u.back());
  }
  return DataSet(t, {"u"}, {u}).with_derivative("u", 1, du);
}

}  // namespace

TEST(Lasso, ZeroLambdaMatchesNormalEquations) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd X = random_matrix(4, 4, rng);
    const Eigen::VectorXd y = random_matrix(4, 1, rng).col(0);
    const Eigen::VectorXd oracle = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    const Eigen::VectorXd b = lasso(X, y, 0.0);
    EXPECT_LT((b - oracle).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Lasso, OrthonormalDesignSoftThresholds) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd Q = random_matrix(30, 4, rng).householderQr().householderQ() *
                              Eigen::MatrixXd::Identity(30, 4);
    const Eigen::VectorXd y = 2.0 * random_matrix(30, 1, rng).col(0);
    const double lambda = 0.05 + 0.2 * rep / 20.0;
    const Eigen::VectorXd beta = Q.transpose() * y;
    const Eigen::VectorXd b = lasso(Q, y, lambda);
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double expect = std::copysign(std::max(std::abs(beta[j]) - lambda, 0.0), beta[j]);
      EXPECT_NEAR(b[j], expect, 1e-10);
    }
  }
}

TEST(Lasso, ZeroResponseGivesZeroCoefficients) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd X = random_matrix(20, 3, rng);
  const Eigen::VectorXd b = lasso(X, Eigen::VectorXd::Zero(20), 0.1);
  EXPECT_EQ(b, Eigen::VectorXd::Zero(3));
}

TEST(Lasso, ZeroColumnGetsZero) {
  std::mt19937_64 rng(4);
  Eigen::MatrixXd X = random_matrix(20, 3, rng);
  X.col(1).setZero();
  const Eigen::VectorXd b = lasso(X, random_matrix(20, 1, rng).col(0), 0.0);
  EXPECT_EQ(b[1], 0.0);
}

TEST(Lasso, ErrorsReported) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(5, 2);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(5);
  X(2, 1) = NAN;
  EXPECT_THROW(lasso(X, y, 0.1), NumericError);
  EXPECT_THROW(lasso(Eigen::MatrixXd::Ones(4, 2), y, 0.1), NumericError);
  EXPECT_THROW(lasso(Eigen::MatrixXd::Ones(5, 2), y, -1.0), NumericError);

  // a near-collinear pair needs many sweeps; a budget of one cannot converge
  std::mt19937_64 rng(5);
  Eigen::MatrixXd Z = random_matrix(30, 2, rng);
  Z.col(1) = Z.col(0) + 1e-3 * Z.col(1);
  LassoOptions o;
  o.max_sweeps = 1;
  try {
    lasso(Z, Z.col(0) + Z.col(1), 0.0, o);
    FAIL();
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.last_iterate().size(), 2u);
  }
}

TEST(Lasso, PenaltyMonotoneInLambda) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd X = random_matrix(40, 5, rng);
    const Eigen::VectorXd y = X * random_matrix(5, 1, rng).col(0) + 0.3 * random_matrix(40, 1, rng).col(0);
    double prev = std::numeric_limits<double>::infinity();
    for (double lam : {0.0, 1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0}) {
      const Eigen::VectorXd b = lasso(X, y, lam);
      // the l1 norm of the scaled coefficients, i.e. the penalty actually applied
      double l1 = 0.0;
      for (Eigen::Index j = 0; j < X.cols(); ++j) l1 += X.col(j).norm() * std::abs(b[j]);
      EXPECT_LE(l1, prev + 1e-9);
      prev = l1;
    }
  }
}

TEST(Lasso, DuplicatedResponseColumnFitsExactly) {
  std::mt19937_64 rng(7);
  Eigen::MatrixXd X = random_matrix(50, 3, rng);
  const Eigen::VectorXd y = random_matrix(50, 1, rng).col(0);
  X.col(2) = y;
  const Eigen::VectorXd b = lasso(X, y, 0.0);
  EXPECT_LT((y - X * b).norm(), 1e-10);
}

TEST(Lasso, NoWorseThanGridScan) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> coef(-1.5, 1.5);
  for (int rep = 0; rep < 12; ++rep) {
    const Eigen::Index k = 1 + rep % 3;
    const Eigen::MatrixXd X = random_matrix(25, k, rng);
    Eigen::VectorXd truth(k);
    for (Eigen::Index j = 0; j < k; ++j) truth[j] = coef(rng);
    const Eigen::VectorXd y = X * truth + 0.2 * random_matrix(25, 1, rng).col(0);
    const double lambda = 0.02 * (1 + rep);
    const Eigen::VectorXd b = lasso(X, y, lambda);
    const double grid = testdata::lasso_grid_best(X, y, lambda, 1e-2);
    EXPECT_LE(lasso_objective(X, y, lambda, b), grid + 1e-6);
  }
}

TEST(CrossValidation, PrefersLargerLambdaOnTies) {
  // zero response: every lambda gives zero error
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd X = random_matrix(50, 2, rng);
  EXPECT_EQ(cross_validated_lambda(X, Eigen::VectorXd::Zero(50), {1e-4, 1e-2, 1.0}, 5), 1.0);
  EXPECT_THROW(cross_validated_lambda(X, Eigen::VectorXd::Zero(50), {}, 5), ConfigError);
}

TEST(FitEquation, LotkaVolterraCoefficients) {
  const auto ds = testdata::with_exact_derivatives(testdata::lotka_volterra());
  Equation eq({Term({dU()}), Term({U()}), Term({U(), V()})}, 0);
  FitOptions o;
  std::mt19937_64 rng(1);
  const auto r = fit_equation(eq, ds, o, rng);
  EXPECT_EQ(r.target_key, "d1_u");
  EXPECT_NEAR(r.coefficients.at("u"), 0.55, 0.02 * 0.55);
  EXPECT_NEAR(r.coefficients.at("u*v"), -0.028, 0.02 * 0.028);
}

TEST(FitEquation, ExponentialGrowthRate) {
  const auto ds = exponential(0.5);
  Equation eq({Term({dU()}), Term({U()})}, 0);
  FitOptions o;
  o.lambda = 0.0;
  std::mt19937_64 rng(1);
  const auto r = fit_equation(eq, ds, o, rng);
  EXPECT_NEAR(r.coefficients.at("u"), 0.5, 1e-6);
  EXPECT_LT(r.residual_norm, 1e-6);
  EXPECT_EQ(render(r.equation), "du/dt = 0.5*u");
}

TEST(FitEquation, EpsilonAboveEveryMagnitudePrunesAll) {
  const auto ds = testdata::with_exact_derivatives(testdata::lotka_volterra(5.0, 101));
  Equation eq({Term({dU()}), Term({U()}), Term({U(), V()})}, 0);
  FitOptions o;
  o.epsilon = 2.0;
  std::mt19937_64 rng(1);
  const auto r = fit_equation(eq, ds, o, rng);
  EXPECT_EQ(r.coefficients.size(), 1u);
  EXPECT_EQ(r.pruned.size(), 2u);
  double norm = 0.0;
  for (double x : ds.derivative("u", 1)) norm += x * x;
  EXPECT_DOUBLE_EQ(r.residual_norm, std::sqrt(norm));
}

TEST(FitEquation, RetainedCoefficientsAboveEpsilon) {
  const auto ds = testdata::with_exact_derivatives(testdata::lotka_volterra(10.0, 401));
  Equation eq({Term({dU()}), Term({U()}), Term({U(), V()}), Term({V()}), Term({Token::constant()})}, 0);
  FitOptions o;
  o.epsilon = 1e-2;
  std::mt19937_64 rng(2);
  const auto r = fit_equation(eq, ds, o, rng);
  double big = 0.0;
  for (const auto& [k, c] : r.coefficients)
    if (k != r.target_key) big = std::max(big, std::abs(c));
  for (const auto& [k, c] : r.coefficients) {
    EXPECT_NE(c, 0.0);
    if (k != r.target_key) {
      EXPECT_GE(std::abs(c), 1e-2 * big * 0.999);
    }
  }
}

TEST(FitEquation, Deterministic) {
  const auto ds = testdata::with_exact_derivatives(testdata::lotka_volterra(10.0, 401));
  Equation eq({Term({dU()}), Term({U(), V()}), Term({Token::deriv("v", 1)}), Term({V()})}, 0);
  FitOptions o;
  std::mt19937_64 a(42), b(42);
  const auto r1 = fit_equation(eq, ds, o, a);
  const auto r2 = fit_equation(eq, ds, o, b);
  EXPECT_EQ(r1.target_key, r2.target_key);
  EXPECT_EQ(r1.coefficients, r2.coefficients);
  EXPECT_EQ(r1.residual_norm, r2.residual_norm);
}

TEST(FitEquation, TargetAlwaysCarriesDerivative) {
  const auto ds = testdata::with_exact_derivatives(testdata::lotka_volterra(10.0, 401));
  Equation eq({Term({U()}), Term({dU(), V()}), Term({V()})}, 1);
  FitOptions o;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(fit_equation(eq, ds, o, rng).target_key, "d1_u*v");
  o.target_variable = "v";
  EXPECT_THROW(fit_equation(eq, ds, o, rng), DegenerateEquationError);
}

TEST(FitEquation, TooFewTerms) {
  const auto ds = exponential(0.5);
  Equation eq({Term({dU()})}, 0);
  std::mt19937_64 rng(1);
  EXPECT_THROW(fit_equation(eq, ds, FitOptions{}, rng), DegenerateEquationError);
}

TEST(Resolvability, SignOfDerivativePartial) {
  const auto ds = testdata::with_exact_derivatives(testdata::lotka_volterra(10.0, 401));
  Equation explicit_eq({Term({dU()}), Term({U()}, 0.55), Term({U(), V()}, -0.028)}, 0);
  EXPECT_DOUBLE_EQ(resolvability_margin(explicit_eq, ds, "u"), 1.0);
  // du/dt * (v - mean v): the partial changes sign along the orbit
  double mv = 0.0;
  for (double x : ds.channel("v")) mv += x;
  mv /= static_cast<double>(ds.size());
  Equation flip({Term({dU(), V()}), Term({dU()}, mv), Term({U()}, 1.0)}, 0);
  EXPECT_LT(resolvability_margin(flip, ds, "u"), 0.0);
}
