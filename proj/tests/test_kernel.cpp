#include "dbs/kernel.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace dbs;

TEST(BetaEval, CenterAndBoundary) {
  EXPECT_EQ(beta_eval(0.0, 7.3), 1.0);
  EXPECT_EQ(beta_eval(1.0, -2.0), 0.0);
  for (double b : {-10.0, -3.0, 0.0, 2.5, 10.0, 50.0}) {
    EXPECT_EQ(beta_eval(0.0, b), 1.0);
    EXPECT_EQ(beta_eval(1.0, b), 0.0);
  }
}

TEST(BetaEval, ClosedForms) {
  EXPECT_DOUBLE_EQ(beta_eval(0.5, 0.0), 0.0625);
  EXPECT_NEAR(beta_eval(0.1, std::log(25.0)), std::pow(0.9, 100.0), 1e-18);
  EXPECT_NEAR(beta_eval(0.1, std::log(25.0)), 2.6561e-5, 1e-9);
  EXPECT_DOUBLE_EQ(beta_eval(0.5, BetaShape{0.0}), 0.0625);
  EXPECT_DOUBLE_EQ(BetaShape{0.0}.beta(), 4.0);
}

TEST(BetaEval, RejectsOutOfDomain) {
  EXPECT_THROW(beta_eval(-0.01, 0.0), DomainError);
  EXPECT_THROW(beta_eval(1.01, 0.0), DomainError);
  EXPECT_THROW(beta_eval(std::nan(""), 0.0), DomainError);
}

TEST(BetaEval, ExponentClamp) {
  EXPECT_DOUBLE_EQ(beta_exponent(20.0), 4.0 * std::exp(10.0));
  EXPECT_DOUBLE_EQ(beta_exponent(-20.0), 4.0 * std::exp(-10.0));
  EXPECT_GT(beta_exponent(-10.0), 1.8e-4);
  EXPECT_LT(beta_exponent(10.0), 8.9e4);
}

TEST(BetaEval, BoundedAndMonotoneProperty) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> ub(-6.0, 6.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double b = ub(gen);
    double prev = 1.0;
    for (int i = 0; i <= 256; ++i) {
      const double v = beta_eval(i / 256.0, b);
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
      ASSERT_LE(v, prev);
      prev = v;
    }
  }
}

TEST(BetaGrad, ClosedForms) {
  EXPECT_EQ(beta_grad(0.0, 1.7).d_db, 0.0);
  EXPECT_DOUBLE_EQ(beta_grad(0.5, 0.0).d_dx, -0.5);
}

TEST(BetaGrad, FiniteDifferenceAtReferencePoint) {
  const double x = 0.3, b = 0.7, h = 1e-6;
  const auto g = beta_grad(x, b);
  const double fx = (beta_eval(x + h, b) - beta_eval(x - h, b)) / (2 * h);
  const double fb = (beta_eval(x, b + h) - beta_eval(x, b - h)) / (2 * h);
  EXPECT_NEAR(g.d_dx, fx, 1e-6 * std::abs(fx));
  EXPECT_NEAR(g.d_db, fb, 1e-6 * std::abs(fb));
}

TEST(BetaGrad, FiniteDifferenceProperty) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> ux(0.01, 0.99), ub(-4.0, 4.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const double x = ux(gen), b = ub(gen), h = 1e-6;
    const auto g = beta_grad(x, b);
    const double fx = (beta_eval(x + h, b) - beta_eval(x - h, b)) / (2 * h);
    const double fb = (beta_eval(x, b + h) - beta_eval(x, b - h)) / (2 * h);
    const double floor = 1e-12;
    ASSERT_LE(std::abs(g.d_dx - fx), 1e-4 * std::max(std::abs(fx), floor) + floor) << x << " " << b;
    ASSERT_LE(std::abs(g.d_db - fb), 1e-4 * std::max(std::abs(fb), floor) + floor) << x << " " << b;
  }
}

TEST(BetaGrad, EdgeClampAndShapeClamp) {
  const double b = std::log(0.1);  // beta = 0.4 < 1
  EXPECT_EQ(beta_grad(1.0, b).d_dx, -kEdgeGradientClamp);
  EXPECT_EQ(beta_grad(1.0 - 1e-8, b).d_dx, -kEdgeGradientClamp);
  EXPECT_TRUE(std::isfinite(beta_grad(1.0, 0.0).d_dx));
  EXPECT_EQ(beta_grad(0.4, 11.0).d_db, 0.0);
  EXPECT_EQ(beta_grad(0.4, -11.0).d_db, 0.0);
  EXPECT_EQ(beta_grad(1.0, 0.0).d_db, 0.0);
}

TEST(GaussianReference, ValuesAndEnvelope) {
  EXPECT_EQ(gaussian_reference(0.0), 1.0);
  double worst = 0.0;
  for (int i = 0; i < 4096; ++i) {
    const double x = i / 4095.0;
    worst = std::max(worst, std::abs(beta_eval(x, 0.0) - gaussian_reference(x)));
  }
  EXPECT_LE(worst, 0.06);
  const auto& rule = gauss_legendre(64);
  EXPECT_NEAR(integrate(rule, 0.0, 1.0, [](double x) { return gaussian_reference(x); }),
              (2.0 / 9.0) * (1.0 - std::exp(-4.5)), 1e-12);
  EXPECT_NEAR(integrate(rule, 0.0, 1.0, [](double x) { return beta_eval(x, 0.0); }), 0.2, 1e-12);
  EXPECT_NEAR((2.0 / 9.0) * (1.0 - std::exp(-4.5)), 0.21975, 1e-5);
}

TEST(Quadrature, GaussLegendreExactForPolynomials) {
  const auto rule = gauss_legendre(8);
  double wsum = 0.0;
  for (double w : rule.weights) wsum += w;
  EXPECT_NEAR(wsum, 2.0, 1e-14);
  EXPECT_NEAR(integrate(rule, 0.0, 2.0, [](double x) { return std::pow(x, 15); }), std::pow(2.0, 16) / 16.0,
              1e-9);
}

TEST(Abel, HemisphereProfileInvertsToConstantHalf) {
  // A uniform ball of density c projects to 2c sqrt(1 - r^2).
  const auto p = RadialProfile::sample([](double r) { return std::sqrt(std::max(0.0, 1.0 - r * r)); });
  const auto k3 = inverse_abel(p);
  for (std::size_t i = 0; i + 1 < k3.size(); ++i) ASSERT_NEAR(k3.values[i], 0.5, 1e-3) << k3.radii[i];
  for (double r : {0.0, 0.3, 0.7, 0.95}) {
    EXPECT_NEAR(forward_abel(k3, r), std::sqrt(1 - r * r), 1e-3);
  }
}

TEST(Abel, RoundTripBetaProfiles) {
  for (double beta : {0.5, 1.0, 4.0}) {
    const auto p = RadialProfile::beta_2d(beta, 512);
    const auto k3 = inverse_abel(p);
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      worst = std::max(worst, std::abs(forward_abel(k3, p.radii[i]) - p.values[i]));
    }
    EXPECT_LE(worst, 1e-3) << "beta=" << beta;
  }
}

TEST(Abel, BetaOneIsNonnegativeAndDecreasing) {
  const auto k3 = inverse_abel(RadialProfile::beta_2d(1.0, 512));
  // Brute-force oracle: direct quadrature of -(1/pi) int_R^1 K'(r) / sqrt(r^2 - R^2) dr with K' = -2r,
  // i.e. (2/pi) sqrt(1 - R^2).
  for (std::size_t i = 0; i < k3.size(); ++i) {
    ASSERT_GE(k3.values[i], -1e-9);
    if (i > 0) {
      ASSERT_LE(k3.values[i], k3.values[i - 1] + 1e-9);
    }
    const double R = k3.radii[i];
    if (R < 0.99) {
      EXPECT_NEAR(k3.values[i], 2.0 / kPi * std::sqrt(1 - R * R), 1e-3);
    }
  }
}

TEST(Abel, ForwardEdgeCases) {
  const auto zero = RadialProfile::sample([](double) { return 0.0; }, 64);
  for (double r : {0.0, 0.5, 1.0}) EXPECT_EQ(forward_abel(zero, r), 0.0);
  const auto p = RadialProfile::beta_2d(2.0, 64);
  EXPECT_EQ(forward_abel(p, 1.0), 0.0);
  EXPECT_THROW(forward_abel(p, 1.5), DomainError);
}

TEST(Abel, RejectsConstantProfile) {
  const auto p = RadialProfile::sample([](double) { return 1.0; }, 64);
  EXPECT_THROW(inverse_abel(p), DomainError);
}

TEST(RadialProfileGrid, Validation) {
  RadialProfile p{{0.0, 0.6, 0.5, 1.0}, {1.0, 0.5, 0.4, 0.0}};
  EXPECT_THROW(p.validate(), DomainError);
  RadialProfile q{{0.1, 1.0}, {1.0, 0.0}};
  EXPECT_THROW(q.validate(), DomainError);
  RadialProfile ok{{0.0, 0.5, 1.0}, {1.0, 0.5, 0.0}};
  EXPECT_NO_THROW(ok.validate());
  EXPECT_DOUBLE_EQ(ok(0.25), 0.75);
}

TEST(KernelConditions, BetaProfilePasses) {
  for (double beta : {0.5, 1.0, 4.0, 20.0}) {
    const auto report = validate_kernel_conditions(RadialProfile::beta_2d(beta));
    EXPECT_TRUE(report.all_passed()) << "beta=" << beta << "\n" << report.to_text();
  }
}

TEST(KernelConditions, ConstantFailsBoundary) {
  const auto report = validate_kernel_conditions(RadialProfile::sample([](double) { return 1.0; }));
  EXPECT_FALSE(report.passed("boundary_transparency"));
  EXPECT_TRUE(report.passed("center_opacity"));
  EXPECT_FALSE(report.all_passed());
}

TEST(KernelConditions, StepFailsSmoothness) {
  const auto report = validate_kernel_conditions(RadialProfile::sample([](double r) { return r < 0.5 ? 1.0 : 0.0; }));
  EXPECT_FALSE(report.passed("smoothness_c1"));
  EXPECT_TRUE(report.passed("boundary_transparency"));
}

TEST(KernelConditions, InvalidGridIsReportedNotThrown) {
  RadialProfile p{{0.0, 0.2}, {1.0, 0.0}};
  ConditionReport report;
  EXPECT_NO_THROW(report = validate_kernel_conditions(p));
  EXPECT_FALSE(report.all_passed());
}

TEST(KernelConditions, Serialization) {
  const auto report = validate_kernel_conditions(RadialProfile::beta_2d(4.0, 128));
  const auto kv = report.to_key_value();
  EXPECT_NE(kv.find("center_opacity=pass"), std::string::npos);
  EXPECT_NE(kv.find("overall=pass"), std::string::npos);
  EXPECT_NE(report.to_text().find("abel_existence"), std::string::npos);
}
