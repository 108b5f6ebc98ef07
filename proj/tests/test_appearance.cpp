#include "dbs/appearance.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace dbs;

namespace {

Vec3<double> random_unit(std::mt19937_64& g) {
  std::normal_distribution<double> n;
  return Vec3<double>(n(g), n(g), n(g)).normalized();
}

SbAppearance<double> random_sb(std::mt19937_64& g, int m) {
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.2, 2.8);
  SbAppearance<double> a;
  a.base_color = Vec3<double>(n(g), n(g), n(g));
  for (int k = 0; k < m; ++k) {
    a.lobes.push_back({u(g), 3.0 * n(g), 0.8 * n(g), Vec3<double>(n(g), n(g), n(g))});
  }
  return a;
}

}  // namespace

TEST(SphericalBeta, NoLobesIsPureDiffuse) {
  SbAppearance<double> a;
  a.base_color = Vec3<double>(0.1, 0.2, 0.3);
  std::mt19937_64 g(1);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sb_eval(a, random_unit(g)), a.base_color);
}

TEST(SphericalBeta, PeakAndPerpendicular) {
  SbAppearance<double> a;
  a.base_color = Vec3<double>(0.1, 0.2, 0.3);
  a.lobes.push_back({0.7, 1.1, 0.5, Vec3<double>(0.4, 0.5, 0.6)});
  const Vec3<double> r = a.lobes[0].direction();
  EXPECT_TRUE(sb_eval(a, r).isApprox(a.base_color + a.lobes[0].color, 1e-14));
  const Vec3<double> perp = r.unitOrthogonal();
  EXPECT_EQ(sb_eval(a, perp), a.base_color);
  EXPECT_EQ(sb_eval(a, Vec3<double>(-r)), a.base_color);
}

TEST(SphericalBeta, ParameterAccounting) {
  std::mt19937_64 g(2);
  for (int m = 0; m < 5; ++m) {
    EXPECT_EQ(random_sb(g, m).parameter_count(), 3 + 6 * m);
    EXPECT_EQ(AppearanceLayout::spherical_beta(m).parameter_count(), 3 + 6 * m);
  }
  const int sb2 = AppearanceLayout::spherical_beta(2).parameter_count();
  const int sh3 = AppearanceLayout::spherical_harmonics(3).parameter_count();
  EXPECT_EQ(sb2, 15);
  EXPECT_EQ(sh3, 48);
  EXPECT_DOUBLE_EQ(double(sb2) / sh3, 0.3125);
}

TEST(SphericalBeta, GradientMatchesFiniteDifferences) {
  std::mt19937_64 g(3);
  std::normal_distribution<double> n;
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_sb(g, 3);
    const Vec3<double> v = random_unit(g);
    const Vec3<double> w(n(g), n(g), n(g));
    // Keep every lobe strictly inside or strictly outside its support.
    bool near_edge = false;
    for (const auto& l : a.lobes) near_edge |= std::abs(l.direction().dot(v)) < 0.05;
    if (near_edge) continue;
    ++checked;
    const auto grad = sb_grad(a, v, w);
    auto f = [&](const SbAppearance<double>& b) { return sb_eval(b, v).dot(w); };
    const double h = 1e-5;
    auto check = [&](double analytic, auto&& perturb) {
      SbAppearance<double> p = a, m = a;
      perturb(p, h);
      perturb(m, -h);
      const double fd = (f(p) - f(m)) / (2 * h);
      EXPECT_NEAR(analytic, fd, 1e-4 * std::max(std::abs(fd), 1e-3));
    };
    for (int c = 0; c < 3; ++c) {
      EXPECT_EQ(grad.d_base_color[c], w[c]);
    }
    for (std::size_t l = 0; l < a.lobes.size(); ++l) {
      check(grad.d_lobes[l].theta, [&](auto& b, double e) { b.lobes[l].theta += e; });
      check(grad.d_lobes[l].phi, [&](auto& b, double e) { b.lobes[l].phi += e; });
      check(grad.d_lobes[l].sharpness, [&](auto& b, double e) { b.lobes[l].sharpness += e; });
      for (int c = 0; c < 3; ++c) check(grad.d_lobes[l].color[c], [&](auto& b, double e) { b.lobes[l].color[c] += e; });
    }
    // View gradient along tangent directions.
    const Vec3<double> t1 = v.unitOrthogonal();
    const Vec3<double> t2 = v.cross(t1);
    for (const Vec3<double>& t : {t1, t2}) {
      const Vec3<double> vp = (v + h * t).normalized();
      const Vec3<double> vm = (v - h * t).normalized();
      const double fd = (sb_eval(a, vp).dot(w) - sb_eval(a, vm).dot(w)) / (2 * h);
      EXPECT_NEAR(grad.d_view.dot(t), fd, 1e-4 * std::max(std::abs(fd), 1e-3));
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(SphericalBeta, BackFacingLobeHasZeroGradient) {
  SbAppearance<double> a;
  a.lobes.push_back({0.3, 0.2, 0.4, Vec3<double>(1, 2, 3)});
  const Vec3<double> v = -a.lobes[0].direction();
  const auto g = sb_grad(a, v, Vec3<double>(1, 1, 1));
  EXPECT_EQ(g.d_lobes[0].theta, 0.0);
  EXPECT_EQ(g.d_lobes[0].phi, 0.0);
  EXPECT_EQ(g.d_lobes[0].sharpness, 0.0);
  EXPECT_TRUE(g.d_lobes[0].color.isZero());
  EXPECT_TRUE(g.d_view.isZero());
}

TEST(SphericalBeta, ContinuousAcrossSupportBoundary) {
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> ub(-2.0, 2.0);
  for (int trial = 0; trial < 500; ++trial) {
    SbAppearance<double> a;
    a.base_color = Vec3<double>(0.3, 0.3, 0.3);
    const Vec3<double> dir = random_unit(g);
    const auto angles = lobe_angles(dir);
    a.lobes.push_back({angles[0], angles[1], ub(g), Vec3<double>(1, 1, 1)});
    const Vec3<double> r = a.lobes[0].direction();
    const Vec3<double> t = r.unitOrthogonal();
    // Views straddling the great circle R.V = 0.
    for (double eps : {1e-3, 1e-6, 1e-9}) {
      const Vec3<double> above = (t + eps * r).normalized();
      const Vec3<double> below = (t - eps * r).normalized();
      const double jump = (sb_eval(a, above) - sb_eval(a, below)).cwiseAbs().maxCoeff();
      const double bound = std::pow(eps, beta_exponent(a.lobes[0].sharpness));
      ASSERT_LE(jump, bound * 1.01 + 1e-15);
    }
  }
}

TEST(SphericalBeta, SharperLobeHasSmallerHalfPeakAngle) {
  double previous = kPi;
  for (double b = -3.0; b <= 3.0; b += 0.5) {
    SbAppearance<double> a;
    a.lobes.push_back({0.0, 0.0, b, Vec3<double>(1, 1, 1)});
    // Bisection for the angle where the lobe falls to half its peak.
    double lo = 0.0, hi = kPi / 2;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      const Vec3<double> v(std::sin(mid), 0.0, std::cos(mid));
      (sb_eval(a, v)[0] > 0.5 ? lo : hi) = mid;
    }
    EXPECT_LT(lo, previous) << b;
    previous = lo;
  }
}

TEST(Decompose, IdentityAndViewIndependence) {
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_sb(g, 2);
    const Vec3<double> v = random_unit(g);
    const Vec3<double> d = decompose(a, ColorMode::diffuse, v);
    const Vec3<double> s = decompose(a, ColorMode::specular, v);
    ASSERT_EQ(d + s, sb_eval(a, v));
    ASSERT_EQ(d, decompose(a, ColorMode::diffuse, random_unit(g)));
  }
  SbAppearance<double> none;
  none.base_color = Vec3<double>(1, 2, 3);
  EXPECT_TRUE(decompose(none, ColorMode::specular, Vec3<double>(0, 0, 1)).isZero());
}

TEST(SphericalHarmonics, DegreeZeroIsConstant) {
  ShAppearance<double> a(0);
  a.coefficients[0] = Vec3<double>(0.5, 1.0, 2.0);
  std::mt19937_64 g(6);
  for (int i = 0; i < 10; ++i) {
    EXPECT_TRUE(sh_eval(a, random_unit(g)).isApprox(sh::kC0 * a.coefficients[0], 1e-15));
  }
}

TEST(SphericalHarmonics, CoefficientCounts) {
  for (int l = 0; l <= 3; ++l) EXPECT_EQ(ShAppearance<double>(l).parameter_count(), 3 * (l + 1) * (l + 1));
  EXPECT_EQ(ShAppearance<double>(3).parameter_count(), 48);
  EXPECT_THROW(ShAppearance<double>(4), DomainError);
}

TEST(SphericalHarmonics, ParsevalMonteCarlo) {
  std::mt19937_64 g(7);
  std::normal_distribution<double> n;
  ShAppearance<double> a(3);
  for (auto& c : a.coefficients) c = Vec3<double>(n(g), n(g), n(g));
  double expected = 0.0;
  for (const auto& c : a.coefficients) expected += c.squaredNorm();
  const int samples = 400000;
  double acc = 0.0;
  for (int i = 0; i < samples; ++i) acc += sh_eval(a, random_unit(g)).squaredNorm();
  const double integral = 4.0 * kPi * acc / samples;
  EXPECT_NEAR(integral, expected, 0.01 * expected);
}

TEST(SphericalHarmonics, GradientMatchesFiniteDifferences) {
  std::mt19937_64 g(8);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    ShAppearance<double> a(3);
    for (auto& c : a.coefficients) c = Vec3<double>(n(g), n(g), n(g));
    const Vec3<double> v = random_unit(g);
    const Vec3<double> w(n(g), n(g), n(g));
    const auto grad = sh_grad(a, v, w);
    const double h = 1e-5;
    for (std::size_t k = 0; k < a.coefficients.size(); ++k) {
      for (int c = 0; c < 3; ++c) {
        ShAppearance<double> p = a, m = a;
        p.coefficients[k][c] += h;
        m.coefficients[k][c] -= h;
        const double fd = (sh_eval(p, v).dot(w) - sh_eval(m, v).dot(w)) / (2 * h);
        ASSERT_NEAR(grad.d_coefficients[k][c], fd, 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
    for (int k = 0; k < 3; ++k) {
      Vec3<double> vp = v, vm = v;
      vp[k] += h;
      vm[k] -= h;
      const double fd = (sh_eval(a, vp).dot(w) - sh_eval(a, vm).dot(w)) / (2 * h);
      ASSERT_NEAR(grad.d_view[k], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(SphericalHarmonics, RawSplitMatchesTotal) {
  std::mt19937_64 g(9);
  std::normal_distribution<double> n;
  ShAppearance<double> a(2);
  for (auto& c : a.coefficients) c = Vec3<double>(n(g), n(g), n(g));
  std::vector<double> rest;
  for (std::size_t k = 1; k < a.coefficients.size(); ++k) {
    for (int c = 0; c < 3; ++c) rest.push_back(a.coefficients[k][c]);
  }
  const Vec3<double> v = random_unit(g);
  const auto split = sh_eval_raw(a.coefficients[0].data(), rest.data(), 2, v);
  EXPECT_TRUE(split.total().isApprox(sh_eval(a, v), 1e-12));
}

TEST(LobeAngles, RoundTrip) {
  std::mt19937_64 g(10);
  for (int i = 0; i < 100; ++i) {
    const Vec3<double> d = random_unit(g);
    const auto a = lobe_angles(d);
    EXPECT_TRUE(lobe_direction(a[0], a[1]).isApprox(d, 1e-12));
  }
  const auto dirs = fibonacci_directions<double>(2);
  EXPECT_EQ(dirs.size(), 2u);
  for (const auto& d : dirs) EXPECT_NEAR(d.norm(), 1.0, 1e-12);
}
