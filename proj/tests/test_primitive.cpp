#include "dbs/primitive.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <random>

using namespace dbs;

namespace {

Vec4<double> random_quat(std::mt19937_64& g) {
  std::normal_distribution<double> n;
  return Vec4<double>(n(g), n(g), n(g), n(g));
}

Camera<double> axis_camera(int w = 100, int h = 100, double f = 100.0) {
  Camera<double> c;
  c.fx = c.fy = f;
  c.cx = w / 2.0;
  c.cy = h / 2.0;
  c.width = w;
  c.height = h;
  return c;
}

ProjectionOptions no_conditioning() {
  ProjectionOptions o;
  o.conditioning = 0.0;
  return o;
}

}  // namespace

TEST(Covariance, IdentityAndAxisScaling) {
  const Vec4<double> id(1, 0, 0, 0);
  EXPECT_TRUE(covariance(id, Vec3<double>(1, 1, 1)).isApprox(Mat3<double>::Identity(), 1e-15));
  const Mat3<double> d = covariance(id, Vec3<double>(2, 1, 1));
  EXPECT_TRUE(d.isApprox(Vec3<double>(4, 1, 1).asDiagonal().toDenseMatrix(), 1e-15));
}

TEST(Covariance, EigenvaluesAreSquaredScales) {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> us(0.1, 3.0);
  for (int t = 0; t < 200; ++t) {
    const Vec3<double> s(us(g), us(g), us(g));
    const Mat3<double> c = covariance(random_quat(g), s);
    Eigen::SelfAdjointEigenSolver<Mat3<double>> es(c);
    std::array<double, 3> ev = {es.eigenvalues()[0], es.eigenvalues()[1], es.eigenvalues()[2]};
    std::array<double, 3> sq = {s[0] * s[0], s[1] * s[1], s[2] * s[2]};
    std::sort(ev.begin(), ev.end());
    std::sort(sq.begin(), sq.end());
    for (int k = 0; k < 3; ++k) ASSERT_NEAR(ev[k], sq[k], 1e-9);
    ASSERT_TRUE(c.isApprox(c.transpose(), 0.0));
  }
}

TEST(Covariance, DoubleCoverAndDegenerate) {
  std::mt19937_64 g(4);
  const Vec3<double> s(0.5, 1.5, 2.0);
  for (int t = 0; t < 50; ++t) {
    const Vec4<double> q = random_quat(g);
    ASSERT_TRUE(covariance(q, s).isApprox(covariance(Vec4<double>(-q), s), 1e-14));
  }
  EXPECT_THROW(covariance(Vec4<double>(0, 0, 0, 1e-13), s), DomainError);
}

TEST(Covariance, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 g(5);
  std::normal_distribution<double> n;
  for (int t = 0; t < 20; ++t) {
    const Vec4<double> q = random_quat(g);
    const Vec3<double> s(0.5 + std::abs(n(g)), 0.5 + std::abs(n(g)), 0.5 + std::abs(n(g)));
    Mat3<double> w;
    for (int i = 0; i < 9; ++i) w.data()[i] = n(g);
    auto f = [&](const Vec4<double>& qq, const Vec3<double>& ss) { return (covariance(qq, ss).array() * w.array()).sum(); };
    const auto grad = covariance_backward(q, s, w);
    const double h = 1e-6;
    for (int k = 0; k < 4; ++k) {
      Vec4<double> qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      const double fd = (f(qp, s) - f(qm, s)) / (2 * h);
      ASSERT_NEAR(grad.d_rotation[k], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
    for (int k = 0; k < 3; ++k) {
      Vec3<double> sp = s, sm = s;
      sp[k] += h;
      sm[k] -= h;
      const double fd = (f(q, sp) - f(q, sm)) / (2 * h);
      ASSERT_NEAR(grad.d_scale[k], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Project, OnAxisIsotropic) {
  const auto cam = axis_camera();
  const auto p = project(Vec3<double>(0, 0, 5), covariance(Vec4<double>(1, 0, 0, 0), Vec3<double>(0.2, 0.2, 0.2)), cam);
  ASSERT_TRUE(p.has_value());
  Eigen::SelfAdjointEigenSolver<Mat2<double>> es(p->cov);
  EXPECT_NEAR(es.eigenvalues()[0], es.eigenvalues()[1], 1e-6 * es.eigenvalues()[1]);
  EXPECT_NEAR(p->mean[0], 50.0, 1e-12);
  EXPECT_NEAR(p->depth, 5.0, 1e-12);
}

TEST(Project, DoublingDepthHalvesAxes) {
  const auto cam = axis_camera(400, 400, 300.0);
  const Mat3<double> sigma = covariance(Vec4<double>(0.9, 0.2, -0.1, 0.3), Vec3<double>(0.3, 0.1, 0.2));
  const auto a = project(Vec3<double>(0, 0, 4), sigma, cam, no_conditioning());
  const auto b = project(Vec3<double>(0, 0, 8), sigma, cam, no_conditioning());
  ASSERT_TRUE(a && b);
  Eigen::SelfAdjointEigenSolver<Mat2<double>> ea(a->cov), eb(b->cov);
  for (int k = 0; k < 2; ++k) {
    const double ra = std::sqrt(ea.eigenvalues()[k]);
    const double rb = std::sqrt(eb.eigenvalues()[k]);
    EXPECT_NEAR(rb, 0.5 * ra, 1e-5 * ra);
  }
}

TEST(Project, NearPlaneCulls) {
  const auto cam = axis_camera();
  const Mat3<double> sigma = Mat3<double>::Identity() * 0.01;
  EXPECT_FALSE(project(Vec3<double>(0, 0, 0.01), sigma, cam).has_value());
  EXPECT_FALSE(project(Vec3<double>(0, 0, -1.0), sigma, cam).has_value());
  EXPECT_TRUE(project(Vec3<double>(0, 0, 0.5), sigma, cam).has_value());
}

TEST(Project, OffscreenCulls) {
  const auto cam = axis_camera();
  const Mat3<double> sigma = Mat3<double>::Identity() * 1e-4;
  EXPECT_FALSE(project(Vec3<double>(100, 0, 1), sigma, cam).has_value());
}

TEST(Project, PositivelyHomogeneousInScale) {
  std::mt19937_64 g(6);
  const auto cam = axis_camera(200, 200, 150.0);
  for (int t = 0; t < 20; ++t) {
    const Vec4<double> q = random_quat(g);
    const Vec3<double> s(0.1, 0.2, 0.05);
    const double k = 2.7;
    const auto a = project(Vec3<double>(0.3, -0.2, 3.0), q, s, cam, no_conditioning());
    const auto b = project(Vec3<double>(0.3, -0.2, 3.0), q, Vec3<double>(k * s), cam, no_conditioning());
    ASSERT_TRUE(a && b);
    ASSERT_TRUE(b->cov.isApprox(k * k * a->cov, 1e-5));
  }
}

TEST(Project, ConditioningAddsDiagonal) {
  const auto cam = axis_camera();
  const Mat3<double> sigma = covariance(Vec4<double>(1, 0.1, 0.2, 0.3), Vec3<double>(0.1, 0.2, 0.3));
  const auto a = project(Vec3<double>(0.1, 0.1, 3), sigma, cam, no_conditioning());
  const auto b = project(Vec3<double>(0.1, 0.1, 3), sigma, cam);
  EXPECT_TRUE((b->cov - a->cov).isApprox(Mat2<double>::Identity() * 0.3, 1e-12));
}

TEST(Project, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 g(7);
  std::normal_distribution<double> n;
  auto cam = Camera<double>::look_at(Vec3<double>(0.5, -3, 1), Vec3<double>(0, 0, 0), Vec3<double>(0, 0, 1), 0.9, 80, 60);
  for (int t = 0; t < 20; ++t) {
    const Vec3<double> mu(0.3 * n(g), 0.3 * n(g), 0.3 * n(g));
    const Mat3<double> sigma = covariance(random_quat(g), Vec3<double>(0.2, 0.1, 0.3));
    const Vec2<double> wm(n(g), n(g));
    Mat2<double> wc;
    const double off = n(g);
    wc << n(g), off, off, n(g);
    auto f = [&](const Vec3<double>& m, const Mat3<double>& s) {
      const auto p = project(m, s, cam);
      return p->mean.dot(wm) + (p->cov.array() * wc.array()).sum();
    };
    const auto p = project(mu, sigma, cam);
    ASSERT_TRUE(p.has_value());
    const auto grad = project_backward(*p, sigma, cam, wm, wc);
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      Vec3<double> mp = mu, mm = mu;
      mp[k] += h;
      mm[k] -= h;
      const double fd = (f(mp, sigma) - f(mm, sigma)) / (2 * h);
      ASSERT_NEAR(grad.d_position[k], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
    // Symmetric perturbations: Sigma is symmetric by construction.
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        Mat3<double> sp = sigma, sm = sigma;
        sp(i, j) += h;
        sm(i, j) -= h;
        if (i != j) {
          sp(j, i) += h;
          sm(j, i) -= h;
        }
        const double fd = (f(mu, sp) - f(mu, sm)) / (2 * h);
        const double analytic = i == j ? grad.d_cov3d(i, j) : grad.d_cov3d(i, j) + grad.d_cov3d(j, i);
        ASSERT_NEAR(analytic, fd, 1e-5 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(Mahalanobis, BasicCases) {
  ProjectedPrimitive<double> p;
  p.mean = Vec2<double>(10, 20);
  p.cov = Mat2<double>::Identity();
  p.cov_inv = Mat2<double>::Identity();
  EXPECT_EQ(mahalanobis_sq(p.mean, p), 0.0);
  EXPECT_NEAR(mahalanobis_sq(Vec2<double>(13, 24), p), 25.0, 1e-12);
}

TEST(Mahalanobis, MatchesLinearSolveAndRotationInvariance) {
  std::mt19937_64 g(8);
  std::normal_distribution<double> n;
  for (int t = 0; t < 200; ++t) {
    Mat2<double> a;
    a << n(g), n(g), n(g), n(g);
    ProjectedPrimitive<double> p;
    p.cov = a * a.transpose() + 0.1 * Mat2<double>::Identity();
    p.cov_inv = inverse_2x2(p.cov);
    p.mean = Vec2<double>(n(g), n(g));
    const Vec2<double> x(n(g) * 3, n(g) * 3);
    const Vec2<double> d = x - p.mean;
    const double oracle = d.dot(p.cov.ldlt().solve(d));
    ASSERT_NEAR(mahalanobis_sq(x, p), oracle, 1e-10 * std::max(1.0, oracle));
    const double ang = n(g);
    Mat2<double> r;
    r << std::cos(ang), -std::sin(ang), std::sin(ang), std::cos(ang);
    ProjectedPrimitive<double> q = p;
    q.cov = r * p.cov * r.transpose();
    q.cov_inv = inverse_2x2(q.cov);
    ASSERT_NEAR(mahalanobis_sq(Vec2<double>(q.mean + r * d), q), oracle, 1e-9 * std::max(1.0, oracle));
  }
}

TEST(ScreenBounds, AxisAlignedEllipse) {
  Mat2<double> c;
  c << 4, 0, 0, 9;
  const auto r = screen_bounds(Vec2<double>(10, 10), c, 100, 100);
  EXPECT_EQ(r.x0, 7);
  EXPECT_EQ(r.x1, 13);
  EXPECT_EQ(r.y0, 6);
  EXPECT_EQ(r.y1, 14);
}

TEST(ScreenBounds, IdentityAndOffscreen) {
  const auto r = screen_bounds(Vec2<double>(50, 50), Mat2<double>(Mat2<double>::Identity()), 100, 100);
  EXPECT_EQ(r.x1 - r.x0 + 1, 2 * (1 + 1) + 1);
  EXPECT_EQ(r.y1 - r.y0 + 1, 5);
  EXPECT_TRUE(screen_bounds(Vec2<double>(-50, 50), Mat2<double>(Mat2<double>::Identity()), 100, 100).empty());
  EXPECT_TRUE(screen_bounds(Vec2<double>(50, 150), Mat2<double>(Mat2<double>::Identity()), 100, 100).empty());
  const auto clipped = screen_bounds(Vec2<double>(0, 0), Mat2<double>(Mat2<double>::Identity() * 25), 100, 100);
  EXPECT_EQ(clipped.x0, 0);
  EXPECT_EQ(clipped.y0, 0);
}

TEST(ScreenBounds, ContainsSupportExhaustive) {
  std::mt19937_64 g(9);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0, 64);
  for (int t = 0; t < 200; ++t) {
    Mat2<double> a;
    a << n(g) * 4, n(g) * 4, n(g) * 4, n(g) * 4;
    ProjectedPrimitive<double> p;
    p.cov = a * a.transpose() + 0.3 * Mat2<double>::Identity();
    p.cov_inv = inverse_2x2(p.cov);
    p.mean = Vec2<double>(u(g), u(g));
    const auto r = screen_bounds(p.mean, p.cov, 64, 64);
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        if (mahalanobis_sq(Vec2<double>(x, y), p) < 1.0) {
          ASSERT_TRUE(r.contains(x, y));
        }
      }
    }
  }
}

TEST(CameraConvention, OpenGlRoundTripAndCenter) {
  Mat4<double> c2w = Mat4<double>::Identity();
  const Eigen::AngleAxisd rot(0.7, Vec3<double>(0.2, 1, 0.3).normalized());
  c2w.block<3, 3>(0, 0) = rot.toRotationMatrix();
  c2w.block<3, 1>(0, 3) = Vec3<double>(1, 2, 3);
  const auto cam = Camera<double>::from_opengl_c2w(c2w, 50, 50, 32, 32, 64, 64);
  EXPECT_NO_THROW(cam.validate());
  EXPECT_TRUE(cam.opengl_c2w().isApprox(c2w, 1e-12));
  EXPECT_TRUE(cam.center().isApprox(Vec3<double>(1, 2, 3), 1e-12));
  // The OpenGL camera looks down its -z axis.
  const Vec3<double> ahead = c2w.block<3, 1>(0, 3) - 2.0 * c2w.block<3, 1>(0, 2);
  const Vec3<double> t = cam.rotation() * ahead + cam.translation();
  EXPECT_NEAR(t[2], 2.0, 1e-12);
}

TEST(CameraConvention, RejectsNonOrthonormal) {
  Camera<double> c;
  c.world_to_camera(0, 0) = 1.1;
  EXPECT_THROW(c.validate(), DomainError);
  c.world_to_camera(0, 0) = 1.0;
  c.width = 0;
  EXPECT_THROW(c.validate(), DomainError);
}
