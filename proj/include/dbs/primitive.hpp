#pragma once

// Covariance construction, pinhole projection of 3D ellipsoids to screen
// space, Mahalanobis distance and screen bounds, with the analytic backward
// pass of each step.

#include "dbs/common.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <optional>

namespace dbs {

/// Pinhole camera. `world_to_camera` maps world points to a camera frame
/// with +x right, +y down and +z forward; pixel (i, j) has center (i, j).
template <class T> struct Camera {
  Mat4<T> world_to_camera = Mat4<T>::Identity();
  T fx = T(1);
  T fy = T(1);
  T cx = T(0);
  T cy = T(0);
  int width = 1;
  int height = 1;

  Mat3<T> rotation() const { return world_to_camera.template block<3, 3>(0, 0); }
  Vec3<T> translation() const { return world_to_camera.template block<3, 1>(0, 3); }
  Vec3<T> center() const { return -(rotation().transpose() * translation()); }

  void validate() const {
    if (width < 1 || height < 1) throw DomainError("camera: width and height must be >= 1");
    const Mat3<double> r = rotation().template cast<double>();
    if ((r * r.transpose() - Mat3<double>::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
      throw DomainError("camera: rotation block is not orthonormal");
    }
    if (!(fx > T(0) && fy > T(0))) throw DomainError("camera: focal lengths must be positive");
  }

  /// From a camera-to-world matrix whose camera frame looks down -z with +y
  /// up (the NeRF / OpenGL convention).
  static Camera from_opengl_c2w(const Mat4<double>& c2w, double fx, double fy, double cx, double cy,
                                int width, int height) {
    Mat4<double> flipped = c2w;
    flipped.col(1) *= -1.0;
    flipped.col(2) *= -1.0;
    Mat4<double> w2c = Mat4<double>::Identity();
    const Mat3<double> r = flipped.block<3, 3>(0, 0).transpose();
    w2c.block<3, 3>(0, 0) = r;
    w2c.block<3, 1>(0, 3) = -r * flipped.block<3, 1>(0, 3);
    Camera cam;
    cam.world_to_camera = w2c.cast<T>();
    cam.fx = T(fx);
    cam.fy = T(fy);
    cam.cx = T(cx);
    cam.cy = T(cy);
    cam.width = width;
    cam.height = height;
    return cam;
  }

  /// Camera-to-world matrix in the OpenGL convention (inverse of from_opengl_c2w).
  Mat4<double> opengl_c2w() const {
    const Mat3<double> r = rotation().template cast<double>();
    const Vec3<double> t = translation().template cast<double>();
    Mat4<double> c2w = Mat4<double>::Identity();
    c2w.block<3, 3>(0, 0) = r.transpose();
    c2w.block<3, 1>(0, 3) = -r.transpose() * t;
    c2w.col(1) *= -1.0;
    c2w.col(2) *= -1.0;
    return c2w;
  }

  /// Camera at `eye` looking at `target`; `up` is the world up direction.
  static Camera look_at(const Vec3<double>& eye, const Vec3<double>& target, const Vec3<double>& up,
                        double fov_x, int width, int height) {
    const Vec3<double> forward = (target - eye).normalized();
    const Vec3<double> right = forward.cross(up).normalized();
    const Vec3<double> down = forward.cross(right);
    Mat3<double> r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    Mat4<double> w2c = Mat4<double>::Identity();
    w2c.block<3, 3>(0, 0) = r;
    w2c.block<3, 1>(0, 3) = -r * eye;
    Camera cam;
    cam.world_to_camera = w2c.cast<T>();
    const double f = 0.5 * width / std::tan(0.5 * fov_x);
    cam.fx = T(f);
    cam.fy = T(f);
    cam.cx = T(0.5 * width);
    cam.cy = T(0.5 * height);
    cam.width = width;
    cam.height = height;
    return cam;
  }

  template <class U> Camera<U> cast() const {
    Camera<U> c;
    c.world_to_camera = world_to_camera.template cast<U>();
    c.fx = U(fx);
    c.fy = U(fy);
    c.cx = U(cx);
    c.cy = U(cy);
    c.width = width;
    c.height = height;
    return c;
  }
};

/// Inclusive integer pixel rectangle; empty when x0 > x1 or y0 > y1.
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = -1;
  int y1 = -1;

  bool empty() const { return x0 > x1 || y0 > y1; }
  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  long long area() const {
    return empty() ? 0 : static_cast<long long>(x1 - x0 + 1) * static_cast<long long>(y1 - y0 + 1);
  }
};

struct ProjectionOptions {
  double near_plane = 0.01;
  /// Added to both diagonal entries of the projected covariance (pixels^2).
  double conditioning = 0.3;
};

template <class T> struct ProjectedPrimitive {
  Vec2<T> mean;
  Mat2<T> cov;
  Mat2<T> cov_inv;
  T depth = T(0);
  PixelRect bounds;
  /// Camera-space center and projection Jacobian, kept for the backward pass.
  Vec3<T> camera_point;
  Mat23<T> jacobian;
};

// ---------------------------------------------------------------------------
// Rotation and covariance

/// Rotation matrix of a unit quaternion (w, x, y, z).
template <class T> Mat3<T> rotation_matrix(const Vec4<T>& q) {
  const T w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3<T> r;
  r << T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y),
      T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),
      T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y);
  return r;
}

inline constexpr double kMinQuaternionNorm = 1e-12;

template <class T> Vec4<T> normalized_quaternion(const Vec4<T>& q) {
  const T n = q.norm();
  if (!(n >= T(kMinQuaternionNorm))) throw DomainError("degenerate quaternion (|q| < 1e-12)");
  return q / n;
}

/// Gradient with respect to the unnormalized quaternion q given dL/dR.
template <class T> Vec4<T> rotation_backward(const Vec4<T>& q, const Mat3<T>& dr) {
  const T n = q.norm();
  const Vec4<T> u = q / n;
  const T w = u[0], x = u[1], y = u[2], z = u[3];
  Vec4<T> du;
  du[0] = T(2) * (-z * dr(0, 1) + y * dr(0, 2) + z * dr(1, 0) - x * dr(1, 2) - y * dr(2, 0) + x * dr(2, 1));
  du[1] = T(2) * (y * dr(0, 1) + z * dr(0, 2) + y * dr(1, 0) - T(2) * x * dr(1, 1) - w * dr(1, 2) +
                  z * dr(2, 0) + w * dr(2, 1) - T(2) * x * dr(2, 2));
  du[2] = T(2) * (-T(2) * y * dr(0, 0) + x * dr(0, 1) + w * dr(0, 2) + x * dr(1, 0) + z * dr(1, 2) -
                  w * dr(2, 0) + z * dr(2, 1) - T(2) * y * dr(2, 2));
  du[3] = T(2) * (-T(2) * z * dr(0, 0) - w * dr(0, 1) + x * dr(0, 2) + w * dr(1, 0) - T(2) * z * dr(1, 1) +
                  y * dr(1, 2) + x * dr(2, 0) + y * dr(2, 1));
  return (du - u * u.dot(du)) / n;
}

/// Sigma = R S S^T R^T with R from normalized q and S = diag(s).
template <class T> Mat3<T> covariance(const Vec4<T>& q, const Vec3<T>& s) {
  const Mat3<T> m = rotation_matrix(normalized_quaternion(q)) * s.asDiagonal();
  Mat3<T> c = m * m.transpose();
  c(1, 0) = c(0, 1);
  c(2, 0) = c(0, 2);
  c(2, 1) = c(1, 2);
  return c;
}

template <class T> struct CovarianceGradient {
  Vec4<T> d_rotation;
  Vec3<T> d_scale;
};

/// Backward of covariance(q, s); d_cov is dL/dSigma as a full matrix.
template <class T>
CovarianceGradient<T> covariance_backward(const Vec4<T>& q, const Vec3<T>& s, const Mat3<T>& d_cov) {
  const Mat3<T> r = rotation_matrix(normalized_quaternion(q));
  const Mat3<T> m = r * s.asDiagonal();
  const Mat3<T> dm = (d_cov + d_cov.transpose()) * m;
  CovarianceGradient<T> g;
  const Mat3<T> rt_dm = r.transpose() * dm;
  g.d_scale = rt_dm.diagonal();
  const Mat3<T> dr = dm * s.asDiagonal();
  g.d_rotation = rotation_backward(q, dr);
  return g;
}

// ---------------------------------------------------------------------------
// Projection

/// Tight box around the r = 1 ellipse plus one guard pixel, clipped to the image.
template <class T> PixelRect screen_bounds(const Vec2<T>& mean, const Mat2<T>& cov, int width, int height) {
  const double rx = std::sqrt(std::max(double(cov(0, 0)), 0.0));
  const double ry = std::sqrt(std::max(double(cov(1, 1)), 0.0));
  const double mx = double(mean[0]);
  const double my = double(mean[1]);
  PixelRect r;
  const double lx = std::floor(mx - rx - 1.0);
  const double hx = std::ceil(mx + rx + 1.0);
  const double ly = std::floor(my - ry - 1.0);
  const double hy = std::ceil(my + ry + 1.0);
  if (!std::isfinite(lx + hx + ly + hy) || hx < 0.0 || hy < 0.0 || lx > width - 1.0 || ly > height - 1.0) {
    return PixelRect{};
  }
  r.x0 = static_cast<int>(std::max(lx, 0.0));
  r.y0 = static_cast<int>(std::max(ly, 0.0));
  r.x1 = static_cast<int>(std::min(hx, width - 1.0));
  r.y1 = static_cast<int>(std::min(hy, height - 1.0));
  return r;
}

template <class T> PixelRect screen_bounds(const ProjectedPrimitive<T>& p, int width, int height) {
  return screen_bounds(p.mean, p.cov, width, height);
}

/// r^2 = (x - mu')^T Sigma'^-1 (x - mu').
template <class T> T mahalanobis_sq(const Vec2<T>& x, const ProjectedPrimitive<T>& p) {
  const Vec2<T> d = x - p.mean;
  return d.dot(p.cov_inv * d);
}

template <class T> Mat2<T> inverse_2x2(const Mat2<T>& m) {
  const T det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  Mat2<T> inv;
  inv << m(1, 1) / det, -m(0, 1) / det, -m(1, 0) / det, m(0, 0) / det;
  return inv;
}

/// Projects a world-space ellipsoid. Returns nullopt when the center lies at or
/// in front of the near plane, the projected covariance is degenerate, or the
/// bounds miss the image.
template <class T>
std::optional<ProjectedPrimitive<T>> project(const Vec3<T>& mu, const Mat3<T>& sigma, const Camera<T>& cam,
                                             const ProjectionOptions& opts = {}) {
  const Mat3<T> wr = cam.rotation();
  const Vec3<T> t = wr * mu + cam.translation();
  if (!(t[2] > T(opts.near_plane))) return std::nullopt;
  const T z = t[2];
  const T inv_z = T(1) / z;
  Mat23<T> j;
  j << cam.fx * inv_z, T(0), -cam.fx * t[0] * inv_z * inv_z, T(0), cam.fy * inv_z,
      -cam.fy * t[1] * inv_z * inv_z;
  const Mat23<T> jw = j * wr;
  ProjectedPrimitive<T> p;
  p.cov = jw * sigma * jw.transpose();
  p.cov(0, 0) += T(opts.conditioning);
  p.cov(1, 1) += T(opts.conditioning);
  p.cov(0, 1) = p.cov(1, 0) = T(0.5) * (p.cov(0, 1) + p.cov(1, 0));
  const T det = p.cov(0, 0) * p.cov(1, 1) - p.cov(0, 1) * p.cov(1, 0);
  if (!(det > T(0)) || !(p.cov(0, 0) > T(0))) return std::nullopt;
  p.cov_inv = inverse_2x2(p.cov);
  p.mean = Vec2<T>(cam.fx * t[0] * inv_z + cam.cx, cam.fy * t[1] * inv_z + cam.cy);
  p.depth = z;
  p.camera_point = t;
  p.jacobian = j;
  p.bounds = screen_bounds(p.mean, p.cov, cam.width, cam.height);
  if (p.bounds.empty()) return std::nullopt;
  return p;
}

template <class T>
std::optional<ProjectedPrimitive<T>> project(const Vec3<T>& mu, const Vec4<T>& q, const Vec3<T>& s,
                                             const Camera<T>& cam, const ProjectionOptions& opts = {}) {
  return project(mu, covariance(q, s), cam, opts);
}

template <class T> struct ProjectionGradient {
  Vec3<T> d_position;
  Mat3<T> d_cov3d;
};

/// Backward of project(): given dL/dmu' and dL/dSigma' (full 2x2 matrix),
/// returns dL/dmu (world) and dL/dSigma (full 3x3 matrix).
template <class T>
ProjectionGradient<T> project_backward(const ProjectedPrimitive<T>& p, const Mat3<T>& sigma, const Camera<T>& cam,
                                       const Vec2<T>& d_mean, const Mat2<T>& d_cov2d) {
  const Mat3<T> wr = cam.rotation();
  const Mat23<T> tm = p.jacobian * wr;
  const Mat2<T> g_sym = d_cov2d + d_cov2d.transpose();
  ProjectionGradient<T> out;
  out.d_cov3d = tm.transpose() * d_cov2d * tm;
  const Mat23<T> d_t = g_sym * tm * sigma;
  const Mat23<T> d_j = d_t * wr.transpose();
  const T x = p.camera_point[0], y = p.camera_point[1], z = p.camera_point[2];
  const T iz = T(1) / z;
  const T iz2 = iz * iz;
  const T iz3 = iz2 * iz;
  Vec3<T> d_cam = p.jacobian.transpose() * d_mean;
  d_cam[0] += d_j(0, 2) * (-cam.fx * iz2);
  d_cam[1] += d_j(1, 2) * (-cam.fy * iz2);
  d_cam[2] += d_j(0, 0) * (-cam.fx * iz2) + d_j(0, 2) * (T(2) * cam.fx * x * iz3) +
              d_j(1, 1) * (-cam.fy * iz2) + d_j(1, 2) * (T(2) * cam.fy * y * iz3);
  out.d_position = wr.transpose() * d_cam;
  return out;
}

/// Backward of the 2x2 inverse: dL/dSigma' from dL/dSigma'^-1.
template <class T> Mat2<T> inverse_backward(const Mat2<T>& inv, const Mat2<T>& d_inv) {
  return -(inv.transpose() * d_inv * inv.transpose());
}

}  // namespace dbs
