#pragma once

// View-dependent color. Spherical Beta: a base color plus M lobes, each a
// Beta kernel of the cosine between the lobe direction and the view
// direction. Spherical harmonics up to degree 3 serve as the baseline.

#include "dbs/common.hpp"
#include "dbs/kernel.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace dbs {

/// Per-lobe parameter layout in the feature vector.
inline constexpr int kLobeParams = 6;
enum LobeSlot { kLobeTheta = 0, kLobePhi = 1, kLobeSharpness = 2, kLobeRed = 3, kLobeGreen = 4, kLobeBlue = 5 };

/// Unit direction from polar angle theta (from +z) and azimuth phi.
template <class T> Vec3<T> lobe_direction(T theta, T phi) {
  const T st = std::sin(theta);
  return Vec3<T>(st * std::cos(phi), st * std::sin(phi), std::cos(theta));
}

/// Inverse of lobe_direction for a nonzero vector.
template <class T> std::array<T, 2> lobe_angles(const Vec3<T>& d) {
  const Vec3<T> u = d.normalized();
  return {std::acos(std::clamp(u[2], T(-1), T(1))), std::atan2(u[1], u[0])};
}

template <class T> struct SbLobe {
  T theta = T(0);
  T phi = T(0);
  T sharpness = T(0);
  Vec3<T> color = Vec3<T>::Zero();

  Vec3<T> direction() const { return lobe_direction(theta, phi); }
};

template <class T> struct ColorSplit {
  Vec3<T> diffuse = Vec3<T>::Zero();
  Vec3<T> specular = Vec3<T>::Zero();
  Vec3<T> total() const { return diffuse + specular; }
};

/// Evaluates SB color from raw parameter pointers: base[3], features[6 M].
template <class T> ColorSplit<T> sb_eval_raw(const T* base, const T* features, int lobes, const Vec3<T>& view) {
  ColorSplit<T> out;
  out.diffuse = Vec3<T>(base[0], base[1], base[2]);
  for (int m = 0; m < lobes; ++m) {
    const T* f = features + kLobeParams * m;
    const T d = lobe_direction(f[kLobeTheta], f[kLobePhi]).dot(view);
    if (!(d > T(0))) continue;
    const T x = std::clamp(T(1) - d, T(0), T(1));
    const T w = beta_kernel(x, beta_exponent(f[kLobeSharpness]));
    out.specular += w * Vec3<T>(f[kLobeRed], f[kLobeGreen], f[kLobeBlue]);
  }
  return out;
}

/// Accumulates gradients of sb_eval_raw into d_base[3], d_features[6 M] and
/// returns dL/dview.
template <class T>
Vec3<T> sb_backward_raw(const T* base, const T* features, int lobes, const Vec3<T>& view, const Vec3<T>& d_diffuse,
                        const Vec3<T>& d_specular, T* d_base, T* d_features) {
  (void)base;
  for (int c = 0; c < 3; ++c) d_base[c] += d_diffuse[c];
  Vec3<T> d_view = Vec3<T>::Zero();
  for (int m = 0; m < lobes; ++m) {
    const T* f = features + kLobeParams * m;
    T* g = d_features + kLobeParams * m;
    const T theta = f[kLobeTheta], phi = f[kLobePhi];
    const Vec3<T> dir = lobe_direction(theta, phi);
    const T d = dir.dot(view);
    if (!(d > T(0))) continue;
    const T x = std::clamp(T(1) - d, T(0), T(1));
    const T exponent = beta_exponent(f[kLobeSharpness]);
    const T w = beta_kernel(x, exponent);
    const Vec3<T> color(f[kLobeRed], f[kLobeGreen], f[kLobeBlue]);
    g[kLobeRed] += w * d_specular[0];
    g[kLobeGreen] += w * d_specular[1];
    g[kLobeBlue] += w * d_specular[2];
    const T d_w = color.dot(d_specular);
    const auto kg = beta_kernel_grad(x, exponent, shape_is_clamped(f[kLobeSharpness]));
    g[kLobeSharpness] += kg.d_db * d_w;
    // x = 1 - d
    const T d_dot = -kg.d_dx * d_w;
    const Vec3<T> d_dir = d_dot * view;
    d_view += d_dot * dir;
    const T st = std::sin(theta), ct = std::cos(theta), sp = std::sin(phi), cp = std::cos(phi);
    g[kLobeTheta] += d_dir.dot(Vec3<T>(ct * cp, ct * sp, -st));
    g[kLobePhi] += d_dir.dot(Vec3<T>(-st * sp, st * cp, T(0)));
  }
  return d_view;
}

/// Spherical Beta appearance: base color and M specular lobes.
template <class T> struct SbAppearance {
  Vec3<T> base_color = Vec3<T>::Zero();
  std::vector<SbLobe<T>> lobes;

  int parameter_count() const { return 3 + kLobeParams * static_cast<int>(lobes.size()); }

  std::vector<T> features() const {
    std::vector<T> f;
    f.reserve(lobes.size() * kLobeParams);
    for (const auto& l : lobes) {
      f.insert(f.end(), {l.theta, l.phi, l.sharpness, l.color[0], l.color[1], l.color[2]});
    }
    return f;
  }

  static SbAppearance from_raw(const T* base, const T* features, int lobe_count) {
    SbAppearance a;
    a.base_color = Vec3<T>(base[0], base[1], base[2]);
    for (int m = 0; m < lobe_count; ++m) {
      const T* f = features + kLobeParams * m;
      a.lobes.push_back({f[kLobeTheta], f[kLobePhi], f[kLobeSharpness],
                         Vec3<T>(f[kLobeRed], f[kLobeGreen], f[kLobeBlue])});
    }
    return a;
  }
};

template <class T> Vec3<T> sb_eval(const SbAppearance<T>& a, const Vec3<T>& view) {
  const auto f = a.features();
  return sb_eval_raw(a.base_color.data(), f.data(), static_cast<int>(a.lobes.size()), view).total();
}

template <class T> struct SbGradient {
  Vec3<T> d_base_color = Vec3<T>::Zero();
  /// Per lobe: d theta, d phi, d sharpness, d color.
  std::vector<SbLobe<T>> d_lobes;
  Vec3<T> d_view = Vec3<T>::Zero();
};

template <class T> SbGradient<T> sb_grad(const SbAppearance<T>& a, const Vec3<T>& view, const Vec3<T>& d_rgb) {
  const auto f = a.features();
  std::vector<T> df(f.size(), T(0));
  SbGradient<T> g;
  const int m = static_cast<int>(a.lobes.size());
  g.d_view = sb_backward_raw(a.base_color.data(), f.data(), m, view, d_rgb, d_rgb, g.d_base_color.data(), df.data());
  g.d_lobes = SbAppearance<T>::from_raw(g.d_base_color.data(), df.data(), m).lobes;
  return g;
}

enum class ColorMode { full, diffuse, specular };

/// Diffuse returns the base color, specular the sum of lobe terms; the two
/// add up to sb_eval exactly.
template <class T> Vec3<T> decompose(const SbAppearance<T>& a, ColorMode mode, const Vec3<T>& view) {
  const auto f = a.features();
  const ColorSplit<T> split = sb_eval_raw(a.base_color.data(), f.data(), static_cast<int>(a.lobes.size()), view);
  switch (mode) {
    case ColorMode::diffuse:
      return split.diffuse;
    case ColorMode::specular:
      return split.specular;
    case ColorMode::full:
      break;
  }
  return split.total();
}

/// Spreads M lobe directions over the sphere (Fibonacci lattice).
template <class T> std::vector<Vec3<T>> fibonacci_directions(int count) {
  std::vector<Vec3<T>> dirs;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = golden * i;
    dirs.emplace_back(T(r * std::cos(a)), T(r * std::sin(a)), T(z));
  }
  return dirs;
}

// ---------------------------------------------------------------------------
// Real spherical harmonics, degree <= 3

namespace sh {
inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kC2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                              -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kC3 = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                              0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                              -0.5900435899266435};
}  // namespace sh

inline constexpr int kMaxShDegree = 3;

inline int sh_coefficient_count(int degree) { return (degree + 1) * (degree + 1); }

/// Basis values Y_k(dir) for k < (degree + 1)^2, and their gradients.
template <class T> void sh_basis(int degree, const Vec3<T>& d, T* y, Vec3<T>* dy = nullptr) {
  const T x = d[0], yy = d[1], z = d[2];
  y[0] = T(sh::kC0);
  if (dy) dy[0].setZero();
  if (degree < 1) return;
  const T c1 = T(sh::kC1);
  y[1] = -c1 * yy;
  y[2] = c1 * z;
  y[3] = -c1 * x;
  if (dy) {
    dy[1] = Vec3<T>(0, -c1, 0);
    dy[2] = Vec3<T>(0, 0, c1);
    dy[3] = Vec3<T>(-c1, 0, 0);
  }
  if (degree < 2) return;
  const T xx = x * x, y2 = yy * yy, zz = z * z, xy = x * yy, yz = yy * z, xz = x * z;
  const auto& c2 = sh::kC2;
  y[4] = T(c2[0]) * xy;
  y[5] = T(c2[1]) * yz;
  y[6] = T(c2[2]) * (T(2) * zz - xx - y2);
  y[7] = T(c2[3]) * xz;
  y[8] = T(c2[4]) * (xx - y2);
  if (dy) {
    dy[4] = T(c2[0]) * Vec3<T>(yy, x, 0);
    dy[5] = T(c2[1]) * Vec3<T>(0, z, yy);
    dy[6] = T(c2[2]) * Vec3<T>(-T(2) * x, -T(2) * yy, T(4) * z);
    dy[7] = T(c2[3]) * Vec3<T>(z, 0, x);
    dy[8] = T(c2[4]) * Vec3<T>(T(2) * x, -T(2) * yy, 0);
  }
  if (degree < 3) return;
  const auto& c3 = sh::kC3;
  y[9] = T(c3[0]) * yy * (T(3) * xx - y2);
  y[10] = T(c3[1]) * xy * z;
  y[11] = T(c3[2]) * yy * (T(4) * zz - xx - y2);
  y[12] = T(c3[3]) * z * (T(2) * zz - T(3) * xx - T(3) * y2);
  y[13] = T(c3[4]) * x * (T(4) * zz - xx - y2);
  y[14] = T(c3[5]) * z * (xx - y2);
  y[15] = T(c3[6]) * x * (xx - T(3) * y2);
  if (dy) {
    dy[9] = T(c3[0]) * Vec3<T>(T(6) * xy, T(3) * xx - T(3) * y2, 0);
    dy[10] = T(c3[1]) * Vec3<T>(yz, xz, xy);
    dy[11] = T(c3[2]) * Vec3<T>(-T(2) * xy, T(4) * zz - xx - T(3) * y2, T(8) * yz);
    dy[12] = T(c3[3]) * Vec3<T>(-T(6) * xz, -T(6) * yz, T(6) * zz - T(3) * xx - T(3) * y2);
    dy[13] = T(c3[4]) * Vec3<T>(T(4) * zz - T(3) * xx - y2, -T(2) * xy, T(8) * xz);
    dy[14] = T(c3[5]) * Vec3<T>(T(2) * xz, -T(2) * yz, xx - y2);
    dy[15] = T(c3[6]) * Vec3<T>(T(3) * xx - T(3) * y2, -T(6) * xy, 0);
  }
}

/// SH color: diffuse = Y_0 c_0 from base[3]; specular = higher bands from
/// rest[3 ((L+1)^2 - 1)], coefficient-major (k, channel).
template <class T> ColorSplit<T> sh_eval_raw(const T* base, const T* rest, int degree, const Vec3<T>& view) {
  std::array<T, 16> y{};
  sh_basis(degree, view, y.data());
  ColorSplit<T> out;
  out.diffuse = y[0] * Vec3<T>(base[0], base[1], base[2]);
  const int n = sh_coefficient_count(degree);
  for (int k = 1; k < n; ++k) {
    const T* c = rest + 3 * (k - 1);
    out.specular += y[static_cast<std::size_t>(k)] * Vec3<T>(c[0], c[1], c[2]);
  }
  return out;
}

template <class T>
Vec3<T> sh_backward_raw(const T* base, const T* rest, int degree, const Vec3<T>& view, const Vec3<T>& d_diffuse,
                        const Vec3<T>& d_specular, T* d_base, T* d_rest) {
  (void)base;
  std::array<T, 16> y{};
  std::array<Vec3<T>, 16> dy;
  sh_basis(degree, view, y.data(), dy.data());
  for (int c = 0; c < 3; ++c) d_base[c] += y[0] * d_diffuse[c];
  Vec3<T> d_view = Vec3<T>::Zero();
  const int n = sh_coefficient_count(degree);
  for (int k = 1; k < n; ++k) {
    const T* c = rest + 3 * (k - 1);
    T* g = d_rest + 3 * (k - 1);
    for (int ch = 0; ch < 3; ++ch) g[ch] += y[static_cast<std::size_t>(k)] * d_specular[ch];
    d_view += Vec3<T>(c[0], c[1], c[2]).dot(d_specular) * dy[static_cast<std::size_t>(k)];
  }
  return d_view;
}

/// Real SH appearance of degree L <= 3: coefficients[k] is the RGB weight of Y_k.
template <class T> struct ShAppearance {
  int degree = 0;
  std::vector<Vec3<T>> coefficients;

  explicit ShAppearance(int l = 0) : degree(l) {
    if (l < 0 || l > kMaxShDegree) throw DomainError("spherical harmonics degree must be in [0, 3]");
    coefficients.assign(static_cast<std::size_t>(sh_coefficient_count(l)), Vec3<T>::Zero());
  }

  int parameter_count() const { return 3 * static_cast<int>(coefficients.size()); }
};

template <class T> Vec3<T> sh_eval(const ShAppearance<T>& a, const Vec3<T>& view) {
  std::array<T, 16> y{};
  sh_basis(a.degree, view, y.data());
  Vec3<T> out = Vec3<T>::Zero();
  for (std::size_t k = 0; k < a.coefficients.size(); ++k) out += y[k] * a.coefficients[k];
  return out;
}

template <class T> struct ShGradient {
  std::vector<Vec3<T>> d_coefficients;
  Vec3<T> d_view = Vec3<T>::Zero();
};

template <class T> ShGradient<T> sh_grad(const ShAppearance<T>& a, const Vec3<T>& view, const Vec3<T>& d_rgb) {
  std::array<T, 16> y{};
  std::array<Vec3<T>, 16> dy;
  sh_basis(a.degree, view, y.data(), dy.data());
  ShGradient<T> g;
  for (std::size_t k = 0; k < a.coefficients.size(); ++k) {
    g.d_coefficients.push_back(y[k] * d_rgb);
    g.d_view += a.coefficients[k].dot(d_rgb) * dy[k];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Model selection

enum class AppearanceModel { spherical_beta, spherical_harmonics };

/// Which appearance encoding a scene uses and its size.
struct AppearanceLayout {
  AppearanceModel model = AppearanceModel::spherical_beta;
  int lobes = 2;      // spherical_beta
  int sh_degree = 3;  // spherical_harmonics

  static AppearanceLayout spherical_beta(int m) {
    if (m < 0) throw DomainError("lobe count must be >= 0");
    return {AppearanceModel::spherical_beta, m, 0};
  }
  static AppearanceLayout spherical_harmonics(int degree) {
    if (degree < 0 || degree > kMaxShDegree) throw DomainError("spherical harmonics degree must be in [0, 3]");
    return {AppearanceModel::spherical_harmonics, 0, degree};
  }

  /// Reals stored per primitive beyond the 3-channel base color.
  int feature_dim() const {
    return model == AppearanceModel::spherical_beta ? kLobeParams * lobes
                                                    : 3 * (sh_coefficient_count(sh_degree) - 1);
  }
  /// Reals per primitive for the whole appearance (base color included).
  int parameter_count() const { return 3 + feature_dim(); }

  bool operator==(const AppearanceLayout& o) const {
    return model == o.model && (model == AppearanceModel::spherical_beta ? lobes == o.lobes : sh_degree == o.sh_degree);
  }
};

template <class T>
ColorSplit<T> appearance_eval(const AppearanceLayout& layout, const T* base, const T* features, const Vec3<T>& view) {
  return layout.model == AppearanceModel::spherical_beta ? sb_eval_raw(base, features, layout.lobes, view)
                                                         : sh_eval_raw(base, features, layout.sh_degree, view);
}

template <class T>
Vec3<T> appearance_backward(const AppearanceLayout& layout, const T* base, const T* features, const Vec3<T>& view,
                            const Vec3<T>& d_diffuse, const Vec3<T>& d_specular, T* d_base, T* d_features) {
  return layout.model == AppearanceModel::spherical_beta
             ? sb_backward_raw(base, features, layout.lobes, view, d_diffuse, d_specular, d_base, d_features)
             : sh_backward_raw(base, features, layout.sh_degree, view, d_diffuse, d_specular, d_base, d_features);
}

}  // namespace dbs
