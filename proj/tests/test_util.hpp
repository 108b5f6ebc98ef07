#pragma once

#include "dbs/rasterizer.hpp"
#include "dbs/scene.hpp"

#include <random>

namespace dbs::testing {

/// Random primitives around the origin, viewed by default_camera().
template <class T>
Scene<T> random_scene(std::size_t n, std::uint64_t seed, AppearanceLayout layout = AppearanceLayout::spherical_beta(2),
                      double extent = 1.0, double scale_lo = 0.03, double scale_hi = 0.15) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> us(std::log(scale_lo), std::log(scale_hi));
  std::uniform_real_distribution<double> uo(-1.5, 1.5);
  std::normal_distribution<double> nrm;
  Scene<T> s(layout, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      s.position[3 * i + k] = T(extent * u(g));
      s.scale[3 * i + k] = T(us(g));
      s.base_color[3 * i + k] = T(0.5 + 0.3 * u(g));
    }
    for (int k = 0; k < 4; ++k) s.rotation[4 * i + k] = T(nrm(g));
    s.opacity[i] = T(uo(g));
    s.shape[i] = T(0.8 * u(g));
    const int f = layout.feature_dim();
    for (int k = 0; k < f; ++k) s.features[f * i + k] = T(0.5 * u(g));
    if (layout.model == AppearanceModel::spherical_beta) {
      for (int m = 0; m < layout.lobes; ++m) {
        s.features[f * i + kLobeParams * m + kLobeTheta] = T(1.5 + 1.2 * u(g));
        s.features[f * i + kLobeParams * m + kLobePhi] = T(3.0 * u(g));
      }
    }
  }
  return s;
}

template <class T> Camera<T> default_camera(int w, int h, double fov = 0.9) {
  return Camera<T>::look_at(Vec3<double>(0.4, -4.0, 1.2), Vec3<double>(0, 0, 0), Vec3<double>(0, 0, 1), fov, w, h);
}

/// Primitives on a sphere in random storage order, attributes smooth in position.
inline Scene<float> coherent_scene(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nrm;
  Scene<float> s(AppearanceLayout::spherical_beta(2), n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3<double> d(nrm(g), nrm(g), nrm(g));
    d.normalize();
    for (int k = 0; k < 3; ++k) {
      s.position[3 * i + k] = float(d[k]);
      s.scale[3 * i + k] = float(-4.0 + 0.3 * d[(k + 1) % 3]);
      s.base_color[3 * i + k] = float(0.5 + 0.4 * d[k]);
    }
    s.rotation[4 * i] = 1.0f;
    s.rotation[4 * i + 1] = float(0.2 * d[0]);
    s.opacity[i] = float(1.0 + d[2]);
    s.shape[i] = float(0.5 * d[1]);
    for (int f = 0; f < s.layout.feature_dim(); ++f) s.features[12 * i + f] = float(0.3 * d[f % 3]);
  }
  return s;
}

}  // namespace dbs::testing
