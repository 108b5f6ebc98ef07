#pragma once

// Synthetic datasets: a ground-truth primitive scene rendered from a ring of
// cameras with the reference renderer.

#include "dbs/dataset.hpp"
#include "dbs/rasterizer.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace dbs {

struct ToyOptions {
  int views = 16;
  int width = 64;
  int height = 64;
  /// Every k-th view is held out.
  int test_every = 8;
  double camera_radius = 4.0;
  double camera_elevation = 0.45;
  double fov_x = 0.7;
};

struct ToyDataset {
  Dataset data;
  Scene<float> truth;
};

inline const std::vector<std::string>& toy_presets() {
  static const std::vector<std::string> names = {"spheres", "box-room", "specular-ball"};
  return names;
}

namespace detail {

inline Vec4<double> random_unit_quaternion(Rng& rng) {
  Vec4<double> q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q / q.norm();
}

/// Quaternion (w, x, y, z) rotating +z onto `n`.
inline Vec4<double> quaternion_from_z(const Vec3<double>& n) {
  const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(Vec3<double>::UnitZ(), n);
  return Vec4<double>(q.w(), q.x(), q.y(), q.z());
}

struct ToyPrimitive {
  Vec3<double> position;
  Vec4<double> rotation;
  Vec3<double> scale;
  double opacity;
  double shape;
  Vec3<double> color;
  /// Optional single lobe: direction, sharpness b, color.
  bool lobe = false;
  Vec3<double> lobe_direction = Vec3<double>::UnitZ();
  double lobe_sharpness = 0.0;
  Vec3<double> lobe_color = Vec3<double>::Zero();
};

inline std::vector<ToyPrimitive> toy_spheres(Rng& rng) {
  const std::array<Vec3<double>, 4> centers = {Vec3<double>(-0.55, -0.3, 0.0), Vec3<double>(0.55, -0.25, 0.1),
                                               Vec3<double>(0.0, 0.5, -0.1), Vec3<double>(0.05, 0.0, 0.6)};
  const std::array<double, 4> radii = {0.45, 0.4, 0.5, 0.3};
  const std::array<Vec3<double>, 4> colors = {Vec3<double>(0.85, 0.2, 0.15), Vec3<double>(0.2, 0.7, 0.25),
                                              Vec3<double>(0.2, 0.3, 0.85), Vec3<double>(0.9, 0.8, 0.2)};
  std::vector<ToyPrimitive> out;
  for (int s = 0; s < 4; ++s) {
    const auto dirs = fibonacci_directions<double>(50);
    for (const auto& n : dirs) {
      ToyPrimitive p;
      p.position = centers[s] + radii[s] * n;
      p.rotation = quaternion_from_z(n);
      const double t = radii[s] * rng.uniform(0.3, 0.4);
      p.scale = Vec3<double>(t, t, 0.3 * t);
      p.opacity = rng.uniform(0.75, 0.95);
      p.shape = rng.uniform(-1.0, 1.0);
      p.color = (colors[s] + Vec3<double>(rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08),
                                          rng.uniform(-0.08, 0.08)))
                    .cwiseMax(0.0)
                    .cwiseMin(1.0);
      out.push_back(p);
    }
  }
  return out;
}

inline std::vector<ToyPrimitive> toy_box_room(Rng& rng) {
  std::vector<ToyPrimitive> out;
  // Floor, back wall and side wall as grids of flat primitives.
  auto plane = [&](const Vec3<double>& origin, const Vec3<double>& u, const Vec3<double>& v, int nu, int nv,
                   const Vec3<double>& color) {
    const Vec3<double> n = u.cross(v).normalized();
    for (int i = 0; i < nu; ++i) {
      for (int j = 0; j < nv; ++j) {
        ToyPrimitive p;
        p.position = origin + (i + 0.5) / nu * u + (j + 0.5) / nv * v;
        p.rotation = quaternion_from_z(n);
        const double t = 0.7 * u.norm() / nu;
        p.scale = Vec3<double>(t, t, 0.05 * t);
        p.opacity = rng.uniform(0.85, 0.95);
        p.shape = rng.uniform(-1.0, 0.0);
        const double shade = 0.85 + 0.15 * ((i + j) % 2);
        p.color = shade * color;
        out.push_back(p);
      }
    }
  };
  plane(Vec3<double>(-1, -1, -0.7), Vec3<double>(2, 0, 0), Vec3<double>(0, 2, 0), 10, 10, Vec3<double>(0.8, 0.75, 0.6));
  plane(Vec3<double>(-1, 1, -0.7), Vec3<double>(2, 0, 0), Vec3<double>(0, 0, 1.6), 10, 8, Vec3<double>(0.3, 0.5, 0.8));
  plane(Vec3<double>(-1, -1, -0.7), Vec3<double>(0, 2, 0), Vec3<double>(0, 0, 1.6), 10, 8, Vec3<double>(0.8, 0.35, 0.3));
  // A small block in the middle.
  for (int k = 0; k < 24; ++k) {
    ToyPrimitive p;
    p.position = Vec3<double>(rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), rng.uniform(-0.7, -0.2));
    p.rotation = random_unit_quaternion(rng);
    p.scale = Vec3<double>::Constant(0.12);
    p.opacity = 0.9;
    p.shape = rng.uniform(-0.5, 0.5);
    p.color = Vec3<double>(0.2, 0.6, 0.3);
    out.push_back(p);
  }
  return out;
}

inline std::vector<ToyPrimitive> toy_specular_ball(Rng& rng) {
  std::vector<ToyPrimitive> out;
  for (const auto& n : fibonacci_directions<double>(240)) {
    ToyPrimitive p;
    p.position = 0.8 * n;
    p.rotation = quaternion_from_z(n);
    const double t = rng.uniform(0.12, 0.15);
    p.scale = Vec3<double>(t, t, 0.3 * t);
    p.opacity = 0.9;
    p.shape = rng.uniform(-0.5, 0.5);
    p.color = Vec3<double>(0.5, 0.15, 0.1);
    // Facing the viewer: the view direction points from the camera into the surface.
    p.lobe = true;
    p.lobe_direction = -n;
    p.lobe_sharpness = 2.0;
    p.lobe_color = Vec3<double>(0.5, 0.5, 0.5);
    out.push_back(p);
  }
  return out;
}

}  // namespace detail

inline std::vector<Camera<float>> camera_ring(const ToyOptions& opt) {
  std::vector<Camera<float>> cams;
  for (int k = 0; k < opt.views; ++k) {
    const double az = 2.0 * kPi * k / opt.views;
    const Vec3<double> eye = opt.camera_radius * Vec3<double>(std::cos(opt.camera_elevation) * std::cos(az),
                                                              std::cos(opt.camera_elevation) * std::sin(az),
                                                              std::sin(opt.camera_elevation));
    cams.push_back(Camera<float>::look_at(eye, Vec3<double>::Zero(), Vec3<double>::UnitZ(), opt.fov_x, opt.width,
                                         opt.height));
  }
  return cams;
}

/// Ground-truth scene of a preset, with two spherical Beta lobes per primitive.
inline Scene<float> toy_scene(const std::string& preset, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<detail::ToyPrimitive> prims;
  if (preset == "spheres") {
    prims = detail::toy_spheres(rng);
  } else if (preset == "box-room") {
    prims = detail::toy_box_room(rng);
  } else if (preset == "specular-ball") {
    prims = detail::toy_specular_ball(rng);
  } else {
    throw DomainError("unknown toy preset '" + preset + "'");
  }
  const AppearanceLayout layout = AppearanceLayout::spherical_beta(2);
  Scene<float> s(layout, prims.size());
  const std::size_t f = static_cast<std::size_t>(layout.feature_dim());
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const auto& p = prims[i];
    for (int k = 0; k < 3; ++k) {
      s.position[3 * i + k] = float(p.position[k]);
      s.scale[3 * i + k] = float(std::log(p.scale[k]));
      s.base_color[3 * i + k] = float(p.color[k]);
    }
    for (int k = 0; k < 4; ++k) s.rotation[4 * i + k] = float(p.rotation[k]);
    s.opacity[i] = float(logit(p.opacity));
    s.shape[i] = float(p.shape);
    float* lobe = s.features.data() + f * i;
    if (p.lobe) {
      const auto ang = lobe_angles(p.lobe_direction);
      lobe[kLobeTheta] = float(ang[0]);
      lobe[kLobePhi] = float(ang[1]);
      lobe[kLobeSharpness] = float(p.lobe_sharpness);
      for (int k = 0; k < 3; ++k) lobe[kLobeRed + k] = float(p.lobe_color[k]);
    }
  }
  return s;
}

/// Renders a preset from a camera ring with the reference renderer on a white background.
inline ToyDataset make_toy(const std::string& preset, std::uint64_t seed, const ToyOptions& opt = {}) {
  if (opt.views < 2) throw DomainError("make_toy: need at least 2 views");
  ToyDataset out;
  out.truth = toy_scene(preset, seed);
  out.data.background = Vec3<double>::Ones();
  RenderOptions ropt;
  ropt.background = out.data.background;
  const auto cams = camera_ring(opt);
  for (std::size_t k = 0; k < cams.size(); ++k) {
    View v;
    v.name = "r_" + std::to_string(k);
    v.camera = cams[k];
    v.image = render_reference(out.truth, cams[k], ropt).color;
    out.data.views.push_back(std::move(v));
  }
  out.data.tag_every_nth_as_test(opt.test_every);
  return out;
}

}  // namespace dbs
