#include "dbs/rasterizer.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>

using namespace dbs;
using dbs::testing::default_camera;
using dbs::testing::random_scene;

namespace {

Camera<double> axis_camera(int w, int h, double f) {
  Camera<double> c;
  c.fx = c.fy = f;
  c.cx = w / 2;
  c.cy = h / 2;
  c.width = w;
  c.height = h;
  return c;
}

Scene<double> single(const Vec3<double>& mu, double opacity, double scale, const Vec3<double>& color) {
  Scene<double> s(AppearanceLayout::spherical_beta(0));
  BetaPrimitive<double> p;
  p.position = mu;
  p.opacity = opacity;
  p.scale = Vec3<double>::Constant(scale);
  p.base_color = color;
  s.push_back(p);
  return s;
}

template <class T> double loss_of(const RenderOutput<T>& r, const Image<T>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.data.size(); ++i) acc += double(r.color.data[i]) * double(w.data[i]);
  return acc;
}

template <class T> Image<T> random_weights(int wd, int ht, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n;
  Image<T> w(wd, ht, 3);
  for (auto& v : w.data) v = T(n(g));
  return w;
}

}  // namespace

TEST(Render, EmptySceneIsBackground) {
  Scene<float> s(AppearanceLayout::spherical_beta(2));
  RenderOptions opt;
  opt.background = Vec3<double>(0.2, 0.4, 0.6);
  const auto cam = default_camera<float>(20, 10);
  for (const auto& r : {render_reference(s, cam, opt), render_tiled(s, cam, opt)}) {
    for (int y = 0; y < 10; ++y) {
      for (int x = 0; x < 20; ++x) {
        EXPECT_EQ(r.color.at(x, y, 0), 0.2f);
        EXPECT_EQ(r.color.at(x, y, 2), 0.6f);
        EXPECT_EQ(r.alpha.at(x, y), 0.0f);
      }
    }
  }
}

TEST(Render, SinglePrimitiveAtPixelCenter) {
  const auto cam = axis_camera(32, 32, 40.0);
  const Vec3<double> color(0.9, 0.1, 0.3);
  const auto s = single(Vec3<double>(0, 0, 3), 0.6, 0.2, color);
  RenderOptions opt;
  opt.background = Vec3<double>(0.5, 0.5, 0.5);
  const auto r = render_reference(s, cam, opt);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.color.at(16, 16, c), color[c] * 0.6 + 0.5 * 0.4, 1e-12);
  EXPECT_NEAR(r.alpha.at(16, 16), 0.6, 1e-12);
  EXPECT_EQ(r.contributions[0], static_cast<std::uint32_t>(std::count_if(
                                    r.alpha.data.begin(), r.alpha.data.end(), [](double a) { return a > 0; })));
}

TEST(Render, OpaqueFrontPrimitiveExtinguishesBack) {
  const auto cam = axis_camera(32, 32, 40.0);
  auto s = single(Vec3<double>(0, 0, 3), 0.5, 0.2, Vec3<double>(1, 0, 0));
  s.opacity[0] = 40.0;  // sigmoid(40) == 1 in double precision
  ASSERT_EQ(s.opacity_of(0), 1.0);
  BetaPrimitive<double> back;
  back.position = Vec3<double>(0, 0, 5);
  back.opacity = 0.9;
  back.scale = Vec3<double>::Constant(0.3);
  back.base_color = Vec3<double>(0, 1, 0);
  s.push_back(back);
  const auto r = render_reference(s, cam, RenderOptions{});
  EXPECT_EQ(r.color.at(16, 16, 0), 1.0);
  EXPECT_EQ(r.color.at(16, 16, 1), 0.0);
  // The occluded primitive also receives no opacity gradient at that pixel.
  Image<double> w(32, 32, 3);
  w.at(16, 16, 1) = 1.0;
  const auto g = render_backward(s, cam, RenderOptions{}, w);
  EXPECT_EQ(g.grad.opacity[1], 0.0);
}

TEST(Render, TiledMatchesReferenceOnRandomScenes) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto s = random_scene<float>(200 + 300 * seed, seed, AppearanceLayout::spherical_beta(2), 1.2, 0.02, 0.3);
    const auto cam = default_camera<float>(96, 80);
    RenderOptions opt;
    opt.threads = 3;
    const auto a = render_reference(s, cam, opt);
    const auto b = render_tiled(s, cam, opt);
    EXPECT_EQ(a.color.data, b.color.data);
    EXPECT_EQ(a.alpha.data, b.alpha.data);
    EXPECT_EQ(a.contributions, b.contributions);
    EXPECT_LE(max_abs_diff(a.color, b.color), 1e-5);
  }
}

TEST(Render, AlphaInUnitIntervalAndCompositingConservation) {
  const auto s = random_scene<double>(300, 11);
  const auto cam = default_camera<double>(48, 40);
  const auto r = render_reference(s, cam, RenderOptions{});
  for (double a : r.alpha.data) {
    ASSERT_GE(a, 0.0);
    ASSERT_LE(a, 1.0);
  }
  // Independent recomputation for a few pixels.
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::optional<ProjectedPrimitive<double>>> proj;
  for (std::size_t i = 0; i < s.size(); ++i) proj.push_back(project(s.mu(i), s.quat(i), s.scale_of(i), cam));
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double da = proj[a] ? proj[a]->depth : 1e300;
    const double db = proj[b] ? proj[b]->depth : 1e300;
    return da < db || (da == db && a < b);
  });
  for (int y = 4; y < 40; y += 7) {
    for (int x = 3; x < 48; x += 9) {
      double prod = 1.0;
      for (std::size_t i : order) {
        if (!proj[i] || !proj[i]->bounds.contains(x, y)) continue;
        const double r2 = mahalanobis_sq(Vec2<double>(x, y), *proj[i]);
        if (r2 >= 1.0) continue;
        const double alpha = s.opacity_of(i) * beta_eval(r2, s.shape[i]);
        if (alpha < 1.0 / 255.0) continue;
        prod *= 1.0 - alpha;
        if (prod < 1e-4) break;
      }
      EXPECT_NEAR(r.alpha.at(x, y), 1.0 - prod, 1e-12);
    }
  }
}

TEST(Render, StorageOrderDoesNotMatter) {
  const auto s = random_scene<float>(500, 12);
  std::vector<std::size_t> perm(s.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  const auto t = s.permuted(perm);
  const auto cam = default_camera<float>(64, 64);
  EXPECT_EQ(render_tiled(s, cam).color.data, render_tiled(t, cam).color.data);
}

TEST(Render, BoundedSupportIsExact) {
  const auto s = random_scene<double>(200, 13);
  const auto cam = default_camera<double>(64, 64);
  const std::size_t victim = 7;
  const auto p = project(s.mu(victim), s.quat(victim), s.scale_of(victim), cam);
  ASSERT_TRUE(p.has_value());
  std::vector<bool> keep(s.size(), true);
  keep[victim] = false;
  Scene<double> without = s;
  without.compact(keep);
  const auto a = render_tiled(s, cam);
  const auto b = render_tiled(without, cam);
  int outside = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (mahalanobis_sq(Vec2<double>(x, y), *p) >= 1.0) {
        ++outside;
        for (int c = 0; c < 3; ++c) ASSERT_EQ(a.color.at(x, y, c), b.color.at(x, y, c));
      }
    }
  }
  EXPECT_GT(outside, 0);
}

TEST(Render, DecompositionIsExact) {
  const auto s = random_scene<float>(400, 14);
  const auto cam = default_camera<float>(64, 48);
  RenderOptions full, diffuse, specular;
  diffuse.mode = ColorMode::diffuse;
  specular.mode = ColorMode::specular;
  const auto f = render_tiled(s, cam, full);
  const auto d = render_tiled(s, cam, diffuse);
  const auto sp = render_tiled(s, cam, specular);
  EXPECT_EQ(add(d.color, sp.color).data, f.color.data);
  double specular_energy = 0.0;
  for (float v : sp.color.data) specular_energy += std::abs(v);
  EXPECT_GT(specular_energy, 0.0);
}

TEST(Render, MaskedRendering) {
  const auto s = random_scene<float>(300, 15);
  const auto cam = default_camera<float>(64, 48);
  const auto all = render_masked(s, cam, [](std::size_t) { return true; });
  EXPECT_EQ(all.color.data, render_reference(s, cam).color.data);
  const auto none = render_masked(s, cam, [](std::size_t) { return false; });
  for (float v : none.color.data) EXPECT_EQ(v, 1.0f);
  const float t = mean_shape(s);
  const auto lo = render_masked(s, cam, shape_mask(s, t, true));
  const auto hi = render_masked(s, cam, shape_mask(s, t, false));
  std::size_t lo_count = 0, hi_count = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool below = s.shape[i] < t;
    if (lo.contributions[i] > 0) {
      ++lo_count;
      EXPECT_TRUE(below);
    }
    if (hi.contributions[i] > 0) {
      ++hi_count;
      EXPECT_FALSE(below);
    }
  }
  EXPECT_GT(lo_count, 0u);
  EXPECT_GT(hi_count, 0u);
}

TEST(Render, MemoryStaysWithinBoundsEstimate) {
  const auto s = random_scene<float>(100000, 16, AppearanceLayout::spherical_beta(0), 1.5, 0.002, 0.01);
  const auto cam = default_camera<float>(256, 256);
  RenderOptions opt;
  opt.threads = 2;
  const auto r = render_tiled(s, cam, opt);
  std::vector<PixelRect> bounds;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto p = project(s.mu(i), s.quat(i), s.scale_of(i), cam);
    if (p) bounds.push_back(p->bounds);
  }
  EXPECT_EQ(bounds.size(), r.stats.visible);
  const std::size_t estimate = tiled_memory_estimate<float>(bounds, s.size(), 256, 256, worker_count(256, 2));
  EXPECT_LE(r.stats.bytes_allocated, estimate);
  EXPECT_GT(r.stats.bytes_allocated, 0u);
}

TEST(Backward, MatchesFiniteDifferencesOnEveryParameter) {
  for (AppearanceLayout layout : {AppearanceLayout::spherical_beta(2), AppearanceLayout::spherical_harmonics(3)}) {
    auto s = random_scene<double>(5, 17, layout, 0.5, 0.25, 0.5);
    const auto cam = default_camera<double>(32, 32, 0.6);
    RenderOptions opt;
    opt.background = Vec3<double>(0.3, 0.2, 0.1);
    const auto w = random_weights<double>(32, 32, 18);
    const auto g = render_backward(s, cam, opt, w);
    const double h = 1e-6;
    int checked = 0;
    for (Group grp : kAllGroups) {
      auto& v = s.group(grp);
      const auto& gv = g.grad.group(grp);
      for (std::size_t k = 0; k < v.size(); ++k) {
        const double orig = v[k];
        v[k] = orig + h;
        const double fp = loss_of(render_reference(s, cam, opt), w);
        v[k] = orig - h;
        const double fm = loss_of(render_reference(s, cam, opt), w);
        v[k] = orig;
        const double fd = (fp - fm) / (2 * h);
        EXPECT_NEAR(gv[k], fd, 1e-3 * std::max(std::abs(fd), 1e-2))
            << group_name(grp) << "[" << k << "]";
        ++checked;
      }
    }
    EXPECT_EQ(checked, static_cast<int>(s.parameter_count()));
  }
}

TEST(Backward, DirectionalDerivative) {
  auto s = random_scene<double>(40, 19, AppearanceLayout::spherical_beta(2), 0.8, 0.1, 0.3);
  const auto cam = default_camera<double>(48, 48);
  const RenderOptions opt;
  const auto w = random_weights<double>(48, 48, 20);
  const auto g = render_backward(s, cam, opt, w);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n;
  Scene<double> dir = s.zeros_like();
  double analytic = 0.0;
  for (Group grp : kAllGroups) {
    auto& d = dir.group(grp);
    for (std::size_t k = 0; k < d.size(); ++k) {
      d[k] = n(rng);
      analytic += d[k] * g.grad.group(grp)[k];
    }
  }
  auto shifted = [&](double e) {
    Scene<double> t = s;
    for (Group grp : kAllGroups) {
      for (std::size_t k = 0; k < t.group(grp).size(); ++k) t.group(grp)[k] += e * dir.group(grp)[k];
    }
    return loss_of(render_reference(t, cam, opt), w);
  };
  const double h = 1e-7;
  const double fd = (shifted(h) - shifted(-h)) / (2 * h);
  EXPECT_NEAR(analytic, fd, 1e-3 * std::abs(fd));
}

TEST(Backward, ZeroUpstreamGivesZeroGradient) {
  const auto s = random_scene<double>(30, 22);
  const auto cam = default_camera<double>(32, 32);
  const auto g = render_backward(s, cam, RenderOptions{}, Image<double>(32, 32, 3));
  for (Group grp : kAllGroups) {
    for (double v : g.grad.group(grp)) ASSERT_EQ(v, 0.0);
  }
}

TEST(Backward, DeterministicAcrossThreadCounts) {
  const auto s = random_scene<float>(800, 23);
  const auto cam = default_camera<float>(80, 64);
  const auto w = random_weights<float>(80, 64, 24);
  RenderOptions one, four;
  one.threads = 1;
  four.threads = 4;
  const auto a = render_backward(s, cam, one, w);
  const auto b = render_backward(s, cam, four, w);
  EXPECT_TRUE(a.grad == b.grad);
}

TEST(Backward, DecompositionModes) {
  auto s = random_scene<double>(5, 25, AppearanceLayout::spherical_beta(2), 0.5, 0.25, 0.5);
  const auto cam = default_camera<double>(24, 24, 0.6);
  const auto w = random_weights<double>(24, 24, 26);
  for (ColorMode mode : {ColorMode::diffuse, ColorMode::specular}) {
    RenderOptions opt;
    opt.mode = mode;
    const auto g = render_backward(s, cam, opt, w);
    const double h = 1e-6;
    for (Group grp : {Group::opacity, Group::base_color, Group::features, Group::position}) {
      auto& v = s.group(grp);
      for (std::size_t k = 0; k < v.size(); k += 3) {
        const double orig = v[k];
        v[k] = orig + h;
        const double fp = loss_of(render_reference(s, cam, opt), w);
        v[k] = orig - h;
        const double fm = loss_of(render_reference(s, cam, opt), w);
        v[k] = orig;
        const double fd = (fp - fm) / (2 * h);
        EXPECT_NEAR(g.grad.group(grp)[k], fd, 1e-3 * std::max(std::abs(fd), 1e-2)) << group_name(grp) << k;
      }
    }
  }
}
