#pragma once

// Depth-sorted alpha compositing of projected Beta primitives, in a naive
// per-pixel form and a 16x16 tiled form that share the per-pixel routine,
// plus the analytic backward pass.

#include "dbs/appearance.hpp"
#include "dbs/image.hpp"
#include "dbs/kernel.hpp"
#include "dbs/parallel.hpp"
#include "dbs/primitive.hpp"
#include "dbs/scene.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

namespace dbs {

inline constexpr int kTileSize = 16;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kTransmittanceCutoff = 1e-4;

struct RenderOptions {
  Vec3<double> background = Vec3<double>::Ones();
  ColorMode mode = ColorMode::full;
  int threads = 0;
  ProjectionOptions projection;
  /// When set, only primitives i with mask(i) == true are rendered.
  std::function<bool(std::size_t)> mask;
};

struct RenderStats {
  std::size_t primitives = 0;
  std::size_t visible = 0;
  std::size_t tile_entries = 0;
  /// Bytes of working memory held by the renderer (excluding the output images).
  std::size_t bytes_allocated = 0;
};

template <class T> struct RenderOutput {
  Image<T> color;
  Image<T> alpha;
  /// Pixels each primitive contributed to.
  std::vector<std::uint32_t> contributions;
  RenderStats stats;
};

template <class T> struct GradientBuffer {
  /// Gradients with respect to the stored (pre-activation) parameters.
  Scene<T> grad;
  /// Norm of dL/dmu' in pixels, per primitive.
  std::vector<T> screen_grad_norm;
};

/// Everything the compositor needs about one visible primitive.
template <class T> struct Splat {
  std::uint32_t index;
  T mx, my;
  T ca, cb, cc;  // inverse 2D covariance [[ca, cb], [cb, cc]]
  T opacity;
  T exponent;
  T depth;
  T diffuse[3];
  T specular[3];
  PixelRect bounds;
};

namespace detail {

template <class T> struct Prepared {
  std::vector<Splat<T>> splats;  // depth order
  std::vector<ProjectedPrimitive<T>> projected;
  std::vector<Vec3<T>> view_dirs;
  std::vector<T> view_dist;
};

template <class T>
Prepared<T> prepare(const Scene<T>& scene, const Camera<T>& cam, const RenderOptions& opt, bool keep_projection) {
  const std::size_t n = scene.size();
  std::vector<Splat<T>> slots(n);
  std::vector<char> alive(n, 0);
  std::vector<ProjectedPrimitive<T>> proj(keep_projection ? n : 0);
  std::vector<Vec3<T>> dirs(keep_projection ? n : 0);
  std::vector<T> dists(keep_projection ? n : 0);
  const Vec3<T> center = cam.center();
  parallel_for(n, opt.threads, [&](std::size_t i) {
    if (opt.mask && !opt.mask(i)) return;
    const auto p = project(scene.mu(i), scene.quat(i), scene.scale_of(i), cam, opt.projection);
    if (!p) return;
    Splat<T>& s = slots[i];
    s.index = static_cast<std::uint32_t>(i);
    s.mx = p->mean[0];
    s.my = p->mean[1];
    s.ca = p->cov_inv(0, 0);
    s.cb = p->cov_inv(0, 1);
    s.cc = p->cov_inv(1, 1);
    s.opacity = scene.opacity_of(i);
    s.exponent = beta_exponent(scene.shape[i]);
    s.depth = p->depth;
    s.bounds = p->bounds;
    const Vec3<T> offset = scene.mu(i) - center;
    const T dist = offset.norm();
    const Vec3<T> view = offset / dist;
    const ColorSplit<T> c = appearance_eval(scene.layout, scene.base_color_ptr(i), scene.features_ptr(i), view);
    for (int k = 0; k < 3; ++k) {
      s.diffuse[k] = c.diffuse[k];
      s.specular[k] = c.specular[k];
    }
    if (keep_projection) {
      proj[i] = *p;
      dirs[i] = view;
      dists[i] = dist;
    }
    alive[i] = 1;
  });
  Prepared<T> out;
  std::vector<std::uint32_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) order.push_back(static_cast<std::uint32_t>(i));
  }
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return slots[a].depth < slots[b].depth || (slots[a].depth == slots[b].depth && a < b);
  });
  out.splats.reserve(order.size());
  for (std::uint32_t i : order) out.splats.push_back(slots[i]);
  if (keep_projection) {
    out.projected = std::move(proj);
    out.view_dirs = std::move(dirs);
    out.view_dist = std::move(dists);
  }
  return out;
}

template <class T> struct PixelAccum {
  T diffuse[3] = {T(0), T(0), T(0)};
  T specular[3] = {T(0), T(0), T(0)};
  T transmittance = T(1);
};

/// Front-to-back compositing of one pixel over splats[list[0..count)].
/// `visit(k, alpha, t_before, kernel, r2, dx, dy)` is called per contribution.
template <class T, class Visit>
inline PixelAccum<T> shade_pixel(const Splat<T>* splats, const std::uint32_t* list, std::size_t count, int px, int py,
                                 Visit&& visit) {
  PixelAccum<T> acc;
  const T fx = T(px);
  const T fy = T(py);
  for (std::size_t k = 0; k < count; ++k) {
    const Splat<T>& s = splats[list[k]];
    if (!s.bounds.contains(px, py)) continue;
    const T dx = fx - s.mx;
    const T dy = fy - s.my;
    const T r2 = s.ca * dx * dx + T(2) * s.cb * dx * dy + s.cc * dy * dy;
    if (!(r2 < T(1))) continue;
    const T kernel = beta_kernel(std::max(r2, T(0)), s.exponent);
    const T alpha = s.opacity * kernel;
    if (alpha < T(kMinAlpha)) continue;
    const T w = alpha * acc.transmittance;
    for (int c = 0; c < 3; ++c) {
      acc.diffuse[c] += w * s.diffuse[c];
      acc.specular[c] += w * s.specular[c];
    }
    visit(k, alpha, acc.transmittance, kernel, r2, dx, dy);
    acc.transmittance *= (T(1) - alpha);
    if (acc.transmittance < T(kTransmittanceCutoff)) break;
  }
  return acc;
}

template <class T>
inline void store_pixel(const PixelAccum<T>& acc, const RenderOptions& opt, RenderOutput<T>& out, int x, int y) {
  for (int c = 0; c < 3; ++c) {
    const T diffuse = acc.diffuse[c] + T(opt.background[c]) * acc.transmittance;
    T v;
    switch (opt.mode) {
      case ColorMode::diffuse: v = diffuse; break;
      case ColorMode::specular: v = acc.specular[c]; break;
      default: v = diffuse + acc.specular[c]; break;
    }
    out.color.at(x, y, c) = v;
  }
  out.alpha.at(x, y) = T(1) - acc.transmittance;
}

struct TileBins {
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::uint32_t> offsets;  // tiles + 1
  std::vector<std::uint32_t> entries;  // splat positions, depth order within each tile
};

template <class T> TileBins bin_splats(const std::vector<Splat<T>>& splats, int width, int height) {
  TileBins bins;
  bins.tiles_x = (width + kTileSize - 1) / kTileSize;
  bins.tiles_y = (height + kTileSize - 1) / kTileSize;
  const std::size_t tiles = static_cast<std::size_t>(bins.tiles_x) * static_cast<std::size_t>(bins.tiles_y);
  bins.offsets.assign(tiles + 1, 0);
  for (const auto& s : splats) {
    for (int ty = s.bounds.y0 / kTileSize; ty <= s.bounds.y1 / kTileSize; ++ty) {
      for (int tx = s.bounds.x0 / kTileSize; tx <= s.bounds.x1 / kTileSize; ++tx) {
        ++bins.offsets[static_cast<std::size_t>(ty) * bins.tiles_x + tx + 1];
      }
    }
  }
  for (std::size_t t = 0; t < tiles; ++t) bins.offsets[t + 1] += bins.offsets[t];
  bins.entries.resize(bins.offsets[tiles]);
  std::vector<std::uint32_t> cursor(bins.offsets.begin(), bins.offsets.end() - 1);
  for (std::size_t k = 0; k < splats.size(); ++k) {
    const auto& b = splats[k].bounds;
    for (int ty = b.y0 / kTileSize; ty <= b.y1 / kTileSize; ++ty) {
      for (int tx = b.x0 / kTileSize; tx <= b.x1 / kTileSize; ++tx) {
        bins.entries[cursor[static_cast<std::size_t>(ty) * bins.tiles_x + tx]++] = static_cast<std::uint32_t>(k);
      }
    }
  }
  return bins;
}

template <class T> RenderOutput<T> make_output(const Camera<T>& cam, std::size_t n) {
  RenderOutput<T> out;
  out.color = Image<T>(cam.width, cam.height, 3);
  out.alpha = Image<T>(cam.width, cam.height, 1);
  out.contributions.assign(n, 0);
  out.stats.primitives = n;
  return out;
}

}  // namespace detail

/// Per-pixel compositing over the full depth-sorted primitive list.
template <class T>
RenderOutput<T> render_reference(const Scene<T>& scene, const Camera<T>& cam, const RenderOptions& opt = {}) {
  cam.validate();
  const auto prep = detail::prepare(scene, cam, opt, false);
  auto out = detail::make_output(cam, scene.size());
  out.stats.visible = prep.splats.size();
  std::vector<std::uint32_t> all(prep.splats.size());
  std::iota(all.begin(), all.end(), 0u);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const auto acc = detail::shade_pixel(prep.splats.data(), all.data(), all.size(), x, y,
                                           [&](std::size_t k, T, T, T, T, T, T) {
                                             ++out.contributions[prep.splats[all[k]].index];
                                           });
      detail::store_pixel(acc, opt, out, x, y);
    }
  }
  out.stats.bytes_allocated = prep.splats.capacity() * sizeof(Splat<T>) + all.capacity() * sizeof(std::uint32_t);
  return out;
}

/// Working memory render_tiled needs for the given visible splats.
template <class T> std::size_t tiled_memory_estimate(const std::vector<PixelRect>& bounds, std::size_t primitives,
                                                     int width, int height, std::size_t workers) {
  std::size_t entries = 0;
  for (const auto& b : bounds) {
    if (b.empty()) continue;
    entries += static_cast<std::size_t>(b.x1 / kTileSize - b.x0 / kTileSize + 1) *
               static_cast<std::size_t>(b.y1 / kTileSize - b.y0 / kTileSize + 1);
  }
  const std::size_t tiles = static_cast<std::size_t>((width + kTileSize - 1) / kTileSize) *
                            static_cast<std::size_t>((height + kTileSize - 1) / kTileSize);
  return bounds.size() * sizeof(Splat<T>) + entries * sizeof(std::uint32_t) +
         (2 * tiles + 1) * sizeof(std::uint32_t) + workers * primitives * sizeof(std::uint32_t);
}

/// Same compositing as render_reference with primitives binned to 16x16 tiles;
/// tiles are shaded in parallel.
template <class T>
RenderOutput<T> render_tiled(const Scene<T>& scene, const Camera<T>& cam, const RenderOptions& opt = {}) {
  cam.validate();
  const auto prep = detail::prepare(scene, cam, opt, false);
  auto out = detail::make_output(cam, scene.size());
  out.stats.visible = prep.splats.size();
  const auto bins = detail::bin_splats(prep.splats, cam.width, cam.height);
  out.stats.tile_entries = bins.entries.size();
  const std::size_t tiles = bins.offsets.size() - 1;
  const std::size_t workers = worker_count(tiles, opt.threads);
  std::vector<std::vector<std::uint32_t>> counters(workers);
  parallel_for_workers(tiles, opt.threads, [&](std::size_t t, std::size_t w) {
    auto& counter = counters[w];
    if (counter.empty()) counter.assign(scene.size(), 0);
    const int tx = static_cast<int>(t % static_cast<std::size_t>(bins.tiles_x));
    const int ty = static_cast<int>(t / static_cast<std::size_t>(bins.tiles_x));
    const std::uint32_t* list = bins.entries.data() + bins.offsets[t];
    const std::size_t count = bins.offsets[t + 1] - bins.offsets[t];
    const int x_end = std::min(cam.width, (tx + 1) * kTileSize);
    const int y_end = std::min(cam.height, (ty + 1) * kTileSize);
    for (int y = ty * kTileSize; y < y_end; ++y) {
      for (int x = tx * kTileSize; x < x_end; ++x) {
        const auto acc = detail::shade_pixel(prep.splats.data(), list, count, x, y,
                                             [&](std::size_t k, T, T, T, T, T, T) {
                                               ++counter[prep.splats[list[k]].index];
                                             });
        detail::store_pixel(acc, opt, out, x, y);
      }
    }
  });
  std::size_t counter_bytes = 0;
  for (const auto& c : counters) {
    counter_bytes += c.capacity() * sizeof(std::uint32_t);
    for (std::size_t i = 0; i < c.size(); ++i) out.contributions[i] += c[i];
  }
  out.stats.bytes_allocated = prep.splats.capacity() * sizeof(Splat<T>) +
                              bins.entries.capacity() * sizeof(std::uint32_t) +
                              bins.offsets.capacity() * sizeof(std::uint32_t) +
                              tiles * sizeof(std::uint32_t) + counter_bytes;
  return out;
}

/// Renders only primitives accepted by `keep(index)`.
template <class T>
RenderOutput<T> render_masked(const Scene<T>& scene, const Camera<T>& cam, std::function<bool(std::size_t)> keep,
                              RenderOptions opt = {}) {
  opt.mask = std::move(keep);
  return render_tiled(scene, cam, opt);
}

/// Mask selecting primitives whose shape b is below (or at/above) a threshold.
template <class T> std::function<bool(std::size_t)> shape_mask(const Scene<T>& scene, T threshold, bool below) {
  return [&scene, threshold, below](std::size_t i) {
    return below ? scene.shape[i] < threshold : !(scene.shape[i] < threshold);
  };
}

template <class T> T mean_shape(const Scene<T>& scene) {
  if (scene.empty()) return T(0);
  double s = 0.0;
  for (T b : scene.shape) s += double(b);
  return T(s / double(scene.size()));
}

namespace detail {
inline constexpr int kStage = 13;
enum StageSlot { kMeanX = 0, kMeanY, kConA, kConB, kConC, kOpac, kShape, kDiff, kSpec = kDiff + 3 };
}  // namespace detail

/// Gradients of sum_pixels <d_color, color> with respect to every stored
/// parameter. The depth order is held fixed.
template <class T>
GradientBuffer<T> render_backward(const Scene<T>& scene, const Camera<T>& cam, const RenderOptions& opt,
                                  const Image<T>& d_color) {
  cam.validate();
  if (d_color.width != cam.width || d_color.height != cam.height || d_color.channels != 3) {
    throw DomainError("render_backward: gradient image does not match camera");
  }
  const auto prep = detail::prepare(scene, cam, opt, true);
  const auto bins = detail::bin_splats(prep.splats, cam.width, cam.height);
  const std::size_t tiles = bins.offsets.size() - 1;
  std::vector<T> staging(bins.entries.size() * detail::kStage, T(0));
  const bool use_diffuse = opt.mode != ColorMode::specular;
  const bool use_specular = opt.mode != ColorMode::diffuse;
  const Vec3<T> background = use_diffuse ? Vec3<T>(opt.background.template cast<T>()) : Vec3<T>(Vec3<T>::Zero());

  struct Contribution {
    std::uint32_t k;
    T alpha, trans, kernel, r2, dx, dy;
  };
  const std::size_t workers = worker_count(tiles, opt.threads);
  std::vector<std::vector<Contribution>> scratch(workers);

  parallel_for_workers(tiles, opt.threads, [&](std::size_t t, std::size_t w) {
    auto& contrib = scratch[w];
    const int tx = static_cast<int>(t % static_cast<std::size_t>(bins.tiles_x));
    const int ty = static_cast<int>(t / static_cast<std::size_t>(bins.tiles_x));
    const std::size_t base = bins.offsets[t];
    const std::uint32_t* list = bins.entries.data() + base;
    const std::size_t count = bins.offsets[t + 1] - base;
    T* stage = staging.data() + base * detail::kStage;
    const int x_end = std::min(cam.width, (tx + 1) * kTileSize);
    const int y_end = std::min(cam.height, (ty + 1) * kTileSize);
    for (int y = ty * kTileSize; y < y_end; ++y) {
      for (int x = tx * kTileSize; x < x_end; ++x) {
        const Vec3<T> g(d_color.at(x, y, 0), d_color.at(x, y, 1), d_color.at(x, y, 2));
        if (g.isZero()) continue;
        contrib.clear();
        detail::shade_pixel(prep.splats.data(), list, count, x, y,
                            [&](std::size_t k, T alpha, T trans, T kernel, T r2, T dx, T dy) {
                              contrib.push_back({static_cast<std::uint32_t>(k), alpha, trans, kernel, r2, dx, dy});
                            });
        T behind = background.dot(g);
        for (auto it = contrib.rbegin(); it != contrib.rend(); ++it) {
          const Splat<T>& s = prep.splats[list[it->k]];
          T* st = stage + static_cast<std::size_t>(it->k) * detail::kStage;
          T cg = T(0);
          if (use_diffuse) cg += s.diffuse[0] * g[0] + s.diffuse[1] * g[1] + s.diffuse[2] * g[2];
          if (use_specular) cg += s.specular[0] * g[0] + s.specular[1] * g[1] + s.specular[2] * g[2];
          const T d_alpha = it->trans * (cg - behind);
          behind = cg * it->alpha + (T(1) - it->alpha) * behind;
          const T wt = it->alpha * it->trans;
          for (int c = 0; c < 3; ++c) {
            if (use_diffuse) st[detail::kDiff + c] += wt * g[c];
            if (use_specular) st[detail::kSpec + c] += wt * g[c];
          }
          st[detail::kOpac] += it->kernel * d_alpha;
          const T d_kernel = s.opacity * d_alpha;
          const auto kg = beta_kernel_grad(std::max(it->r2, T(0)), s.exponent, shape_is_clamped(scene.shape[s.index]));
          st[detail::kShape] += kg.d_db * d_kernel;
          const T d_r2 = kg.d_dx * d_kernel;
          const T dx = it->dx, dy = it->dy;
          st[detail::kConA] += dx * dx * d_r2;
          st[detail::kConB] += dx * dy * d_r2;
          st[detail::kConC] += dy * dy * d_r2;
          st[detail::kMeanX] -= T(2) * (s.ca * dx + s.cb * dy) * d_r2;
          st[detail::kMeanY] -= T(2) * (s.cb * dx + s.cc * dy) * d_r2;
        }
      }
    }
  });

  // Ordered reduction: the result does not depend on the thread count.
  std::vector<T> per_splat(prep.splats.size() * detail::kStage, T(0));
  for (std::size_t e = 0; e < bins.entries.size(); ++e) {
    T* dst = per_splat.data() + static_cast<std::size_t>(bins.entries[e]) * detail::kStage;
    const T* src = staging.data() + e * detail::kStage;
    for (int j = 0; j < detail::kStage; ++j) dst[j] += src[j];
  }

  GradientBuffer<T> out;
  out.grad = scene.zeros_like();
  out.screen_grad_norm.assign(scene.size(), T(0));
  const std::size_t fdim = static_cast<std::size_t>(scene.layout.feature_dim());
  parallel_for(prep.splats.size(), opt.threads, [&](std::size_t k) {
    const Splat<T>& s = prep.splats[k];
    const std::size_t i = s.index;
    const T* st = per_splat.data() + k * detail::kStage;
    auto& g = out.grad;
    const ProjectedPrimitive<T>& p = prep.projected[i];
    const Vec4<T> q = scene.quat(i);
    const Vec3<T> sc = scene.scale_of(i);
    const Mat3<T> sigma = covariance(q, sc);

    Mat2<T> d_conic;
    d_conic << st[detail::kConA], st[detail::kConB], st[detail::kConB], st[detail::kConC];
    const Mat2<T> d_cov2d = inverse_backward(p.cov_inv, d_conic);
    const Vec2<T> d_mean(st[detail::kMeanX], st[detail::kMeanY]);
    out.screen_grad_norm[i] = d_mean.norm();
    const auto pg = project_backward(p, sigma, cam, d_mean, d_cov2d);
    const auto cg = covariance_backward(q, sc, pg.d_cov3d);

    const Vec3<T> d_diff(st[detail::kDiff], st[detail::kDiff + 1], st[detail::kDiff + 2]);
    const Vec3<T> d_spec(st[detail::kSpec], st[detail::kSpec + 1], st[detail::kSpec + 2]);
    const Vec3<T>& view = prep.view_dirs[i];
    const Vec3<T> d_view = appearance_backward(scene.layout, scene.base_color_ptr(i), scene.features_ptr(i), view,
                                               d_diff, d_spec, g.base_color.data() + 3 * i, g.features.data() + fdim * i);
    const Vec3<T> d_mu = pg.d_position + (d_view - view * view.dot(d_view)) / prep.view_dist[i];

    for (int c = 0; c < 3; ++c) {
      g.position[3 * i + c] = d_mu[c];
      g.scale[3 * i + c] = cg.d_scale[c] * sc[c];
    }
    for (int c = 0; c < 4; ++c) g.rotation[4 * i + c] = cg.d_rotation[c];
    const T o = s.opacity;
    g.opacity[i] = st[detail::kOpac] * o * (T(1) - o);
    g.shape[i] = st[detail::kShape];
  });
  return out;
}

}  // namespace dbs
