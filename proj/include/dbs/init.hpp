#pragma once

// Initial primitive sets: one primitive per SfM point, or uniform random.

#include "dbs/dataset.hpp"
#include "dbs/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <vector>

namespace dbs {

inline constexpr double kInitialOpacity = 0.1;
inline constexpr double kMinNeighborDistance = 1e-7;
inline constexpr std::size_t kBruteForceKnnLimit = 10000;

/// Stored base-color value that displays as `rgb` under the layout.
inline Vec3<double> base_from_rgb(const AppearanceLayout& layout, const Vec3<double>& rgb) {
  return layout.model == AppearanceModel::spherical_harmonics ? Vec3<double>(rgb / sh::kC0) : rgb;
}

namespace detail {

/// Keeps the k smallest squared distances seen so far, ascending.
template <std::size_t K> struct NearestK {
  std::array<double, K> d;
  NearestK() { d.fill(std::numeric_limits<double>::infinity()); }
  void offer(double v) {
    if (!(v < d[K - 1])) return;
    std::size_t j = K - 1;
    while (j > 0 && d[j - 1] > v) {
      d[j] = d[j - 1];
      --j;
    }
    d[j] = v;
  }
  double worst() const { return d[K - 1]; }
};

inline double mean_of_sqrt(const std::array<double, 3>& d) {
  return (std::sqrt(d[0]) + std::sqrt(d[1]) + std::sqrt(d[2])) / 3.0;
}

}  // namespace detail

/// Mean distance to the 3 nearest other points, by exhaustive search.
inline std::vector<double> knn3_mean_distance_brute(const std::vector<Vec3<double>>& pts) {
  std::vector<double> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    detail::NearestK<3> best;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i) best.offer((pts[i] - pts[j]).squaredNorm());
    }
    out[i] = detail::mean_of_sqrt(best.d);
  }
  return out;
}

/// Same result as the brute-force search, using a uniform grid with
/// expanding shell search.
inline std::vector<double> knn3_mean_distance_grid(const std::vector<Vec3<double>>& pts) {
  const std::size_t n = pts.size();
  Vec3<double> lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3<double> ext = (hi - lo).cwiseMax(Vec3<double>::Constant(1e-12));
  const double cell = std::max(std::cbrt(ext.prod() / double(n) * 2.0), 1e-12);
  std::array<long long, 3> dims;
  for (int k = 0; k < 3; ++k) dims[k] = std::max(1LL, static_cast<long long>(std::ceil(ext[k] / cell)));
  auto coord = [&](const Vec3<double>& p, int k) {
    return std::clamp(static_cast<long long>((p[k] - lo[k]) / cell), 0LL, dims[k] - 1);
  };
  auto key = [&](long long x, long long y, long long z) { return (z * dims[1] + y) * dims[0] + x; };
  std::unordered_map<long long, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i < n; ++i) grid[key(coord(pts[i], 0), coord(pts[i], 1), coord(pts[i], 2))].push_back(i);
  std::vector<double> out(n);
  const long long max_ring = std::max({dims[0], dims[1], dims[2]});
  for (std::size_t i = 0; i < n; ++i) {
    const long long cx = coord(pts[i], 0), cy = coord(pts[i], 1), cz = coord(pts[i], 2);
    detail::NearestK<3> best;
    for (long long ring = 0; ring <= max_ring; ++ring) {
      for (long long z = cz - ring; z <= cz + ring; ++z) {
        for (long long y = cy - ring; y <= cy + ring; ++y) {
          for (long long x = cx - ring; x <= cx + ring; ++x) {
            if (std::max({std::abs(x - cx), std::abs(y - cy), std::abs(z - cz)}) != ring) continue;
            if (x < 0 || y < 0 || z < 0 || x >= dims[0] || y >= dims[1] || z >= dims[2]) continue;
            const auto it = grid.find(key(x, y, z));
            if (it == grid.end()) continue;
            for (std::size_t j : it->second) {
              if (j != i) best.offer((pts[i] - pts[j]).squaredNorm());
            }
          }
        }
      }
      // Every point outside the searched cube is at least ring * cell away.
      const double covered = double(ring) * cell;
      if (best.worst() <= covered * covered) break;
    }
    out[i] = detail::mean_of_sqrt(best.d);
  }
  return out;
}

inline std::vector<double> knn3_mean_distance(const std::vector<Vec3<double>>& pts) {
  return pts.size() < kBruteForceKnnLimit ? knn3_mean_distance_brute(pts) : knn3_mean_distance_grid(pts);
}

/// One isotropic primitive per point, scale = mean distance to its 3 nearest neighbours.
template <class T> Scene<T> init_from_points(const std::vector<SfmPoint>& points, const AppearanceLayout& layout) {
  if (points.size() < 4) throw DomainError("init_from_points: need at least 4 points");
  std::vector<Vec3<double>> pos(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) pos[i] = points[i].position;
  const auto dist = knn3_mean_distance(pos);
  Scene<T> s(layout, points.size());
  const T o = T(logit(kInitialOpacity));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const T ls = T(std::log(std::max(dist[i], kMinNeighborDistance)));
    const Vec3<double> base = base_from_rgb(layout, points[i].color);
    for (int k = 0; k < 3; ++k) {
      s.position[3 * i + k] = T(pos[i][k]);
      s.scale[3 * i + k] = ls;
      s.base_color[3 * i + k] = T(base[k]);
    }
    s.rotation[4 * i] = T(1);
    s.opacity[i] = o;
  }
  return s;
}

/// n primitives uniform in [lo, hi], isotropic scale |hi - lo| / cbrt(n).
template <class T>
Scene<T> init_random(std::size_t n, const Vec3<double>& lo, const Vec3<double>& hi, const AppearanceLayout& layout,
                     Rng& rng) {
  if (n < 1) throw DomainError("init_random: n must be at least 1");
  if (!(hi.array() > lo.array()).all()) throw DomainError("init_random: empty bounding box");
  Scene<T> s(layout, n);
  const T ls = T(std::log((hi - lo).norm() / std::cbrt(double(n))));
  const T o = T(logit(kInitialOpacity));
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) s.position[3 * i + k] = T(rng.uniform(lo[k], hi[k]));
    const Vec3<double> rgb(rng.uniform(0.4, 0.6), rng.uniform(0.4, 0.6), rng.uniform(0.4, 0.6));
    const Vec3<double> base = base_from_rgb(layout, rgb);
    for (int k = 0; k < 3; ++k) {
      s.scale[3 * i + k] = ls;
      s.base_color[3 * i + k] = T(base[k]);
    }
    s.rotation[4 * i] = T(1);
    s.opacity[i] = o;
  }
  return s;
}

}  // namespace dbs
