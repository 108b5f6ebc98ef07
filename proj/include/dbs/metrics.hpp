#pragma once

// Image quality metrics on [0, 1] images.

#include "dbs/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace dbs {

/// 10 log10(1 / MSE); +infinity for identical images.
template <class T> double psnr(const Image<T>& a, const Image<T>& b) {
  if (!a.same_shape(b)) throw DomainError("psnr: image dimensions differ");
  if (a.data.empty()) throw DomainError("psnr: empty image");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(sse / double(a.data.size()));
}

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct SsimResult {
  double value = 0.0;
  /// dSSIM/da, same layout as the input (empty unless requested).
  Image<double> grad;
};

namespace detail {

inline const std::array<double, kSsimWindow>& ssim_weights() {
  static const std::array<double, kSsimWindow> w = [] {
    std::array<double, kSsimWindow> k{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double d = i - kSsimWindow / 2;
      k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
      sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  return w;
}

/// Separable Gaussian blur with zero padding, output the same size.
/// The kernel is symmetric, so this operator is its own adjoint.
inline void gaussian_blur(const std::vector<double>& in, std::vector<double>& out, std::vector<double>& tmp, int w,
                          int h) {
  const auto& k = ssim_weights();
  constexpr int r = kSsimWindow / 2;
  tmp.assign(in.size(), 0.0);
  out.assign(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    const double* row = in.data() + static_cast<std::size_t>(y) * w;
    double* dst = tmp.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      const int lo = std::max(0, x - r), hi = std::min(w - 1, x + r);
      for (int j = lo; j <= hi; ++j) s += k[j - x + r] * row[j];
      dst[x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    double* dst = out.data() + static_cast<std::size_t>(y) * w;
    const int lo = std::max(0, y - r), hi = std::min(h - 1, y + r);
    for (int j = lo; j <= hi; ++j) {
      const double kw = k[j - y + r];
      const double* src = tmp.data() + static_cast<std::size_t>(j) * w;
      for (int x = 0; x < w; ++x) dst[x] += kw * src[x];
    }
  }
}

}  // namespace detail

/// Mean SSIM over pixels and channels; optionally the gradient w.r.t. `a`.
template <class T> SsimResult ssim(const Image<T>& a, const Image<T>& b, bool with_grad = false) {
  if (!a.same_shape(b)) throw DomainError("ssim: image dimensions differ");
  if (a.width < kSsimWindow || a.height < kSsimWindow) throw DomainError("ssim: images must be at least 11x11");
  const int w = a.width, h = a.height, ch = a.channels;
  const std::size_t np = a.pixel_count();
  const double norm = 1.0 / (double(np) * ch);
  SsimResult res;
  if (with_grad) res.grad = Image<double>(w, h, ch);
  std::vector<double> x(np), y(np), xx(np), yy(np), xy(np), tmp;
  std::vector<double> mx, my, mxx, myy, mxy;
  std::vector<double> g1(np), g2(np), g12(np), b1, b2, b12;
  double total = 0.0;
  for (int c = 0; c < ch; ++c) {
    for (std::size_t p = 0; p < np; ++p) {
      x[p] = double(a.data[p * ch + c]);
      y[p] = double(b.data[p * ch + c]);
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    detail::gaussian_blur(x, mx, tmp, w, h);
    detail::gaussian_blur(y, my, tmp, w, h);
    detail::gaussian_blur(xx, mxx, tmp, w, h);
    detail::gaussian_blur(yy, myy, tmp, w, h);
    detail::gaussian_blur(xy, mxy, tmp, w, h);
    for (std::size_t p = 0; p < np; ++p) {
      const double ux = mx[p], uy = my[p];
      const double vx = mxx[p] - ux * ux;
      const double vy = myy[p] - uy * uy;
      const double cxy = mxy[p] - ux * uy;
      const double a1 = 2.0 * ux * uy + kSsimC1;
      const double a2 = 2.0 * cxy + kSsimC2;
      const double d1 = ux * ux + uy * uy + kSsimC1;
      const double d2 = vx + vy + kSsimC2;
      const double s = a1 * a2 / (d1 * d2);
      total += s;
      if (with_grad) {
        const double ds_dux = 2.0 * uy * a2 / (d1 * d2) - s * 2.0 * ux / d1;
        const double ds_dvx = -s / d2;
        const double ds_dcxy = 2.0 * a1 / (d1 * d2);
        // Chain through vx = E[x^2] - ux^2 and cxy = E[xy] - ux uy.
        g1[p] = ds_dux - 2.0 * ux * ds_dvx - uy * ds_dcxy;
        g2[p] = ds_dvx;
        g12[p] = ds_dcxy;
      }
    }
    if (with_grad) {
      detail::gaussian_blur(g1, b1, tmp, w, h);
      detail::gaussian_blur(g2, b2, tmp, w, h);
      detail::gaussian_blur(g12, b12, tmp, w, h);
      for (std::size_t p = 0; p < np; ++p) {
        res.grad.data[p * ch + c] = norm * (b1[p] + 2.0 * x[p] * b2[p] + y[p] * b12[p]);
      }
    }
  }
  res.value = total / (double(np) * ch);
  return res;
}

template <class T> double ssim_value(const Image<T>& a, const Image<T>& b) { return ssim(a, b, false).value; }

}  // namespace dbs
