#pragma once

#include "dbs/common.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

namespace dbs {

/// Interleaved H x W x C image, row-major.
template <class T> struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T(0))
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  T& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  template <class U> Image<U> cast() const {
    Image<U> out(width, height, channels);
    std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }
};

template <class T> Image<T> add(const Image<T>& a, const Image<T>& b) {
  if (!a.same_shape(b)) throw DomainError("image dimensions differ");
  Image<T> out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

template <class T> double max_abs_diff(const Image<T>& a, const Image<T>& b) {
  if (!a.same_shape(b)) throw DomainError("image dimensions differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  }
  return m;
}

}  // namespace dbs
