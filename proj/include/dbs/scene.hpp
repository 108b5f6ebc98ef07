#pragma once

// Structure-of-arrays storage for a set of Beta primitives. The same type
// holds parameters, gradients and optimizer moments.

#include "dbs/appearance.hpp"
#include "dbs/common.hpp"
#include "dbs/primitive.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace dbs {

enum class Group { position, opacity, rotation, scale, shape, base_color, features };

inline constexpr std::array<Group, 7> kAllGroups = {Group::position, Group::opacity,    Group::rotation,
                                                    Group::scale,    Group::shape,      Group::base_color,
                                                    Group::features};

inline std::string_view group_name(Group g) {
  switch (g) {
    case Group::position: return "position";
    case Group::opacity: return "opacity";
    case Group::rotation: return "rotation";
    case Group::scale: return "scale";
    case Group::shape: return "shape";
    case Group::base_color: return "base_color";
    case Group::features: return "features";
  }
  return "?";
}

/// One primitive with activated opacity and scale.
template <class T> struct BetaPrimitive {
  Vec3<T> position = Vec3<T>::Zero();
  T opacity = T(0.1);
  Vec4<T> rotation = Vec4<T>(1, 0, 0, 0);
  Vec3<T> scale = Vec3<T>::Ones();
  T shape = T(0);
  Vec3<T> base_color = Vec3<T>::Zero();
  std::vector<T> features;
};

/// Opacity is stored as a logit and scale as a log so that any real
/// parameter vector maps to a valid primitive.
template <class T> struct Scene {
  AppearanceLayout layout;
  std::vector<T> position;    // 3 per primitive
  std::vector<T> opacity;     // logit
  std::vector<T> rotation;    // 4, (w, x, y, z), unnormalized
  std::vector<T> scale;       // 3, log
  std::vector<T> shape;       // b
  std::vector<T> base_color;  // 3
  std::vector<T> features;    // layout.feature_dim()

  Scene() = default;
  explicit Scene(AppearanceLayout l, std::size_t n = 0) : layout(l) { resize(n); }

  std::size_t size() const { return opacity.size(); }
  bool empty() const { return opacity.empty(); }

  int width(Group g) const {
    switch (g) {
      case Group::position: return 3;
      case Group::opacity: return 1;
      case Group::rotation: return 4;
      case Group::scale: return 3;
      case Group::shape: return 1;
      case Group::base_color: return 3;
      case Group::features: return layout.feature_dim();
    }
    return 0;
  }

  std::vector<T>& group(Group g) {
    switch (g) {
      case Group::position: return position;
      case Group::opacity: return opacity;
      case Group::rotation: return rotation;
      case Group::scale: return scale;
      case Group::shape: return shape;
      case Group::base_color: return base_color;
      case Group::features: return features;
    }
    throw DomainError("unknown parameter group");
  }
  const std::vector<T>& group(Group g) const { return const_cast<Scene*>(this)->group(g); }

  void resize(std::size_t n) {
    for (Group g : kAllGroups) group(g).resize(n * static_cast<std::size_t>(width(g)), T(0));
  }

  /// Same layout and size, all zeros.
  Scene zeros_like() const { return Scene(layout, size()); }

  void set_zero() {
    for (Group g : kAllGroups) std::fill(group(g).begin(), group(g).end(), T(0));
  }

  /// Copies every parameter of primitive `src` into slot `dst`.
  void copy_primitive(std::size_t dst, std::size_t src) {
    for (Group g : kAllGroups) {
      auto& v = group(g);
      const std::size_t w = static_cast<std::size_t>(width(g));
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(src * w), w, v.begin() + static_cast<std::ptrdiff_t>(dst * w));
    }
  }

  void zero_primitive(std::size_t i) {
    for (Group g : kAllGroups) {
      auto& v = group(g);
      const std::size_t w = static_cast<std::size_t>(width(g));
      std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(i * w), w, T(0));
    }
  }

  /// Array lengths agree with the primitive count and layout.
  void validate() const {
    const std::size_t n = size();
    for (Group g : kAllGroups) {
      if (group(g).size() != n * static_cast<std::size_t>(width(g))) {
        throw FormatError("scene: array '" + std::string(group_name(g)) + "' length inconsistent with count");
      }
    }
  }

  Vec3<T> mu(std::size_t i) const { return Vec3<T>(position[3 * i], position[3 * i + 1], position[3 * i + 2]); }
  Vec4<T> quat(std::size_t i) const {
    return Vec4<T>(rotation[4 * i], rotation[4 * i + 1], rotation[4 * i + 2], rotation[4 * i + 3]);
  }
  Vec3<T> scale_of(std::size_t i) const {
    return Vec3<T>(std::exp(scale[3 * i]), std::exp(scale[3 * i + 1]), std::exp(scale[3 * i + 2]));
  }
  T opacity_of(std::size_t i) const { return sigmoid(opacity[i]); }
  const T* base_color_ptr(std::size_t i) const { return base_color.data() + 3 * i; }
  const T* features_ptr(std::size_t i) const {
    return features.data() + static_cast<std::size_t>(layout.feature_dim()) * i;
  }
  Mat3<T> covariance_of(std::size_t i) const { return covariance(quat(i), scale_of(i)); }

  BetaPrimitive<T> primitive(std::size_t i) const {
    BetaPrimitive<T> p;
    p.position = mu(i);
    p.opacity = opacity_of(i);
    p.rotation = quat(i);
    p.scale = scale_of(i);
    p.shape = shape[i];
    p.base_color = Vec3<T>(base_color[3 * i], base_color[3 * i + 1], base_color[3 * i + 2]);
    const std::size_t f = static_cast<std::size_t>(layout.feature_dim());
    p.features.assign(features.begin() + static_cast<std::ptrdiff_t>(f * i),
                      features.begin() + static_cast<std::ptrdiff_t>(f * (i + 1)));
    return p;
  }

  void set_primitive(std::size_t i, const BetaPrimitive<T>& p) {
    if (!(p.opacity > T(0) && p.opacity < T(1))) throw DomainError("primitive opacity must lie in (0, 1)");
    if (!(p.scale.minCoeff() > T(0))) throw DomainError("primitive scale must be positive");
    const std::size_t f = static_cast<std::size_t>(layout.feature_dim());
    if (p.features.size() != f) throw DomainError("primitive feature length does not match layout");
    for (int k = 0; k < 3; ++k) {
      position[3 * i + k] = p.position[k];
      scale[3 * i + k] = std::log(p.scale[k]);
      base_color[3 * i + k] = p.base_color[k];
    }
    for (int k = 0; k < 4; ++k) rotation[4 * i + k] = p.rotation[k];
    opacity[i] = logit(p.opacity);
    shape[i] = p.shape;
    std::copy(p.features.begin(), p.features.end(), features.begin() + static_cast<std::ptrdiff_t>(f * i));
  }

  std::size_t push_back(const BetaPrimitive<T>& p) {
    const std::size_t i = size();
    resize(i + 1);
    set_primitive(i, p);
    return i;
  }

  /// Keeps primitives i for which keep[i] is true, preserving order.
  void compact(const std::vector<bool>& keep) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < size(); ++i) {
      if (keep[i]) {
        if (out != i) copy_primitive(out, i);
        ++out;
      }
    }
    resize(out);
  }

  /// Reorders so that new slot k holds old primitive perm[k].
  Scene permuted(const std::vector<std::size_t>& perm) const {
    Scene out(layout, perm.size());
    for (Group g : kAllGroups) {
      const auto& src = group(g);
      auto& dst = out.group(g);
      const std::size_t w = static_cast<std::size_t>(width(g));
      for (std::size_t k = 0; k < perm.size(); ++k) {
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(perm[k] * w), w,
                    dst.begin() + static_cast<std::ptrdiff_t>(k * w));
      }
    }
    return out;
  }

  template <class U> Scene<U> cast() const {
    Scene<U> out(layout, size());
    for (Group g : kAllGroups) {
      const auto& src = group(g);
      auto& dst = out.group(g);
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<U>(src[k]);
    }
    return out;
  }

  /// Total number of stored reals.
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (Group g : kAllGroups) n += group(g).size();
    return n;
  }

  bool operator==(const Scene& o) const {
    if (!(layout == o.layout)) return false;
    for (Group g : kAllGroups) {
      if (group(g) != o.group(g)) return false;
    }
    return true;
  }
};

}  // namespace dbs
