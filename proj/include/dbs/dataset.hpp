#pragma once

// Posed views with linear-RGB images, plus optional SfM points.

#include "dbs/image.hpp"
#include "dbs/primitive.hpp"

#include <string>
#include <vector>

namespace dbs {

struct View {
  std::string name;
  Camera<float> camera;
  /// Linear RGB, alpha already composited over the dataset background.
  Image<float> image;
  bool test = false;
};

struct SfmPoint {
  Vec3<double> position = Vec3<double>::Zero();
  Vec3<double> color = Vec3<double>::Zero();
};

struct Dataset {
  std::vector<View> views;
  Vec3<double> background = Vec3<double>::Ones();
  std::vector<SfmPoint> points;

  std::vector<std::size_t> split(bool test) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < views.size(); ++i) {
      if (views[i].test == test) out.push_back(i);
    }
    return out;
  }
  std::vector<std::size_t> train_indices() const { return split(false); }
  std::vector<std::size_t> test_indices() const { return split(true); }

  /// Cameras and images align and have matching sizes.
  void validate() const {
    for (const auto& v : views) {
      v.camera.validate();
      if (v.image.width != v.camera.width || v.image.height != v.camera.height || v.image.channels != 3) {
        throw FormatError("dataset: image '" + v.name + "' does not match its camera");
      }
    }
  }

  /// Marks every k-th view (k > 0) as test; k = 0 puts everything in train.
  void tag_every_nth_as_test(int k) {
    for (std::size_t i = 0; i < views.size(); ++i) views[i].test = k > 0 && i % static_cast<std::size_t>(k) == 0;
  }
};

}  // namespace dbs
