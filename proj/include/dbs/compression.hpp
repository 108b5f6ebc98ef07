#pragma once

// Post-training codec: Morton sort, per-channel 8-bit quantization into PNG
// grids, float32 positions split into four byte planes, JSON manifest.

#include "dbs/png.hpp"
#include "dbs/scene.hpp"
#include "dbs/sceneio.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace dbs {

inline constexpr int kArchiveVersion = 1;
inline constexpr int kMortonBits = 21;

// ---------------------------------------------------------------------------
// Morton ordering

inline std::uint64_t spread_bits_3(std::uint64_t v) {
  v &= 0x1fffffu;
  v = (v | v << 32) & 0x1f00000000ffffULL;
  v = (v | v << 16) & 0x1f0000ff0000ffULL;
  v = (v | v << 8) & 0x100f00f00f00f00fULL;
  v = (v | v << 4) & 0x10c30c30c30c30c3ULL;
  v = (v | v << 2) & 0x1249249249249249ULL;
  return v;
}

inline std::uint64_t morton_key(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  return spread_bits_3(x) | spread_bits_3(y) << 1 | spread_bits_3(z) << 2;
}

/// Morton keys of positions quantized to 21 bits per axis inside their bounding box.
template <class T> std::vector<std::uint64_t> morton_keys(const Scene<T>& scene) {
  const std::size_t n = scene.size();
  std::vector<std::uint64_t> keys(n);
  if (n == 0) return keys;
  Vec3<double> lo = Vec3<double>::Constant(std::numeric_limits<double>::infinity());
  Vec3<double> hi = -lo;
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], double(scene.position[3 * i + k]));
      hi[k] = std::max(hi[k], double(scene.position[3 * i + k]));
    }
  }
  const double levels = double((1u << kMortonBits) - 1u);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t q[3];
    for (int k = 0; k < 3; ++k) {
      const double extent = hi[k] - lo[k];
      const double t = extent > 0 ? (double(scene.position[3 * i + k]) - lo[k]) / extent : 0.0;
      q[k] = static_cast<std::uint32_t>(std::clamp(std::floor(t * levels), 0.0, levels));
    }
    keys[i] = morton_key(q[0], q[1], q[2]);
  }
  return keys;
}

/// perm[i] is the source index of the i-th primitive in Morton order (stable).
template <class T> std::vector<std::size_t> sort_primitives(const Scene<T>& scene) {
  const auto keys = morton_keys(scene);
  std::vector<std::size_t> perm(scene.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  return perm;
}

template <class T> Scene<T> permute(const Scene<T>& scene, const std::vector<std::size_t>& perm) {
  if (perm.size() != scene.size()) throw DomainError("permute: permutation size mismatch");
  Scene<T> out(scene.layout, scene.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= scene.size()) throw DomainError("permute: index out of range");
    for (Group g : kAllGroups) {
      const std::size_t w = static_cast<std::size_t>(scene.width(g));
      std::copy_n(scene.group(g).begin() + static_cast<std::ptrdiff_t>(perm[i] * w), w,
                  out.group(g).begin() + static_cast<std::ptrdiff_t>(i * w));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quantization

struct Quantized {
  std::vector<std::uint16_t> codes;
  double min = 0.0;
  double max = 0.0;
  int bits = 8;

  double step() const { return (max - min) / double((1u << bits) - 1u); }
};

inline Quantized quantize_attribute(const std::vector<double>& values, int bits = 8) {
  if (bits < 1 || bits > 16) throw DomainError("quantize: bits must be in [1, 16]");
  Quantized q;
  q.bits = bits;
  q.codes.resize(values.size());
  if (values.empty()) return q;
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError("quantize: non-finite value");
  }
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  q.min = *mn;
  q.max = *mx;
  const double levels = double((1u << bits) - 1u);
  if (q.max == q.min) return q;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = (values[i] - q.min) / (q.max - q.min) * levels;
    q.codes[i] = static_cast<std::uint16_t>(std::clamp(std::lround(t), 0L, long(levels)));
  }
  return q;
}

inline double dequantize_code(std::uint16_t code, double min, double max, int bits) {
  const std::uint32_t top = (1u << bits) - 1u;
  if (code == 0 || max == min) return min;
  if (code >= top) return max;
  return min + double(code) * ((max - min) / double(top));
}

inline std::vector<double> dequantize_attribute(const Quantized& q) {
  std::vector<double> out(q.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dequantize_code(q.codes[i], q.min, q.max, q.bits);
  return out;
}

// ---------------------------------------------------------------------------
// Archive

struct GridDims {
  int rows = 0;
  int cols = 0;
};

/// Near-square grid: cols = ceil(sqrt(n)), rows = ceil(n / cols); at least 1x1.
inline GridDims grid_for(std::size_t n) {
  GridDims g;
  g.cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(double(n)))));
  g.rows = std::max<int>(1, static_cast<int>((n + static_cast<std::size_t>(g.cols) - 1) / static_cast<std::size_t>(g.cols)));
  return g;
}

struct CompressedArchive {
  nlohmann::json manifest;
  /// File name -> PNG bytes.
  std::map<std::string, std::vector<std::uint8_t>> files;

  std::string manifest_text() const { return manifest.dump(2) + "\n"; }
  std::size_t byte_size() const {
    std::size_t total = manifest_text().size();
    for (const auto& [name, bytes] : files) total += bytes.size();
    return total;
  }
  bool operator==(const CompressedArchive& o) const {
    return manifest_text() == o.manifest_text() && files == o.files;
  }
};

struct PackOptions {
  bool sort = true;
  int png_level = 9;
};

namespace detail {

/// One quantized attribute group: `channels` consecutive scalars per primitive.
struct GroupSpec {
  std::string name;
  int channels;
};

inline std::vector<GroupSpec> archive_groups(const AppearanceLayout& layout) {
  std::vector<GroupSpec> g = {{"opacity", 1}, {"rotation", 4}, {"scale", 3}, {"shape", 1}, {"base_color", 3}};
  const int f = layout.feature_dim();
  if (layout.model == AppearanceModel::spherical_beta) {
    for (int m = 0; m < layout.lobes; ++m) {
      g.push_back({"lobe_" + std::to_string(m) + "_geometry", 3});
      g.push_back({"lobe_" + std::to_string(m) + "_color", 3});
    }
  } else {
    for (int k = 0; k < f / 3; ++k) g.push_back({"sh_" + std::to_string(k + 1), 3});
  }
  return g;
}

/// Scalars of group `gi` for primitive i, in channel order (float storage).
inline float* group_slot(Scene<float>& s, std::size_t gi, std::size_t i) {
  const std::size_t f = static_cast<std::size_t>(s.layout.feature_dim());
  switch (gi) {
    case 0: return &s.opacity[i];
    case 1: return &s.rotation[4 * i];
    case 2: return &s.scale[3 * i];
    case 3: return &s.shape[i];
    case 4: return &s.base_color[3 * i];
    default: return &s.features[f * i + 3 * (gi - 5)];
  }
}

inline std::string layout_name(const AppearanceLayout& l) {
  return l.model == AppearanceModel::spherical_beta ? "spherical_beta" : "spherical_harmonics";
}

inline AppearanceLayout layout_from_manifest(const nlohmann::json& j) {
  const std::string model = j.at("model").get<std::string>();
  const int degree = j.at("degree").get<int>();
  if (model == "spherical_beta") return AppearanceLayout::spherical_beta(degree);
  if (model == "spherical_harmonics") return AppearanceLayout::spherical_harmonics(degree);
  throw FormatError("archive manifest: unknown appearance model '" + model + "'");
}

}  // namespace detail

/// Quaternion scaled so its largest-magnitude component is exactly +-1.
/// Idempotent on dequantized data, which keeps repacking byte-stable.
inline void normalize_quaternion_linf(float* q) {
  float m = 0.0f;
  for (int k = 0; k < 4; ++k) m = std::max(m, std::abs(q[k]));
  if (!(m > 0.0f) || !std::isfinite(m)) throw DomainError("compression: degenerate quaternion");
  if (m == 1.0f) return;
  for (int k = 0; k < 4; ++k) q[k] /= m;
}

inline CompressedArchive pack(const Scene<float>& input, const PackOptions& opt = {}) {
  input.validate();
  Scene<float> s = opt.sort ? permute(input, sort_primitives(input)) : input;
  const std::size_t n = s.size();
  for (std::size_t i = 0; i < n; ++i) normalize_quaternion_linf(&s.rotation[4 * i]);
  const GridDims grid = grid_for(n);
  const std::size_t cells = static_cast<std::size_t>(grid.rows) * static_cast<std::size_t>(grid.cols);
  // Padding cells repeat the last primitive.
  auto source = [&](std::size_t cell) { return std::min(cell, n == 0 ? 0 : n - 1); };

  CompressedArchive a;
  nlohmann::json& m = a.manifest;
  m["format"] = "dbs_archive";
  m["version"] = kArchiveVersion;
  m["count"] = n;
  m["appearance"] = {{"model", detail::layout_name(s.layout)},
                     {"degree", s.layout.model == AppearanceModel::spherical_beta ? s.layout.lobes : s.layout.sh_degree}};
  m["grid"] = {{"rows", grid.rows}, {"cols", grid.cols}, {"order", "row_major"}};
  m["sorted"] = opt.sort ? "morton" : "none";
  m["permutation"] = "discarded";
  m["bits"] = 8;

  const auto groups = detail::archive_groups(s.layout);
  m["groups"] = nlohmann::json::array();
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const int ch = groups[gi].channels;
    PngImage img(grid.cols, grid.rows, ch, 8);
    nlohmann::json mins = nlohmann::json::array(), maxs = nlohmann::json::array();
    for (int c = 0; c < ch; ++c) {
      std::vector<double> vals(n);
      for (std::size_t i = 0; i < n; ++i) vals[i] = detail::group_slot(s, gi, i)[c];
      const Quantized q = quantize_attribute(vals, 8);
      mins.push_back(q.min);
      maxs.push_back(q.max);
      for (std::size_t cell = 0; cell < cells; ++cell) {
        img.samples[cell * ch + c] = n == 0 ? 0 : q.codes[source(cell)];
      }
    }
    const std::string file = groups[gi].name + ".png";
    a.files[file] = encode_png(img, opt.png_level);
    m["groups"].push_back({{"name", groups[gi].name}, {"file", file}, {"channels", ch}, {"min", mins}, {"max", maxs}});
  }

  m["position_planes"] = nlohmann::json::array();
  for (int b = 0; b < 4; ++b) {
    PngImage img(grid.cols, grid.rows, 3, 8);
    for (std::size_t cell = 0; cell < cells; ++cell) {
      for (int k = 0; k < 3; ++k) {
        const float v = n == 0 ? 0.0f : s.position[3 * source(cell) + k];
        img.samples[cell * 3 + k] = static_cast<std::uint16_t>((std::bit_cast<std::uint32_t>(v) >> (8 * b)) & 0xffu);
      }
    }
    const std::string file = "position_byte" + std::to_string(b) + ".png";
    a.files[file] = encode_png(img, opt.png_level);
    m["position_planes"].push_back(file);
  }
  m["position_byte_order"] = "little";
  return a;
}

inline Scene<float> unpack(const CompressedArchive& a) {
  const nlohmann::json& m = a.manifest;
  auto fail = [](const std::string& what) -> FormatError { return FormatError("archive manifest: " + what); };
  try {
    if (m.value("format", std::string()) != "dbs_archive") throw fail("not a dbs_archive manifest");
    if (m.at("version").get<int>() != kArchiveVersion) {
      throw fail("unsupported version " + std::to_string(m.at("version").get<int>()));
    }
    const std::size_t n = m.at("count").get<std::size_t>();
    const AppearanceLayout layout = detail::layout_from_manifest(m.at("appearance"));
    const GridDims grid{m.at("grid").at("rows").get<int>(), m.at("grid").at("cols").get<int>()};
    if (grid.rows <= 0 || grid.cols <= 0 ||
        static_cast<std::size_t>(grid.rows) * static_cast<std::size_t>(grid.cols) < std::max<std::size_t>(n, 1)) {
      throw fail("grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + " cannot hold " +
                 std::to_string(n) + " primitives");
    }
    const int bits = m.at("bits").get<int>();
    if (bits != 8) throw fail("unsupported bit depth " + std::to_string(bits));

    auto load = [&](const std::string& file, int channels) {
      const auto it = a.files.find(file);
      if (it == a.files.end()) throw fail("missing image '" + file + "'");
      PngImage img;
      try {
        img = decode_png(it->second);
      } catch (const FormatError& e) {
        throw fail("image '" + file + "': " + e.what());
      }
      if (img.width != grid.cols || img.height != grid.rows || img.channels != channels || img.bit_depth != 8) {
        throw fail("image '" + file + "' is " + std::to_string(img.width) + "x" + std::to_string(img.height) + "x" +
                   std::to_string(img.channels) + ", expected " + std::to_string(grid.cols) + "x" +
                   std::to_string(grid.rows) + "x" + std::to_string(channels));
      }
      return img;
    };

    Scene<float> s(layout, n);
    const auto groups = detail::archive_groups(layout);
    const auto& mg = m.at("groups");
    if (mg.size() != groups.size()) {
      throw fail(std::to_string(mg.size()) + " attribute groups, layout needs " + std::to_string(groups.size()));
    }
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& g = mg[gi];
      const int ch = groups[gi].channels;
      if (g.at("name").get<std::string>() != groups[gi].name || g.at("channels").get<int>() != ch ||
          g.at("min").size() != static_cast<std::size_t>(ch) || g.at("max").size() != static_cast<std::size_t>(ch)) {
        throw fail("group " + std::to_string(gi) + " does not match '" + groups[gi].name + "'");
      }
      const PngImage img = load(g.at("file").get<std::string>(), ch);
      for (int c = 0; c < ch; ++c) {
        const double lo = g.at("min")[c].get<double>(), hi = g.at("max")[c].get<double>();
        if (!(lo <= hi)) throw fail("group '" + groups[gi].name + "' has min > max");
        for (std::size_t i = 0; i < n; ++i) {
          detail::group_slot(s, gi, i)[c] = float(dequantize_code(img.samples[i * ch + c], lo, hi, 8));
        }
      }
    }
    const auto& planes = m.at("position_planes");
    if (planes.size() != 4) throw fail("expected 4 position planes");
    std::vector<std::uint32_t> bits_xyz(3 * n, 0u);
    for (int b = 0; b < 4; ++b) {
      const PngImage img = load(planes[static_cast<std::size_t>(b)].get<std::string>(), 3);
      for (std::size_t k = 0; k < 3 * n; ++k) bits_xyz[k] |= std::uint32_t(img.samples[k]) << (8 * b);
    }
    for (std::size_t k = 0; k < 3 * n; ++k) s.position[k] = std::bit_cast<float>(bits_xyz[k]);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  }
}

/// Raw checkpoint size for the same scene (compression ratio denominator).
inline std::size_t raw_checkpoint_size(const Scene<float>& s) { return checkpoint_bytes(s).size(); }

inline void write_archive(const std::string& dir, const CompressedArchive& a) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_text_file((fs::path(dir) / "manifest.json").string(), a.manifest_text());
  for (const auto& [name, bytes] : a.files) write_file_bytes((fs::path(dir) / name).string(), bytes);
}

inline CompressedArchive read_archive(const std::string& dir) {
  namespace fs = std::filesystem;
  CompressedArchive a;
  const std::string text = read_text_file((fs::path(dir) / "manifest.json").string());
  try {
    a.manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("archive manifest: ") + e.what());
  }
  std::vector<std::string> names;
  try {
    for (const auto& g : a.manifest.at("groups")) names.push_back(g.at("file").get<std::string>());
    for (const auto& p : a.manifest.at("position_planes")) names.push_back(p.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("archive manifest: ") + e.what());
  }
  for (const auto& name : names) {
    if (name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
      throw FormatError("archive manifest: invalid file name '" + name + "'");
    }
    const fs::path p = fs::path(dir) / name;
    if (!fs::exists(p)) throw FormatError("archive manifest: missing image '" + name + "'");
    a.files[name] = read_file_bytes(p.string());
  }
  return a;
}

}  // namespace dbs
