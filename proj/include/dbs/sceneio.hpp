#pragma once

// Dataset loading (NeRF-style transforms documents, COLMAP text and PLY point
// clouds) and checkpoint persistence as binary PLY.

#include "dbs/dataset.hpp"
#include "dbs/init.hpp"
#include "dbs/ply.hpp"
#include "dbs/png.hpp"
#include "dbs/scene.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dbs {

inline constexpr int kCheckpointVersion = 1;

// ---------------------------------------------------------------------------
// Checkpoints

/// Vertex property names of a checkpoint, in file order.
inline std::vector<std::string> checkpoint_properties(const AppearanceLayout& layout) {
  std::vector<std::string> n = {"x", "y", "z", "opacity", "rot_0", "rot_1", "rot_2", "rot_3",
                                "scale_0", "scale_1", "scale_2", "shape", "f_dc_0", "f_dc_1", "f_dc_2"};
  if (layout.model == AppearanceModel::spherical_beta) {
    static const char* slots[kLobeParams] = {"theta", "phi", "sharpness", "r", "g", "b"};
    for (int m = 0; m < layout.lobes; ++m) {
      for (const char* s : slots) n.push_back("lobe_" + std::to_string(m) + "_" + s);
    }
  } else {
    for (int k = 0; k < layout.feature_dim(); ++k) n.push_back("f_rest_" + std::to_string(k));
  }
  return n;
}

inline std::string layout_comment(const AppearanceLayout& layout) {
  return layout.model == AppearanceModel::spherical_beta ? "appearance spherical_beta " + std::to_string(layout.lobes)
                                                         : "appearance spherical_harmonics " +
                                                               std::to_string(layout.sh_degree);
}

/// Checkpoint bytes: binary little-endian PLY, float32 stored parameters.
inline std::string checkpoint_bytes(const Scene<float>& scene) {
  scene.validate();
  const auto names = checkpoint_properties(scene.layout);
  const std::size_t n = scene.size();
  const std::size_t f = static_cast<std::size_t>(scene.layout.feature_dim());
  std::vector<float> rows;
  rows.reserve(n * names.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) rows.push_back(scene.position[3 * i + k]);
    rows.push_back(scene.opacity[i]);
    for (int k = 0; k < 4; ++k) rows.push_back(scene.rotation[4 * i + k]);
    for (int k = 0; k < 3; ++k) rows.push_back(scene.scale[3 * i + k]);
    rows.push_back(scene.shape[i]);
    for (int k = 0; k < 3; ++k) rows.push_back(scene.base_color[3 * i + k]);
    for (std::size_t k = 0; k < f; ++k) rows.push_back(scene.features[f * i + k]);
  }
  return format_ply_float({"dbs_checkpoint version " + std::to_string(kCheckpointVersion), layout_comment(scene.layout)},
                          names, n, rows);
}

inline Scene<float> parse_checkpoint(const std::string& bytes) {
  const PlyVertexTable t = parse_ply(bytes);
  int version = -1;
  bool have_layout = false;
  AppearanceLayout layout;
  for (const auto& c : t.comments) {
    std::istringstream ls(c);
    std::string a, b;
    ls >> a >> b;
    if (a == "dbs_checkpoint" && b == "version") {
      ls >> version;
    } else if (a == "appearance") {
      int v = -1;
      ls >> v;
      if (!ls) throw FormatError("checkpoint: malformed appearance comment");
      if (b == "spherical_beta") {
        layout = AppearanceLayout::spherical_beta(v);
      } else if (b == "spherical_harmonics") {
        layout = AppearanceLayout::spherical_harmonics(v);
      } else {
        throw FormatError("checkpoint: unknown appearance model '" + b + "'");
      }
      have_layout = true;
    }
  }
  if (version < 0) throw FormatError("checkpoint: missing dbs_checkpoint version comment");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  if (!have_layout) throw FormatError("checkpoint: missing appearance comment");
  const auto names = checkpoint_properties(layout);
  if (t.properties.size() != names.size()) {
    throw FormatError("checkpoint: header declares " + layout_comment(layout) + " (" + std::to_string(names.size()) +
                      " properties) but the vertex element has " + std::to_string(t.properties.size()));
  }
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (t.properties[k].name != names[k] || t.properties[k].type != PlyType::f32) {
      throw FormatError("checkpoint: property " + std::to_string(k) + " should be float '" + names[k] + "', found '" +
                        t.properties[k].name + "'");
    }
  }
  Scene<float> s(layout, t.count);
  const std::size_t f = static_cast<std::size_t>(layout.feature_dim());
  for (std::size_t i = 0; i < t.count; ++i) {
    int c = 0;
    auto next = [&]() { return static_cast<float>(t.at(i, c++)); };
    for (int k = 0; k < 3; ++k) s.position[3 * i + k] = next();
    s.opacity[i] = next();
    for (int k = 0; k < 4; ++k) s.rotation[4 * i + k] = next();
    for (int k = 0; k < 3; ++k) s.scale[3 * i + k] = next();
    s.shape[i] = next();
    for (int k = 0; k < 3; ++k) s.base_color[3 * i + k] = next();
    for (std::size_t k = 0; k < f; ++k) s.features[f * i + k] = next();
  }
  return s;
}

inline void save_checkpoint(const std::string& path, const Scene<float>& scene) {
  write_text_file(path, checkpoint_bytes(scene));
}

inline Scene<float> load_checkpoint(const std::string& path) {
  try {
    return parse_checkpoint(read_text_file(path));
  } catch (const ParseError& e) {
    throw FormatError("'" + path + "': " + e.what());
  } catch (const FormatError& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// SfM points

/// COLMAP points3D.txt: POINT3D_ID X Y Z R G B ERROR TRACK[]; '#' lines are comments.
inline std::vector<SfmPoint> parse_colmap_points(const std::string& text) {
  std::vector<SfmPoint> pts;
  std::istringstream in(text);
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    const std::size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream ls(line);
    long long id;
    double x, y, z, err;
    int r, g, b;
    if (!(ls >> id >> x >> y >> z >> r >> g >> b >> err)) {
      throw ParseError("colmap points: record " + std::to_string(record) + " is truncated or malformed");
    }
    if (r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) {
      throw ParseError("colmap points: record " + std::to_string(record) + " has a color outside [0, 255]");
    }
    SfmPoint p;
    p.position = Vec3<double>(x, y, z);
    p.color = Vec3<double>(r, g, b) / 255.0;
    pts.push_back(p);
    ++record;
  }
  return pts;
}

/// Point cloud from a PLY with x, y, z and optional red, green, blue
/// (integer colors are scaled by 1/255).
inline std::vector<SfmPoint> parse_ply_points(const std::string& bytes) {
  const PlyVertexTable t = parse_ply(bytes);
  const int cx = t.column("x"), cy = t.column("y"), cz = t.column("z");
  if (cx < 0 || cy < 0 || cz < 0) throw ParseError("ply points: missing x/y/z properties");
  const int cr = t.column("red"), cg = t.column("green"), cb = t.column("blue");
  const bool has_color = cr >= 0 && cg >= 0 && cb >= 0;
  const bool int_color = has_color && t.properties[static_cast<std::size_t>(cr)].type != PlyType::f32 &&
                         t.properties[static_cast<std::size_t>(cr)].type != PlyType::f64;
  std::vector<SfmPoint> pts(t.count);
  for (std::size_t i = 0; i < t.count; ++i) {
    pts[i].position = Vec3<double>(t.at(i, cx), t.at(i, cy), t.at(i, cz));
    if (has_color) {
      pts[i].color = Vec3<double>(t.at(i, cr), t.at(i, cg), t.at(i, cb));
      if (int_color) pts[i].color /= 255.0;
    } else {
      pts[i].color = Vec3<double>::Constant(0.5);
    }
  }
  return pts;
}

inline std::vector<SfmPoint> load_sfm_points(const std::string& path) {
  const std::string bytes = read_text_file(path);
  try {
    if (bytes.rfind("ply", 0) == 0) return parse_ply_points(bytes);
    return parse_colmap_points(bytes);
  } catch (const ParseError& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

inline std::string ply_points_bytes(const std::vector<SfmPoint>& pts) {
  std::vector<float> rows;
  for (const auto& p : pts) {
    for (int k = 0; k < 3; ++k) rows.push_back(float(p.position[k]));
    for (int k = 0; k < 3; ++k) rows.push_back(float(p.color[k]));
  }
  return format_ply_float({}, {"x", "y", "z", "red", "green", "blue"}, pts.size(), rows);
}

// ---------------------------------------------------------------------------
// Transforms documents

struct TransformsOptions {
  Vec3<double> background = Vec3<double>::Ones();
  /// When no frame carries a "split" key: every k-th frame is test (0 = none).
  int test_every = 8;
};

namespace detail {

inline Image<float> load_view_image(const std::filesystem::path& file, const Vec3<double>& bg) {
  const PngImage png = read_png(file.string());
  const Image<float> img = from_png<float>(png, PngTransfer::srgb);
  Image<float> rgb(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const bool gray = img.channels <= 2;
      const float a = (img.channels == 2 || img.channels == 4) ? img.at(x, y, img.channels - 1) : 1.0f;
      for (int c = 0; c < 3; ++c) {
        const float v = img.at(x, y, gray ? 0 : c);
        rgb.at(x, y, c) = v * a + float(bg[c]) * (1.0f - a);
      }
    }
  }
  return rgb;
}

}  // namespace detail

namespace detail {

struct FrameSpec {
  std::string name;
  std::filesystem::path file;
  Mat4<double> c2w;
  /// Horizontal field of view; ignored when fl_x is given.
  double fov = 0.0;
  std::optional<double> fl_x, fl_y, cx, cy;
  std::optional<int> w, h;
  std::optional<bool> test;

  Camera<float> camera(int width, int height) const {
    const double fx = fl_x ? *fl_x : 0.5 * width / std::tan(0.5 * fov);
    const double fy = fl_y ? *fl_y : fx;
    return Camera<float>::from_opengl_c2w(c2w, fx, fy, cx ? *cx : 0.5 * width, cy ? *cy : 0.5 * height, width, height);
  }
};

/// Frame-level key, falling back to the document level.
inline const nlohmann::json* lookup(const nlohmann::json& frame, const nlohmann::json& doc, const char* key) {
  if (const auto it = frame.find(key); it != frame.end()) return &*it;
  if (const auto it = doc.find(key); it != doc.end()) return &*it;
  return nullptr;
}

inline std::vector<FrameSpec> parse_frames(const std::string& text, const std::filesystem::path& base_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("transforms: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("transforms: top level must be an object");
  const auto frames = doc.find("frames");
  if (frames == doc.end() || !frames->is_array()) throw ParseError("transforms: missing 'frames' array");
  std::vector<FrameSpec> out;
  for (std::size_t k = 0; k < frames->size(); ++k) {
    const auto& fr = (*frames)[k];
    const std::string where = "transforms: frame " + std::to_string(k);
    if (!fr.is_object()) throw ParseError(where + ": must be an object");
    FrameSpec f;
    const auto fp = fr.find("file_path");
    if (fp == fr.end() || !fp->is_string()) throw ParseError(where + ": missing 'file_path'");
    f.name = fp->get<std::string>();
    f.file = base_dir / f.name;
    if (!f.file.has_extension()) f.file += ".png";
    const auto tm = fr.find("transform_matrix");
    if (tm == fr.end() || !tm->is_array() || tm->size() != 4) {
      throw ParseError(where + ": 'transform_matrix' must be a 4x4 array");
    }
    for (int r = 0; r < 4; ++r) {
      const auto& row = (*tm)[static_cast<std::size_t>(r)];
      if (!row.is_array() || row.size() != 4) throw ParseError(where + ": 'transform_matrix' must be a 4x4 array");
      for (int c = 0; c < 4; ++c) {
        if (!row[static_cast<std::size_t>(c)].is_number()) {
          throw ParseError(where + ": 'transform_matrix' entries must be numbers");
        }
        f.c2w(r, c) = row[static_cast<std::size_t>(c)].get<double>();
      }
    }
    auto number = [&](const char* key) -> std::optional<double> {
      const nlohmann::json* v = lookup(fr, doc, key);
      if (!v) return std::nullopt;
      if (!v->is_number()) throw ParseError(where + ": '" + key + "' must be a number");
      return v->get<double>();
    };
    f.fl_x = number("fl_x");
    f.fl_y = number("fl_y");
    f.cx = number("cx");
    f.cy = number("cy");
    if (const auto w = number("w")) f.w = static_cast<int>(*w);
    if (const auto h = number("h")) f.h = static_cast<int>(*h);
    if (f.fl_x) {
      if (!(*f.fl_x > 0.0)) throw ParseError(where + ": 'fl_x' must be positive");
    } else {
      const auto fov = number("camera_angle_x");
      if (!fov) throw ParseError(where + ": no 'camera_angle_x' in the frame or document");
      if (!(*fov > 0.0 && *fov < kPi)) throw ParseError(where + ": 'camera_angle_x' must lie in (0, pi)");
      f.fov = *fov;
    }
    if (fr.contains("split")) {
      const auto& sp = fr["split"];
      if (!sp.is_string() || (sp != "train" && sp != "test")) throw ParseError(where + ": 'split' must be train or test");
      f.test = sp == "test";
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace detail

/// Parses a transforms document (camera_angle_x or fl_x/fl_y/cx/cy,
/// frames[].file_path, frames[].transform_matrix) and loads the referenced
/// images relative to `base_dir`. Images are linearized and alpha is
/// composited over the background. A per-frame "split" key ("train" or
/// "test") overrides the every-k-th rule.
inline Dataset parse_transforms(const std::string& text, const std::filesystem::path& base_dir,
                                const TransformsOptions& opt = {}) {
  const auto frames = detail::parse_frames(text, base_dir);
  Dataset data;
  data.background = opt.background;
  bool any_split = false;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& f = frames[k];
    const std::string where = "transforms: frame " + std::to_string(k);
    if (!std::filesystem::exists(f.file)) throw IoError(where + ": image '" + f.file.string() + "' not found");
    View v;
    v.name = f.name;
    v.image = detail::load_view_image(f.file, opt.background);
    v.camera = f.camera(v.image.width, v.image.height);
    if (f.test) {
      any_split = true;
      v.test = *f.test;
    }
    data.views.push_back(std::move(v));
  }
  if (!any_split) data.tag_every_nth_as_test(opt.test_every);
  data.validate();
  return data;
}

/// Cameras of a transforms document without loading pixels. Image sizes come
/// from "w"/"h" when present, otherwise from the referenced PNG.
inline std::vector<std::pair<std::string, Camera<float>>> load_cameras(const std::string& path) {
  const std::filesystem::path p(path);
  std::vector<std::pair<std::string, Camera<float>>> out;
  for (const auto& f : detail::parse_frames(read_text_file(path), p.parent_path())) {
    int w = 0, h = 0;
    if (f.w && f.h) {
      w = *f.w;
      h = *f.h;
    } else {
      if (!std::filesystem::exists(f.file)) {
        throw IoError("transforms: frame '" + f.name + "' has no w/h and its image is missing");
      }
      const PngImage img = read_png(f.file.string());
      w = img.width;
      h = img.height;
    }
    out.emplace_back(f.name, f.camera(w, h));
  }
  return out;
}

inline Dataset load_transforms(const std::string& path, const TransformsOptions& opt = {}) {
  const std::filesystem::path p(path);
  return parse_transforms(read_text_file(path), p.parent_path(), opt);
}

/// Loads `dir/transforms.json`, or `transforms_train.json` plus
/// `transforms_test.json`, and `dir/points3D.txt` or `dir/points3D.ply` if present.
inline Dataset load_dataset(const std::string& dir, const TransformsOptions& opt = {}) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  Dataset data;
  if (fs::exists(d / "transforms.json")) {
    data = load_transforms((d / "transforms.json").string(), opt);
  } else if (fs::exists(d / "transforms_train.json")) {
    TransformsOptions no_split = opt;
    no_split.test_every = 0;
    data = load_transforms((d / "transforms_train.json").string(), no_split);
    for (auto& v : data.views) v.test = false;
    if (fs::exists(d / "transforms_test.json")) {
      Dataset test = load_transforms((d / "transforms_test.json").string(), no_split);
      for (auto& v : test.views) {
        v.test = true;
        data.views.push_back(std::move(v));
      }
    }
  } else {
    throw IoError("no transforms.json or transforms_train.json in '" + dir + "'");
  }
  for (const char* name : {"points3D.txt", "points3D.ply"}) {
    if (fs::exists(d / name)) {
      data.points = load_sfm_points((d / name).string());
      break;
    }
  }
  return data;
}

/// Writes `dir/transforms.json` (with per-frame split tags) and one 16-bit
/// sRGB PNG per view under `dir/images/`.
inline void save_dataset(const std::string& dir, const Dataset& data) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  nlohmann::json doc;
  doc["frames"] = nlohmann::json::array();
  for (std::size_t k = 0; k < data.views.size(); ++k) {
    const auto& v = data.views[k];
    const std::string rel = "images/" + v.name + ".png";
    write_png((fs::path(dir) / rel).string(), to_png(v.image, 16, PngTransfer::srgb));
    const Mat4<double> c2w = v.camera.template cast<double>().opengl_c2w();
    nlohmann::json m = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) m.push_back({c2w(r, 0), c2w(r, 1), c2w(r, 2), c2w(r, 3)});
    nlohmann::json fr;
    fr["file_path"] = rel;
    fr["transform_matrix"] = m;
    fr["camera_angle_x"] = 2.0 * std::atan(0.5 * v.camera.width / double(v.camera.fx));
    fr["w"] = v.camera.width;
    fr["h"] = v.camera.height;
    fr["split"] = v.test ? "test" : "train";
    doc["frames"].push_back(fr);
  }
  write_text_file((fs::path(dir) / "transforms.json").string(), doc.dump(2) + "\n");
  if (!data.points.empty()) write_text_file((fs::path(dir) / "points3D.ply").string(), ply_points_bytes(data.points));
}

}  // namespace dbs
