#pragma once

// Flat key = value run configuration: training hyperparameters plus the
// appearance model and initialization choices of a training run.

#include "dbs/appearance.hpp"
#include "dbs/dataset.hpp"
#include "dbs/init.hpp"
#include "dbs/training.hpp"

#include <charconv>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace dbs {

enum class InitMode { automatic, points, random };

struct RunConfig {
  TrainConfig train;
  std::string appearance = "spherical_beta";
  int lobes = 2;
  int sh_degree = 3;
  InitMode init = InitMode::automatic;
  /// Random init: primitive count and half-width of the cube around the origin
  /// (0 derives it from the camera positions).
  std::int64_t init_count = 100000;
  double init_extent = 0.0;
  /// Multiplies lr_position_scale; 0 derives it from the cameras.
  double scene_extent = 0.0;

  AppearanceLayout layout() const {
    return appearance == "spherical_harmonics" ? AppearanceLayout::spherical_harmonics(sh_degree)
                                               : AppearanceLayout::spherical_beta(lobes);
  }

  void validate() const {
    train.validate();
    if (appearance != "spherical_beta" && appearance != "spherical_harmonics") {
      throw ConfigError("appearance must be spherical_beta or spherical_harmonics");
    }
    if (lobes < 0 || lobes > 16) throw ConfigError("lobes must lie in [0, 16]");
    if (sh_degree < 0 || sh_degree > 3) throw ConfigError("sh_degree must lie in [0, 3]");
    if (init_count < 1) throw ConfigError("init_count must be positive");
    if (init_extent < 0.0) throw ConfigError("init_extent must be non-negative");
    if (scene_extent < 0.0) throw ConfigError("scene_extent must be non-negative");
  }
};

namespace detail {

struct ConfigKey {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class V> V parse_value(const std::string& key, const std::string& text) {
  V v{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ConfigError("invalid value '" + text + "' for key '" + key + "'");
  return v;
}

template <class V> std::string format_value(V v) {
  if constexpr (std::is_floating_point_v<V>) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
  } else {
    return std::to_string(v);
  }
}

template <class V> ConfigKey train_key(const std::string& name, V TrainConfig::*member) {
  return {name, [name, member](RunConfig& c, const std::string& t) { c.train.*member = parse_value<V>(name, t); },
          [member](const RunConfig& c) { return format_value(c.train.*member); }};
}

template <class V> ConfigKey run_key(const std::string& name, V RunConfig::*member) {
  return {name, [name, member](RunConfig& c, const std::string& t) { c.*member = parse_value<V>(name, t); },
          [member](const RunConfig& c) { return format_value(c.*member); }};
}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back({"mode",
                 [](RunConfig& c, const std::string& t) {
                   if (t == "30k" || t == "fixed") {
                     c.train.mode = TrainMode::fixed;
                   } else if (t == "full") {
                     c.train.mode = TrainMode::full;
                   } else {
                     throw ConfigError("invalid value '" + t + "' for key 'mode' (expected 30k or full)");
                   }
                 },
                 [](const RunConfig& c) { return std::string(c.train.mode == TrainMode::full ? "full" : "30k"); }});
    k.push_back(train_key("steps", &TrainConfig::steps));
    k.push_back(train_key("patience", &TrainConfig::patience));
    k.push_back(train_key("max_steps", &TrainConfig::max_steps));
    k.push_back(train_key("eval_every", &TrainConfig::eval_every));
    k.push_back(train_key("lambda_ssim", &TrainConfig::lambda_ssim));
    k.push_back(train_key("lambda_opacity", &TrainConfig::lambda_opacity));
    k.push_back(train_key("lambda_scale", &TrainConfig::lambda_scale));
    k.push_back(train_key("lambda_noise", &TrainConfig::lambda_noise));
    k.push_back(train_key("noise_lr", &TrainConfig::noise_lr));
    k.push_back(train_key("lr_position_init", &TrainConfig::lr_position_init));
    k.push_back(train_key("lr_position_final", &TrainConfig::lr_position_final));
    k.push_back(train_key("lr_position_delay_mult", &TrainConfig::lr_position_delay_mult));
    k.push_back(train_key("lr_position_delay_steps", &TrainConfig::lr_position_delay_steps));
    k.push_back(train_key("lr_position_max_steps", &TrainConfig::lr_position_max_steps));
    k.push_back(train_key("lr_position_scale", &TrainConfig::lr_position_scale));
    k.push_back(train_key("lr_color", &TrainConfig::lr_color));
    k.push_back(train_key("lr_lobe", &TrainConfig::lr_lobe));
    k.push_back(train_key("lr_opacity", &TrainConfig::lr_opacity));
    k.push_back(train_key("lr_shape", &TrainConfig::lr_shape));
    k.push_back(train_key("lr_scale", &TrainConfig::lr_scale));
    k.push_back(train_key("lr_rotation", &TrainConfig::lr_rotation));
    k.push_back(train_key("adam_beta1", &TrainConfig::adam_beta1));
    k.push_back(train_key("adam_beta2", &TrainConfig::adam_beta2));
    k.push_back(train_key("adam_eps", &TrainConfig::adam_eps));
    k.push_back(train_key("densify_every", &TrainConfig::densify_every));
    k.push_back(train_key("densify_from", &TrainConfig::densify_from));
    k.push_back(train_key("densify_until", &TrainConfig::densify_until));
    k.push_back(train_key("max_primitives", &TrainConfig::max_primitives));
    k.push_back(train_key("dead_threshold", &TrainConfig::dead_threshold));
    k.push_back(train_key("growth_rate", &TrainConfig::growth_rate));
    k.push_back(train_key("seed", &TrainConfig::seed));
    k.push_back(train_key("threads", &TrainConfig::threads));
    k.push_back({"appearance", [](RunConfig& c, const std::string& t) { c.appearance = t; },
                 [](const RunConfig& c) { return c.appearance; }});
    k.push_back(run_key("lobes", &RunConfig::lobes));
    k.push_back(run_key("sh_degree", &RunConfig::sh_degree));
    k.push_back({"init",
                 [](RunConfig& c, const std::string& t) {
                   if (t == "auto") {
                     c.init = InitMode::automatic;
                   } else if (t == "points") {
                     c.init = InitMode::points;
                   } else if (t == "random") {
                     c.init = InitMode::random;
                   } else {
                     throw ConfigError("invalid value '" + t + "' for key 'init' (expected auto, points or random)");
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(c.init == InitMode::points ? "points"
                                      : c.init == InitMode::random ? "random"
                                                                   : "auto");
                 }});
    k.push_back(run_key("init_count", &RunConfig::init_count));
    k.push_back(run_key("init_extent", &RunConfig::init_extent));
    k.push_back(run_key("scene_extent", &RunConfig::scene_extent));
    return k;
  }();
  return keys;
}

}  // namespace detail

inline std::vector<std::string> config_key_names() {
  std::vector<std::string> out;
  for (const auto& k : detail::config_keys()) out.push_back(k.name);
  return out;
}

/// Sets one key; unknown keys raise ConfigError listing every valid key.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : detail::config_keys()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  std::string msg = "unknown config key '" + key + "'; valid keys:";
  for (const auto& k : detail::config_keys()) msg += " " + k.name;
  throw ConfigError(msg);
}

/// Applies a "key=value" override.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set_config_value(cfg, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

/// Parses a key = value document ('#' starts a comment) on top of `base`.
inline RunConfig parse_config(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    try {
      apply_override(base, line);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

inline std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : detail::config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

/// 1.1 x the largest camera distance from the mean camera center.
inline double camera_extent(const Dataset& data) {
  if (data.views.empty()) return 1.0;
  Vec3<double> mean = Vec3<double>::Zero();
  for (const auto& v : data.views) mean += v.camera.center().cast<double>();
  mean /= double(data.views.size());
  double r = 0.0;
  for (const auto& v : data.views) r = std::max(r, (v.camera.center().cast<double>() - mean).norm());
  return r > 0.0 ? 1.1 * r : 1.0;
}

/// Training hyperparameters with the position rates scaled to the scene.
inline TrainConfig resolve_train_config(const RunConfig& cfg, const Dataset& data) {
  TrainConfig t = cfg.train;
  t.lr_position_scale *= cfg.scene_extent > 0.0 ? cfg.scene_extent : camera_extent(data);
  return t;
}

/// SfM points when available (and not overridden), otherwise a random cube of
/// half-width init_extent, by default 0.3 x the mean camera distance to the origin.
inline Scene<float> initial_scene(const RunConfig& cfg, const Dataset& data, Rng& rng) {
  const AppearanceLayout layout = cfg.layout();
  const bool use_points = cfg.init == InitMode::points || (cfg.init == InitMode::automatic && data.points.size() >= 4);
  if (use_points) {
    if (data.points.size() < 4) throw ConfigError("init = points but the dataset has fewer than 4 SfM points");
    return init_from_points<float>(data.points, layout);
  }
  double half = cfg.init_extent;
  if (half == 0.0) {
    double d = 0.0;
    for (const auto& v : data.views) d += v.camera.center().cast<double>().norm();
    half = data.views.empty() ? 1.0 : 0.3 * d / double(data.views.size());
    if (!(half > 0.0)) half = 1.0;
  }
  return init_random<float>(static_cast<std::size_t>(cfg.init_count), Vec3<double>::Constant(-half),
                            Vec3<double>::Constant(half), layout, rng);
}

}  // namespace dbs
