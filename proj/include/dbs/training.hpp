#pragma once

// Photometric loss with opacity and scale regularizers, covariance-shaped
// positional noise, and the optimization loop with relocation densification.

#include "dbs/dataset.hpp"
#include "dbs/mcmc.hpp"
#include "dbs/metrics.hpp"
#include "dbs/optimizer.hpp"
#include "dbs/rasterizer.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace dbs {

enum class TrainMode { fixed, full };

struct TrainConfig {
  TrainMode mode = TrainMode::fixed;
  std::int64_t steps = 30000;
  /// Full mode: stop once validation PSNR has not improved for this many steps.
  std::int64_t patience = 10000;
  /// Full mode hard cap.
  std::int64_t max_steps = 100000;
  std::int64_t eval_every = 1000;

  double lambda_ssim = 0.2;
  double lambda_opacity = 0.01;
  double lambda_scale = 0.01;
  double lambda_noise = 1.0;
  double noise_lr = 5e4;

  double lr_position_init = 1.6e-4;
  double lr_position_final = 1.6e-6;
  double lr_position_delay_mult = 0.01;
  std::int64_t lr_position_delay_steps = 0;
  std::int64_t lr_position_max_steps = 30000;
  /// Multiplies the position rates (scene extent).
  double lr_position_scale = 1.0;
  double lr_color = 2.5e-3;
  double lr_lobe = 2.5e-3;
  double lr_opacity = 5e-2;
  double lr_shape = 1e-3;
  double lr_scale = 5e-3;
  double lr_rotation = 1e-3;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-15;

  std::int64_t densify_every = 100;
  std::int64_t densify_from = 500;
  std::int64_t densify_until = 25000;
  std::size_t max_primitives = 1000000;
  double dead_threshold = kDeadThreshold;
  double growth_rate = kGrowthRate;

  std::uint64_t seed = 0;
  int threads = 0;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(lr_position_init, "lr_position_init");
    positive(lr_position_final, "lr_position_final");
    positive(lr_position_scale, "lr_position_scale");
    positive(lr_color, "lr_color");
    positive(lr_lobe, "lr_lobe");
    positive(lr_opacity, "lr_opacity");
    positive(lr_shape, "lr_shape");
    positive(lr_scale, "lr_scale");
    positive(lr_rotation, "lr_rotation");
    positive(adam_eps, "adam_eps");
    if (!(lr_position_delay_mult > 0.0 && lr_position_delay_mult <= 1.0)) {
      throw ConfigError("lr_position_delay_mult must lie in (0, 1]");
    }
    if (!(densify_from < densify_until)) throw ConfigError("densify_from must be less than densify_until");
    if (densify_every <= 0) throw ConfigError("densify_every must be positive");
    if (steps < 0) throw ConfigError("steps must be non-negative");
    if (eval_every <= 0) throw ConfigError("eval_every must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (lambda_ssim < 0.0 || lambda_ssim > 1.0) throw ConfigError("lambda_ssim must lie in [0, 1]");
    if (lambda_opacity < 0.0 || lambda_scale < 0.0 || lambda_noise < 0.0 || noise_lr < 0.0) {
      throw ConfigError("regularizer and noise weights must be non-negative");
    }
    if (!(dead_threshold > 0.0 && dead_threshold < 1.0)) throw ConfigError("dead_threshold must lie in (0, 1)");
    if (!(growth_rate >= 0.0)) throw ConfigError("growth_rate must be non-negative");
  }

  ExponentialSchedule position_schedule() const {
    return {lr_position_init * lr_position_scale, lr_position_final * lr_position_scale, lr_position_delay_mult,
            lr_position_delay_steps, lr_position_max_steps};
  }

  GroupRates rates(std::int64_t step) const {
    GroupRates r{};
    rate_of(r, Group::position) = position_schedule()(step);
    rate_of(r, Group::opacity) = lr_opacity;
    rate_of(r, Group::rotation) = lr_rotation;
    rate_of(r, Group::scale) = lr_scale;
    rate_of(r, Group::shape) = lr_shape;
    rate_of(r, Group::base_color) = lr_color;
    rate_of(r, Group::features) = lr_lobe;
    return r;
  }

  AdamParams adam() const { return {adam_beta1, adam_beta2, adam_eps}; }
};

template <class T> struct LossResult {
  double total = 0.0;
  double l1 = 0.0;
  /// 1 - SSIM.
  double ssim_term = 0.0;
  double reg_opacity = 0.0;
  double reg_scale = 0.0;
  /// dL/d(rendered image).
  Image<T> d_image;
};

/// (1 - l_ssim) L1 + l_ssim (1 - SSIM) + l_o mean_i(o_i) + l_s mean_i(sum_j s_ij).
template <class T>
LossResult<T> loss(const Image<T>& rendered, const Image<T>& target, const Scene<T>& scene, const TrainConfig& cfg) {
  if (!rendered.same_shape(target)) throw DomainError("loss: image dimensions differ");
  LossResult<T> r;
  const double n = double(rendered.data.size());
  r.d_image = Image<T>(rendered.width, rendered.height, rendered.channels);
  double l1 = 0.0;
  const double w1 = (1.0 - cfg.lambda_ssim) / n;
  for (std::size_t k = 0; k < rendered.data.size(); ++k) {
    const double d = double(rendered.data[k]) - double(target.data[k]);
    l1 += std::abs(d);
    r.d_image.data[k] = T(d > 0.0 ? w1 : (d < 0.0 ? -w1 : 0.0));
  }
  r.l1 = l1 / n;
  if (cfg.lambda_ssim > 0.0) {
    const auto s = ssim(rendered, target, true);
    r.ssim_term = 1.0 - s.value;
    for (std::size_t k = 0; k < rendered.data.size(); ++k) {
      r.d_image.data[k] = T(double(r.d_image.data[k]) - cfg.lambda_ssim * s.grad.data[k]);
    }
  } else {
    r.ssim_term = 1.0 - ssim_value(rendered, target);
  }
  if (!scene.empty()) {
    double so = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
      so += double(scene.opacity_of(i));
      const Vec3<T> s = scene.scale_of(i);
      ss += double(s[0]) + double(s[1]) + double(s[2]);
    }
    r.reg_opacity = cfg.lambda_opacity * so / double(scene.size());
    r.reg_scale = cfg.lambda_scale * ss / double(scene.size());
  }
  r.total = (1.0 - cfg.lambda_ssim) * r.l1 + cfg.lambda_ssim * r.ssim_term + r.reg_opacity + r.reg_scale;
  return r;
}

/// Adds the regularizer gradients (w.r.t. the stored logit and log-scale) to `grad`.
template <class T> void add_regularizer_gradient(const Scene<T>& scene, const TrainConfig& cfg, Scene<T>& grad) {
  if (scene.empty()) return;
  const double inv_n = 1.0 / double(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const double o = double(scene.opacity_of(i));
    grad.opacity[i] += T(cfg.lambda_opacity * inv_n * o * (1.0 - o));
    for (int j = 0; j < 3; ++j) {
      grad.scale[3 * i + j] += T(cfg.lambda_scale * inv_n * std::exp(double(scene.scale[3 * i + j])));
    }
  }
}

/// Shape of the noise fall-off in opacity: B(o; ln 25) = (1 - o)^100.
inline const double kNoiseShape = std::log(25.0);

inline double noise_gate(double opacity) { return beta_eval(std::clamp(opacity, 0.0, 1.0), kNoiseShape); }

/// mu += lambda_noise * noise_lr * lr_mu * B(o; ln 25) * Sigma eta, eta ~ N(0, I).
/// Every primitive draws its three normals, whatever its opacity.
template <class T> void inject_noise(Scene<T>& scene, const TrainConfig& cfg, double lr_position, Rng& rng) {
  const double base = cfg.lambda_noise * cfg.noise_lr * lr_position;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Vec3<double> eta(rng.normal(), rng.normal(), rng.normal());
    const double gate = noise_gate(double(scene.opacity_of(i)));
    if (gate == 0.0 || base == 0.0) continue;
    const Mat3<double> sigma = scene.covariance_of(i).template cast<double>();
    const Vec3<double> d = base * gate * (sigma * eta);
    for (int k = 0; k < 3; ++k) scene.position[3 * i + k] = T(double(scene.position[3 * i + k]) + d[k]);
  }
}

struct TrainLogRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double l1 = 0.0;
  double ssim_term = 0.0;
  double mean_opacity = 0.0;
  std::size_t primitives = 0;
  /// NaN when no evaluation ran at this step.
  double psnr = std::numeric_limits<double>::quiet_NaN();
};

inline void write_metrics_csv(std::ostream& os, const std::vector<TrainLogRow>& rows) {
  os << "step,loss,l1,ssim_term,mean_opacity,primitives,psnr\n";
  for (const auto& r : rows) {
    os << r.step << ',' << r.loss << ',' << r.l1 << ',' << r.ssim_term << ',' << r.mean_opacity << ','
       << r.primitives << ',';
    if (!std::isnan(r.psnr)) os << r.psnr;
    os << '\n';
  }
}

template <class T> struct TrainResult {
  Scene<T> scene;
  std::vector<TrainLogRow> log;
  std::int64_t steps_run = 0;
  double best_psnr = -std::numeric_limits<double>::infinity();
  std::int64_t best_step = 0;
};

template <class T> double mean_opacity(const Scene<T>& scene) {
  if (scene.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < scene.size(); ++i) s += double(scene.opacity_of(i));
  return s / double(scene.size());
}

/// Mean PSNR of the scene rendered at the given views.
template <class T>
double mean_psnr(const Scene<T>& scene, const Dataset& data, const std::vector<std::size_t>& views, int threads) {
  if (views.empty()) return std::numeric_limits<double>::quiet_NaN();
  RenderOptions opt;
  opt.background = data.background;
  opt.threads = threads;
  double acc = 0.0;
  for (std::size_t v : views) {
    const auto& view = data.views[v];
    const auto r = render_tiled(scene.template cast<float>(), view.camera, opt);
    acc += psnr(r.color, view.image);
  }
  return acc / double(views.size());
}

/// Called after every step with the log row; returning false stops training.
/// A callback may also take the current scene as a second argument.
using TrainCallback = std::function<bool(const TrainLogRow&)>;

/// Optimizes `init` against the training views.
template <class T, class Callback = TrainCallback>
TrainResult<T> train(const Dataset& data, Scene<T> init, const TrainConfig& cfg, Rng& rng,
                     const Callback& callback = {}) {
  cfg.validate();
  data.validate();
  const auto train_views = data.train_indices();
  if (train_views.empty()) throw DomainError("train: dataset has no training views");
  init.validate();

  TrainResult<T> res;
  res.scene = std::move(init);
  Scene<T>& scene = res.scene;
  AdamState<T> state(scene);
  const AdamParams hp = cfg.adam();
  RenderOptions opt;
  opt.background = data.background;
  opt.threads = cfg.threads;

  std::vector<Camera<T>> cameras;
  std::vector<Image<T>> targets;
  for (const auto& v : data.views) {
    cameras.push_back(v.camera.template cast<T>());
    targets.push_back(v.image.template cast<T>());
  }

  const std::int64_t limit = cfg.mode == TrainMode::full ? cfg.max_steps : cfg.steps;
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  for (std::int64_t step = 1; step <= limit; ++step) {
    if (cursor == order.size()) {
      // New epoch: Fisher-Yates shuffle of the training views.
      order = train_views;
      for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
      cursor = 0;
    }
    const std::size_t v = order[cursor++];
    if (scene.empty()) throw DivergenceError("train: scene has no primitives");

    const auto out = render_tiled(scene, cameras[v], opt);
    const auto l = loss(out.color, targets[v], scene, cfg);
    if (!std::isfinite(l.total)) throw DivergenceError("train: loss is not finite at step " + std::to_string(step));
    auto g = render_backward(scene, cameras[v], opt, l.d_image);
    add_regularizer_gradient(scene, cfg, g.grad);
    const GroupRates rates = cfg.rates(step - 1);
    adam_step(scene, g.grad, state, rates, hp);
    inject_noise(scene, cfg, rate_of(rates, Group::position), rng);

    if (step % cfg.densify_every == 0 && step >= cfg.densify_from && step <= cfg.densify_until) {
      const auto plan = plan_relocation(scene, find_dead(scene, cfg.dead_threshold), rng);
      apply_relocation(scene, plan, &state);
      grow(scene, cfg.max_primitives, rng, &state, cfg.growth_rate, cfg.dead_threshold);
    }

    TrainLogRow row;
    row.step = step;
    row.loss = l.total;
    row.l1 = l.l1;
    row.ssim_term = l.ssim_term;
    row.mean_opacity = mean_opacity(scene);
    row.primitives = scene.size();
    const bool eval_now = step % cfg.eval_every == 0 || step == limit;
    if (eval_now) {
      // Validation reuses the training views.
      row.psnr = mean_psnr(scene, data, train_views, cfg.threads);
      if (row.psnr > res.best_psnr) {
        res.best_psnr = row.psnr;
        res.best_step = step;
      }
    }
    res.log.push_back(row);
    res.steps_run = step;
    bool keep_going = true;
    if constexpr (std::is_invocable_v<const Callback&, const TrainLogRow&, const Scene<T>&>) {
      keep_going = callback(row, scene);
    } else if constexpr (std::is_constructible_v<bool, const Callback&>) {
      keep_going = !callback || callback(row);
    } else {
      keep_going = callback(row);
    }
    if (!keep_going) break;
    if (cfg.mode == TrainMode::full && eval_now && step - res.best_step >= cfg.patience) break;
  }
  return res;
}

}  // namespace dbs
