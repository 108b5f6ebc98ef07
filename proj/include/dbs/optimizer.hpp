#pragma once

// Adam over the parameter groups of a Scene, and the position learning-rate
// schedule.

#include "dbs/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace dbs {

/// Learning rate per parameter group, indexed by Group.
using GroupRates = std::array<double, kAllGroups.size()>;

inline double& rate_of(GroupRates& r, Group g) { return r[static_cast<std::size_t>(g)]; }
inline double rate_of(const GroupRates& r, Group g) { return r[static_cast<std::size_t>(g)]; }

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
};

/// First and second moments with the same shape as the scene.
template <class T> struct AdamState {
  Scene<T> m;
  Scene<T> v;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(const Scene<T>& like) : m(like.zeros_like()), v(like.zeros_like()) {}

  /// Follows the primitive count of the scene; new slots start at zero.
  void resize(std::size_t n) {
    m.resize(n);
    v.resize(n);
  }

  void zero_primitive(std::size_t i) {
    m.zero_primitive(i);
    v.zero_primitive(i);
  }

  void compact(const std::vector<bool>& keep) {
    m.compact(keep);
    v.compact(keep);
  }
};

/// Log-linear decay from lr_init to lr_final over max_steps, with an optional
/// sine warm-up ramp from delay_mult over delay_steps.
struct ExponentialSchedule {
  double lr_init = 1.6e-4;
  double lr_final = 1.6e-6;
  double delay_mult = 0.01;
  std::int64_t delay_steps = 0;
  std::int64_t max_steps = 30000;

  double operator()(std::int64_t step) const {
    if (step < 0 || (lr_init == 0.0 && lr_final == 0.0)) return 0.0;
    double delay = 1.0;
    if (delay_steps > 0) {
      const double u = std::clamp(double(step) / double(delay_steps), 0.0, 1.0);
      delay = delay_mult + (1.0 - delay_mult) * std::sin(0.5 * kPi * u);
    }
    const double t = max_steps > 0 ? std::clamp(double(step) / double(max_steps), 0.0, 1.0) : 1.0;
    return delay * std::exp(std::log(lr_init) * (1.0 - t) + std::log(lr_final) * t);
  }
};

/// One Adam update. The step counter is shared by all groups.
template <class T>
void adam_step(Scene<T>& params, const Scene<T>& grad, AdamState<T>& state, const GroupRates& lr,
               const AdamParams& hp = {}) {
  if (state.m.size() != params.size() || grad.size() != params.size()) {
    throw DomainError("adam_step: optimizer state does not match the scene");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(hp.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, double(state.step));
  for (Group g : kAllGroups) {
    auto& p = params.group(g);
    const auto& gr = grad.group(g);
    auto& m = state.m.group(g);
    auto& v = state.v.group(g);
    const double step_size = rate_of(lr, g) / bc1;
    const double inv_bc2 = 1.0 / bc2;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = double(gr[k]);
      const double mk = hp.beta1 * double(m[k]) + (1.0 - hp.beta1) * gk;
      const double vk = hp.beta2 * double(v[k]) + (1.0 - hp.beta2) * gk * gk;
      m[k] = T(mk);
      v[k] = T(vk);
      p[k] = T(double(p[k]) - step_size * mk / (std::sqrt(vk * inv_bc2) + hp.eps));
    }
  }
}

}  // namespace dbs
