#pragma once

// Densification by relocation: dead primitives are moved onto live ones drawn
// in proportion to opacity, and the opacity of every copy is reduced so that
// the composited footprint is preserved to second order in opacity.

#include "dbs/kernel.hpp"
#include "dbs/optimizer.hpp"
#include "dbs/scene.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace dbs {

inline constexpr double kDeadThreshold = 0.005;
inline constexpr double kGrowthRate = 0.05;

template <class T> std::vector<std::size_t> find_dead(const Scene<T>& scene, double threshold = kDeadThreshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("find_dead: threshold must lie in (0, 1)");
  std::vector<std::size_t> dead;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (double(scene.opacity_of(i)) < threshold) dead.push_back(i);
  }
  return dead;
}

struct RelocationPlan {
  std::vector<std::size_t> dead;
  /// targets[k] receives dead[k].
  std::vector<std::size_t> targets;
  /// (target, N) with N = 1 + number of copies placed on it, ascending by target.
  std::vector<std::pair<std::size_t, int>> multiplicity;

  bool empty() const { return dead.empty(); }
};

/// o' = 1 - (1 - o)^(1/N).
inline double new_opacity(double o, int n) {
  if (n < 1) throw DomainError("new_opacity: N must be at least 1");
  if (!(o >= 0.0 && o <= 1.0)) throw DomainError("new_opacity: opacity outside [0, 1]");
  if (n == 1 || o == 0.0 || o == 1.0) return o;
  return -std::expm1(std::log1p(-o) / double(n));
}

/// Draws `count` indices from `candidates` with probability proportional to
/// `weights[candidate]`.
inline std::vector<std::size_t> sample_multinomial(const std::vector<std::size_t>& candidates,
                                                   const std::vector<double>& weights, std::size_t count, Rng& rng) {
  std::vector<double> cdf(candidates.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    acc += std::max(0.0, weights[candidates[k]]);
    cdf[k] = acc;
  }
  std::vector<std::size_t> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    std::size_t k;
    if (acc > 0.0) {
      const double u = rng.uniform() * acc;
      k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      k = std::min(k, candidates.size() - 1);
    } else {
      k = static_cast<std::size_t>(rng.below(candidates.size()));
    }
    out.push_back(candidates[k]);
  }
  return out;
}

namespace detail {

template <class T> std::vector<std::size_t> live_indices(const Scene<T>& scene, const std::vector<std::size_t>& dead) {
  std::vector<bool> is_dead(scene.size(), false);
  for (std::size_t d : dead) is_dead.at(d) = true;
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (!is_dead[i]) live.push_back(i);
  }
  return live;
}

template <class T> std::vector<double> opacities(const Scene<T>& scene) {
  std::vector<double> o(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) o[i] = double(scene.opacity_of(i));
  return o;
}

inline std::vector<std::pair<std::size_t, int>> count_targets(const std::vector<std::size_t>& targets) {
  std::map<std::size_t, int> counts;
  for (std::size_t t : targets) ++counts[t];
  std::vector<std::pair<std::size_t, int>> out;
  for (const auto& [t, c] : counts) out.emplace_back(t, 1 + c);
  return out;
}

/// Logit of an opacity kept strictly inside (0, 1) in type T.
template <class T> T opacity_logit(double o) {
  const double eps = double(std::numeric_limits<T>::epsilon());
  return T(logit(std::clamp(o, eps, 1.0 - eps)));
}

}  // namespace detail

template <class T> RelocationPlan plan_relocation(const Scene<T>& scene, const std::vector<std::size_t>& dead, Rng& rng) {
  RelocationPlan plan;
  if (dead.empty()) return plan;
  const auto live = detail::live_indices(scene, dead);
  if (live.empty()) {
    throw DivergenceError("plan_relocation: all " + std::to_string(scene.size()) + " primitives are dead");
  }
  plan.dead = dead;
  plan.targets = sample_multinomial(live, detail::opacities(scene), dead.size(), rng);
  plan.multiplicity = detail::count_targets(plan.targets);
  return plan;
}

/// Overwrites each dead primitive with its target and sets the opacity of the
/// target and its copies to new_opacity(o, N). Moments of all touched slots are zeroed.
template <class T> void apply_relocation(Scene<T>& scene, const RelocationPlan& plan, AdamState<T>* state = nullptr) {
  for (const auto& [t, n] : plan.multiplicity) {
    scene.opacity[t] = detail::opacity_logit<T>(new_opacity(double(scene.opacity_of(t)), n));
    if (state) state->zero_primitive(t);
  }
  for (std::size_t k = 0; k < plan.dead.size(); ++k) {
    scene.copy_primitive(plan.dead[k], plan.targets[k]);
    if (state) state->zero_primitive(plan.dead[k]);
  }
}

/// Appends min(floor(rate * n), budget - n) copies of live primitives drawn by
/// opacity; each drawn target and its copies share the reduced opacity.
/// Returns the number of primitives added.
template <class T>
std::size_t grow(Scene<T>& scene, std::size_t budget, Rng& rng, AdamState<T>* state = nullptr,
                 double rate = kGrowthRate, double dead_threshold = kDeadThreshold) {
  const std::size_t n = scene.size();
  if (budget <= n) return 0;
  const std::size_t add = std::min(static_cast<std::size_t>(std::floor(rate * double(n))), budget - n);
  if (add == 0) return 0;
  const auto live = detail::live_indices(scene, find_dead(scene, dead_threshold));
  if (live.empty()) throw DivergenceError("grow: no live primitive to sample from");
  const auto targets = sample_multinomial(live, detail::opacities(scene), add, rng);
  for (const auto& [t, m] : detail::count_targets(targets)) {
    scene.opacity[t] = detail::opacity_logit<T>(new_opacity(double(scene.opacity_of(t)), m));
    if (state) state->zero_primitive(t);
  }
  scene.resize(n + add);
  if (state) state->resize(n + add);
  for (std::size_t k = 0; k < add; ++k) scene.copy_primitive(n + k, targets[k]);
  return add;
}

inline constexpr int kPreservationSamples = 4096;

/// max over x in [0, 1] of |o f(x) - (1 - (1 - o' f(x))^N)|, o' = new_opacity(o, N).
inline double preservation_error(const std::function<double(double)>& profile, double o, int n) {
  if (!(o > 0.0 && o < 1.0)) throw DomainError("preservation_error: opacity must lie in (0, 1)");
  if (n < 1) throw DomainError("preservation_error: N must be at least 1");
  if (n == 1) return 0.0;
  const double op = new_opacity(o, n);
  double worst = 0.0;
  for (int k = 0; k < kPreservationSamples; ++k) {
    const double f = profile(double(k) / double(kPreservationSamples - 1));
    const double combined = -std::expm1(double(n) * std::log1p(-op * f));
    worst = std::max(worst, std::abs(o * f - combined));
  }
  return worst;
}

inline double preservation_error(double b, double o, int n) {
  return preservation_error([b](double x) { return beta_eval(x, b); }, o, n);
}

}  // namespace dbs
