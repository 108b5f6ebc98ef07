#pragma once

// Scalar Beta kernel B(x; b) = (1 - x)^(4 e^b), its derivatives, and the
// numerical machinery that certifies a radial 2D splatting profile has a
// consistent 3D counterpart (inverse / forward Abel transform).

#include "dbs/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace dbs {

inline constexpr double kBetaShapeScale = 4.0;
inline constexpr double kShapeClampMin = -10.0;
inline constexpr double kShapeClampMax = 10.0;
/// Magnitude returned for d/dx at the support edge when the exponent is < 1.
inline constexpr double kEdgeGradientClamp = 1e7;
inline constexpr double kEdgeGradientWindow = 1e-7;

/// Unbounded shape parameter; the kernel exponent is 4 e^b.
struct BetaShape {
  double b = 0.0;
  double beta() const {
    return kBetaShapeScale * std::exp(std::clamp(b, kShapeClampMin, kShapeClampMax));
  }
};

/// Kernel exponent for shape b, with b clamped to [-10, 10].
template <class T> T beta_exponent(T b) {
  return T(kBetaShapeScale) * std::exp(std::clamp(b, T(kShapeClampMin), T(kShapeClampMax)));
}

/// Unchecked kernel for a precomputed exponent. x must lie in [0, 1].
template <class T> T beta_kernel(T x, T exponent) { return std::pow(T(1) - x, exponent); }

/// (1 - x)^(4 e^b). Exactly 1 at x = 0 and exactly 0 at x = 1.
template <class T> T beta_eval(T x, T b) {
  if (!(x >= T(0) && x <= T(1))) throw DomainError("beta_eval: x outside [0, 1]");
  return beta_kernel(x, beta_exponent(b));
}

inline double beta_eval(double x, BetaShape shape) { return beta_eval(x, shape.b); }

template <class T> struct BetaGradient {
  T d_dx;
  T d_db;
};

/// d/dx and d/db of beta_kernel for a precomputed exponent.
/// d/db vanishes when b sits outside the clamp range.
template <class T> BetaGradient<T> beta_kernel_grad(T x, T exponent, bool shape_clamped) {
  const T one_minus = T(1) - x;
  BetaGradient<T> g{};
  if (exponent < T(1) && x >= T(1) - T(kEdgeGradientWindow)) {
    g.d_dx = -T(kEdgeGradientClamp);
  } else {
    g.d_dx = -exponent * std::pow(one_minus, exponent - T(1));
  }
  if (shape_clamped || one_minus <= T(0)) {
    g.d_db = T(0);
  } else {
    g.d_db = exponent * std::log(one_minus) * std::pow(one_minus, exponent);
  }
  return g;
}

template <class T> bool shape_is_clamped(T b) {
  return b < T(kShapeClampMin) || b > T(kShapeClampMax);
}

template <class T> BetaGradient<T> beta_grad(T x, T b) {
  if (!(x >= T(0) && x <= T(1))) throw DomainError("beta_grad: x outside [0, 1]");
  return beta_kernel_grad(x, beta_exponent(b), shape_is_clamped(b));
}

/// Gaussian with the domain scaled by 3 sigma: exp(-9x/2).
template <class T> T gaussian_reference(T x) { return std::exp(T(-4.5) * x); }

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature

struct QuadratureRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule by Newton iteration on P_n.
inline QuadratureRule gauss_legendre(int n) {
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double step = p1 / dp;
      x -= step;
      if (std::abs(step) < 1e-16) break;
    }
    {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return rule;
}

inline constexpr int kAbelQuadratureNodes = 512;

inline const QuadratureRule& abel_rule() {
  static const QuadratureRule rule = gauss_legendre(kAbelQuadratureNodes);
  return rule;
}

/// Integral of f over [lo, hi] with the given rule.
template <class Fn> double integrate(const QuadratureRule& rule, double lo, double hi, Fn&& f) {
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
  }
  return half * sum;
}

// ---------------------------------------------------------------------------
// Radial profiles

/// Samples of a radially symmetric kernel on [0, 1].
struct RadialProfile {
  std::vector<double> radii;
  std::vector<double> values;

  std::size_t size() const { return radii.size(); }

  /// Grid structure: at least two samples, strictly increasing radii from
  /// exactly 0 to exactly 1, finite values.
  void validate() const {
    if (radii.size() != values.size()) throw DomainError("radial profile: radii/values length mismatch");
    if (radii.size() < 2) throw DomainError("radial profile: need at least two samples");
    if (radii.front() != 0.0) throw DomainError("radial profile: first radius must be 0");
    if (radii.back() != 1.0) throw DomainError("radial profile: last radius must be 1");
    for (std::size_t i = 1; i < radii.size(); ++i) {
      if (!(radii[i] > radii[i - 1])) throw DomainError("radial profile: radii must be strictly increasing");
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw DomainError("radial profile: non-finite value");
    }
  }

  /// Piecewise-linear interpolation; zero outside [0, 1].
  double operator()(double r) const {
    if (r < 0.0 || r > 1.0) return 0.0;
    const auto it = std::upper_bound(radii.begin(), radii.end(), r);
    if (it == radii.end()) return values.back();
    const std::size_t hi = static_cast<std::size_t>(it - radii.begin());
    const std::size_t lo = hi - 1;
    const double t = (r - radii[lo]) / (radii[hi] - radii[lo]);
    return values[lo] + t * (values[hi] - values[lo]);
  }

  /// Uniform n-point grid sampled from f.
  template <class Fn> static RadialProfile sample(Fn&& f, std::size_t n = 512) {
    RadialProfile p;
    p.radii.resize(n);
    p.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = (i + 1 == n) ? 1.0 : static_cast<double>(i) / static_cast<double>(n - 1);
      p.radii[i] = r;
      p.values[i] = f(r);
    }
    return p;
  }

  /// The 2D Beta splatting profile (1 - r^2)^beta.
  static RadialProfile beta_2d(double beta, std::size_t n = 512) {
    return sample([beta](double r) { return std::pow(std::max(0.0, 1.0 - r * r), beta); }, n);
  }
};

namespace detail {

/// Derivative dK/du of a sampled profile in the variable u = r^2, where radial
/// profiles are smooth at the origin. Monotone cubic Hermite (Fritsch-Carlson
/// slopes) in the interior; when the profile vanishes at the boundary, the
/// last two intervals use a fitted power law (1 - u)^p so that edge
/// singularities such as sqrt(1 - r^2) are represented.
class ProfileDerivative {
 public:
  explicit ProfileDerivative(const RadialProfile& p) : k_(p.values) {
    const std::size_t n = k_.size();
    u_.resize(n);
    for (std::size_t i = 0; i < n; ++i) u_[i] = p.radii[i] * p.radii[i];
    slopes_.assign(n, 0.0);
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = u_[i + 1] - u_[i];
      delta[i] = (k_[i + 1] - k_[i]) / h[i];
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (delta[i - 1] * delta[i] <= 0.0) {
        slopes_[i] = 0.0;
      } else {
        const double w1 = 2.0 * h[i] + h[i - 1];
        const double w2 = h[i] + 2.0 * h[i - 1];
        slopes_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
      }
    }
    if (n >= 3) {
      slopes_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
      slopes_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    } else {
      slopes_[0] = slopes_[n - 1] = delta[0];
    }
    if (n >= 3 && std::abs(k_[n - 1]) <= 1e-12 && k_[n - 2] > 0.0 && k_[n - 3] > k_[n - 2]) {
      const double a = 1.0 - u_[n - 3];
      const double b = 1.0 - u_[n - 2];
      const double p_edge = std::log(k_[n - 2] / k_[n - 3]) / std::log(b / a);
      if (std::isfinite(p_edge) && p_edge > 0.0) {
        edge_power_ = p_edge;
        edge_model_ = true;
      }
    }
  }

  double operator()(double u) const {
    const std::size_t n = u_.size();
    if (u <= u_.front()) return slopes_.front();
    if (u >= u_.back()) u = u_.back();
    auto it = std::upper_bound(u_.begin(), u_.end(), u);
    const std::size_t hi = (it == u_.end()) ? n - 1 : static_cast<std::size_t>(it - u_.begin());
    const std::size_t lo = hi - 1;
    if (edge_model_ && lo + 3 >= n) {
      const double base = 1.0 - u_[n - 2];
      const double v = std::max(1.0 - u, 0.0) / base;
      return -edge_power_ * k_[n - 2] / base * std::pow(v, edge_power_ - 1.0);
    }
    const double h = u_[hi] - u_[lo];
    const double t = (u - u_[lo]) / h;
    return ((6.0 * t * t - 6.0 * t) * k_[lo] + (3.0 * t * t - 4.0 * t + 1.0) * h * slopes_[lo] +
            (-6.0 * t * t + 6.0 * t) * k_[hi] + (3.0 * t * t - 2.0 * t) * h * slopes_[hi]) /
           h;
  }

 private:
  // Three-point one-sided slope with the shape-preserving limits.
  static double end_slope(double h0, double h1, double d0, double d1) {
    double m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (m * d0 <= 0.0) {
      m = 0.0;
    } else if (d0 * d1 <= 0.0 && std::abs(m) > 3.0 * std::abs(d0)) {
      m = 3.0 * d0;
    }
    return m;
  }

  std::vector<double> u_;
  const std::vector<double>& k_;
  std::vector<double> slopes_;
  bool edge_model_ = false;
  double edge_power_ = 1.0;
};

/// Inverse Abel transform without the kernel-condition precondition.
inline RadialProfile inverse_abel_unchecked(const RadialProfile& profile) {
  profile.validate();
  const ProfileDerivative derivative(profile);
  const QuadratureRule& rule = abel_rule();
  const std::size_t n = profile.size();
  RadialProfile out;
  out.radii = profile.radii;
  out.values.assign(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double R = profile.radii[i];
    const double a = std::sqrt(std::max(0.0, 1.0 - R * R));
    // r^2 = R^2 + a^2 sin^2(theta) removes the (r^2 - R^2)^(-1/2) singularity
    // at r = R and the (1 - r^2)^(-1/2) edge behaviour at r = 1.
    const double integral = integrate(rule, 0.0, 0.5 * kPi, [&](double theta) {
      const double s = std::sin(theta);
      // dK/dr / r = 2 dK/du
      return 2.0 * derivative(R * R + a * a * s * s) * a * std::cos(theta);
    });
    const double value = -integral / kPi;
    if (!std::isfinite(value)) {
      throw QuadratureError("inverse_abel: non-finite integrand at R = " + std::to_string(R));
    }
    out.values[i] = value;
  }
  // The transform is evaluated at R = 1 as a one-sided limit.
  if (n >= 3) {
    out.values[n - 1] = std::max(0.0, 2.0 * out.values[n - 2] - out.values[n - 3]);
  } else {
    out.values[n - 1] = std::max(0.0, out.values[n - 2]);
  }
  return out;
}

}  // namespace detail

/// Line integral of a radial 3D kernel through the unit ball at projected
/// radius r: the integral of K3(sqrt(r^2 + z^2)) over the chord.
inline double forward_abel(const RadialProfile& profile3d, double r) {
  if (r < 0.0 || r > 1.0) throw DomainError("forward_abel: r outside [0, 1]");
  if (r >= 1.0) return 0.0;
  const double a = std::sqrt(1.0 - r * r);
  const double value = 2.0 * integrate(abel_rule(), 0.0, 0.5 * kPi, [&](double theta) {
    const double s = std::sin(theta);
    return profile3d(std::sqrt(r * r + a * a * s * s)) * a * std::cos(theta);
  });
  if (!std::isfinite(value)) throw QuadratureError("forward_abel: non-finite integrand");
  return value;
}

// ---------------------------------------------------------------------------
// Kernel condition report

struct ConditionEntry {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  std::string detail;
};

struct ConditionReport {
  std::vector<ConditionEntry> entries;

  bool all_passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
  }

  const ConditionEntry* find(const std::string& name) const {
    for (const auto& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  bool passed(const std::string& name) const {
    const auto* e = find(name);
    return e != nullptr && e->passed;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << std::left << std::setw(24) << "condition" << std::setw(8) << "result" << std::setw(16)
       << "measured"
       << "detail\n";
    for (const auto& e : entries) {
      os << std::left << std::setw(24) << e.name << std::setw(8) << (e.passed ? "pass" : "FAIL")
         << std::setw(16) << std::setprecision(6) << e.measured << e.detail << "\n";
    }
    os << "overall: " << (all_passed() ? "pass" : "FAIL") << "\n";
    return os.str();
  }

  /// One `name=pass|fail` and one `name.measured=<value>` line per condition.
  std::string to_key_value() const {
    std::ostringstream os;
    os << std::setprecision(17);
    for (const auto& e : entries) {
      os << e.name << "=" << (e.passed ? "pass" : "fail") << "\n";
      os << e.name << ".measured=" << e.measured << "\n";
    }
    os << "overall=" << (all_passed() ? "pass" : "fail") << "\n";
    return os.str();
  }
};

inline constexpr double kCenterTolerance = 1e-3;
inline constexpr double kBoundaryTolerance = 1e-3;
/// One-sided difference quotients may differ by at most
/// kSmoothAbsolute + kSmoothRelative * max(|left|, |right|) at any node.
inline constexpr double kSmoothAbsolute = 1.0;
inline constexpr double kSmoothRelative = 0.75;

namespace detail {

inline std::vector<ConditionEntry> check_shape_conditions(const RadialProfile& p) {
  std::vector<ConditionEntry> out;
  bool grid_ok = true;
  std::string grid_detail;
  try {
    p.validate();
  } catch (const DomainError& e) {
    grid_ok = false;
    grid_detail = e.what();
  }
  if (!grid_ok) {
    out.push_back({"definition_range", false, 0.0, grid_detail});
    return out;
  }
  const auto [lo, hi] = std::minmax_element(p.values.begin(), p.values.end());
  const bool in_range = *lo >= 0.0 && *hi <= 1.0;
  out.push_back({"definition_range", in_range, *hi, "values within [0, 1]"});

  const double center = p.values.front();
  out.push_back({"center_opacity", std::abs(center - 1.0) <= kCenterTolerance, center,
                 "K(r) -> 1 as r -> 0"});
  const double edge = p.values.back();
  out.push_back({"boundary_transparency", std::abs(edge) <= kBoundaryTolerance, edge,
                 "K(r) -> 0 as r -> 1"});

  double worst = 0.0;
  bool smooth = true;
  for (std::size_t i = 1; i + 1 < p.size(); ++i) {
    const double left = (p.values[i] - p.values[i - 1]) / (p.radii[i] - p.radii[i - 1]);
    const double right = (p.values[i + 1] - p.values[i]) / (p.radii[i + 1] - p.radii[i]);
    const double jump = std::abs(right - left);
    const double allowed = kSmoothAbsolute + kSmoothRelative * std::max(std::abs(left), std::abs(right));
    worst = std::max(worst, jump / allowed);
    if (jump > allowed) smooth = false;
  }
  out.push_back({"smoothness_c1", smooth, worst, "difference-quotient continuity on (0, 1)"});

  double area = 0.0;
  double variation = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    const double h = p.radii[i] - p.radii[i - 1];
    area += 0.5 * h * (std::abs(p.values[i]) + std::abs(p.values[i - 1]));
    variation += std::abs(p.values[i] - p.values[i - 1]);
  }
  out.push_back({"integrability", std::isfinite(area) && std::isfinite(variation), variation,
                 "integral of |K| and |dK/dr| finite"});
  return out;
}

}  // namespace detail

/// Inverse Abel transform K3(R) = -(1/pi) int_R^1 K'(r) (r^2 - R^2)^(-1/2) dr
/// on the profile's own grid. Throws DomainError when the profile violates the
/// shape conditions (range, center opacity, boundary transparency, C1, integrability).
inline RadialProfile inverse_abel(const RadialProfile& profile) {
  for (const auto& entry : detail::check_shape_conditions(profile)) {
    if (!entry.passed) {
      throw DomainError("inverse_abel: profile fails kernel condition '" + entry.name + "'");
    }
  }
  return detail::inverse_abel_unchecked(profile);
}

/// Evaluates every splatting-kernel condition; failures are entries, never exceptions.
inline ConditionReport validate_kernel_conditions(const RadialProfile& profile) {
  ConditionReport report;
  report.entries = detail::check_shape_conditions(profile);
  if (report.entries.size() == 1) {
    report.entries.push_back({"abel_existence", false, 0.0, "profile grid invalid"});
    return report;
  }
  try {
    const RadialProfile k3 = detail::inverse_abel_unchecked(profile);
    double min_value = 0.0;
    double max_abs = 0.0;
    bool finite = true;
    for (double v : k3.values) {
      finite = finite && std::isfinite(v);
      min_value = std::min(min_value, v);
      max_abs = std::max(max_abs, std::abs(v));
    }
    const bool nonnegative = min_value >= -1e-4 * std::max(max_abs, 1e-12);
    report.entries.push_back({"abel_existence", finite && nonnegative, min_value,
                              "inverse Abel transform finite and nonnegative"});
  } catch (const Error& e) {
    report.entries.push_back({"abel_existence", false, 0.0, e.what()});
  }
  return report;
}

}  // namespace dbs
