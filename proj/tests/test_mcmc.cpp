#include "dbs/mcmc.hpp"
#include "dbs/rasterizer.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace dbs;
using dbs::testing::random_scene;

namespace {

Scene<double> with_opacities(const std::vector<double>& o) {
  auto s = random_scene<double>(o.size(), 1);
  for (std::size_t i = 0; i < o.size(); ++i) s.opacity[i] = logit(o[i]);
  return s;
}

}  // namespace

TEST(FindDead, Examples) {
  EXPECT_TRUE(find_dead(with_opacities({0.5, 0.5, 0.5})).empty());
  EXPECT_EQ(find_dead(with_opacities({0.5, 0.001, 0.5})), std::vector<std::size_t>{1});
  EXPECT_EQ(find_dead(with_opacities({0.5, 0.9, 0.2}), 1.0 - 1e-9).size(), 3u);
  EXPECT_THROW(find_dead(with_opacities({0.5}), 0.0), DomainError);
  EXPECT_THROW(find_dead(with_opacities({0.5}), 1.0), DomainError);
}

TEST(NewOpacity, ClosedForms) {
  EXPECT_EQ(new_opacity(0.37, 1), 0.37);
  EXPECT_NEAR(new_opacity(0.1, 2), 1.0 - std::sqrt(0.9), 1e-16);
  EXPECT_NEAR(new_opacity(0.1, 2), 0.0513167, 1e-7);
  for (int n = 1; n <= 16; ++n) {
    for (double o = 0.01; o < 1.0; o += 0.01) {
      const double op = new_opacity(o, n);
      EXPECT_NEAR(1.0 - std::pow(1.0 - op, n), o, 1e-14);
      EXPECT_LE(op, o);
    }
  }
}

TEST(NewOpacity, SmallOpacityLaw) {
  for (int n = 1; n <= 8; ++n) {
    for (int k = 1; k <= 1000; ++k) {
      const double o = 0.1 * k / 1000.0;
      EXPECT_LE(std::abs(new_opacity(o, n) - o / n), o * o);
    }
  }
}

TEST(PlanRelocation, SingleLiveTakesAllDead) {
  const auto s = with_opacities({0.001, 0.3, 0.002, 0.0001});
  Rng rng(1);
  const auto plan = plan_relocation(s, find_dead(s), rng);
  EXPECT_EQ(plan.dead, (std::vector<std::size_t>{0, 2, 3}));
  EXPECT_EQ(plan.targets, (std::vector<std::size_t>{1, 1, 1}));
  ASSERT_EQ(plan.multiplicity.size(), 1u);
  EXPECT_EQ(plan.multiplicity[0], (std::pair<std::size_t, int>{1, 4}));
}

TEST(PlanRelocation, EmptyAndAllDead) {
  const auto live = with_opacities({0.3, 0.4});
  Rng rng(1);
  EXPECT_TRUE(plan_relocation(live, find_dead(live), rng).empty());
  const auto dead = with_opacities({0.001, 0.002});
  EXPECT_THROW(plan_relocation(dead, find_dead(dead), rng), DivergenceError);
}

TEST(PlanRelocation, FrequenciesFollowOpacity) {
  // Live opacities 0.2 and 0.01; 1e5 draws against the multinomial expectation.
  auto s = with_opacities({0.2, 0.01});
  std::vector<std::size_t> dead(100000, 0);
  std::vector<double> w = {0.2, 0.01};
  Rng rng(3);
  const auto draws = sample_multinomial({0, 1}, w, dead.size(), rng);
  const double n = double(draws.size());
  const double p = 0.2 / 0.21;
  const double first = double(std::count(draws.begin(), draws.end(), 0u));
  EXPECT_NEAR(first, n * p, 3.0 * std::sqrt(n * p * (1 - p)));
  // Same seed, same plan.
  const auto s3 = with_opacities({0.001, 0.2, 0.3, 0.002, 0.5});
  Rng r1(9), r2(9);
  EXPECT_EQ(plan_relocation(s3, find_dead(s3), r1).targets, plan_relocation(s3, find_dead(s3), r2).targets);
}

TEST(ApplyRelocation, TwoCopiesOfOneTenth) {
  auto s = with_opacities({0.1, 0.001});
  Rng rng(1);
  AdamState<double> st(s);
  for (Group g : kAllGroups) {
    for (auto& v : st.m.group(g)) v = 1.0;
  }
  const auto plan = plan_relocation(s, find_dead(s), rng);
  apply_relocation(s, plan, &st);
  EXPECT_NEAR(s.opacity_of(0), 0.0513167, 1e-7);
  EXPECT_NEAR(s.opacity_of(1), 0.0513167, 1e-7);
  EXPECT_EQ(s.position[3], s.position[0]);
  EXPECT_EQ(s.scale[5], s.scale[2]);
  EXPECT_EQ(s.shape[1], s.shape[0]);
  for (std::size_t k = 0; k < s.features.size() / 2; ++k) EXPECT_EQ(s.features[k], s.features[k + s.features.size() / 2]);
  for (Group g : kAllGroups) {
    for (double v : st.m.group(g)) EXPECT_EQ(v, 0.0);
  }
}

TEST(ApplyRelocation, EmptyPlanIsIdentityAndCountIsConserved) {
  auto s = random_scene<double>(50, 4);
  const auto before = s;
  apply_relocation(s, RelocationPlan{}, static_cast<AdamState<double>*>(nullptr));
  EXPECT_TRUE(s == before);
  for (std::size_t i = 0; i < s.size(); i += 3) s.opacity[i] = logit(0.001);
  const auto pre = s;
  Rng rng(2);
  const auto plan = plan_relocation(s, find_dead(s), rng);
  apply_relocation(s, plan, static_cast<AdamState<double>*>(nullptr));
  EXPECT_EQ(s.size(), pre.size());
  for (std::size_t k = 0; k < plan.dead.size(); ++k) {
    EXPECT_LE(s.opacity_of(plan.dead[k]), pre.opacity_of(plan.targets[k]) + 1e-15);
    EXPECT_LE(s.opacity_of(plan.targets[k]), pre.opacity_of(plan.targets[k]) + 1e-15);
  }
  EXPECT_TRUE(find_dead(s).empty());
}

TEST(Grow, BudgetRules) {
  auto s = random_scene<double>(100, 5);
  Rng rng(1);
  EXPECT_EQ(grow(s, 100, rng), 0u);
  EXPECT_EQ(s.size(), 100u);
  AdamState<double> st(s);
  EXPECT_EQ(grow(s, 1000, rng, &st), 5u);
  EXPECT_EQ(s.size(), 105u);
  EXPECT_EQ(st.m.size(), 105u);
  EXPECT_EQ(grow(s, 107, rng), 2u);
  Rng sched(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto t = random_scene<double>(20 + sched.below(200), 6 + trial);
    const std::size_t budget = t.size() + sched.below(40);
    for (int k = 0; k < 10; ++k) {
      grow(t, budget, sched);
      ASSERT_LE(t.size(), budget);
    }
  }
}

TEST(Grow, CopiesShareReducedOpacity) {
  auto s = with_opacities({0.2});
  s.resize(20);
  for (std::size_t i = 1; i < 20; ++i) {
    s.copy_primitive(i, 0);
    s.opacity[i] = logit(0.001);
  }
  Rng rng(1);
  EXPECT_EQ(grow(s, 100, rng), 1u);
  EXPECT_NEAR(s.opacity_of(0), new_opacity(0.2, 2), 1e-12);
  EXPECT_EQ(s.opacity[20], s.opacity[0]);
  EXPECT_EQ(s.position[60], s.position[0]);
}

TEST(Preservation, ZeroAtPeakAndForSingleCopy) {
  for (double b : {-2.0, 0.0, 2.0}) {
    for (int n : {1, 2, 4, 8}) {
      for (double o : {0.01, 0.1, 0.5}) {
        if (n == 1) {
          EXPECT_EQ(preservation_error(b, o, n), 0.0);
        }
        const double op = new_opacity(o, n);
        EXPECT_NEAR(o - (1.0 - std::pow(1.0 - op, n)), 0.0, 1e-15);
      }
    }
  }
}

TEST(Preservation, ReferenceCase) {
  const double e = preservation_error(0.0, 0.1, 2);
  // Closed form: max over f of |(o - 2o')f + o'^2 f^2| is at f = 1/2.
  const double op = new_opacity(0.1, 2);
  EXPECT_NEAR(e, std::abs(0.5 * (0.1 - 2 * op) + 0.25 * op * op), 1e-9);
  EXPECT_NEAR(e, 6.6e-4, 0.05e-4);
}

TEST(Preservation, SecondOrderEnvelopeForBetaAndGaussian) {
  for (double o : {0.01, 0.05, 0.1}) {
    for (int n : {2, 4, 8}) {
      for (double b : {-2.0, 0.0, 2.0}) EXPECT_LE(preservation_error(b, o, n), 2 * o * o);
      EXPECT_LE(preservation_error([](double x) { return gaussian_reference(x); }, o, n), 2 * o * o);
    }
  }
}

TEST(Preservation, VanishesAsOpacityShrinks) {
  for (double b : {-2.0, 0.0, 2.0}) {
    for (int n : {2, 4, 8}) {
      double prev = std::numeric_limits<double>::infinity();
      for (double o : {0.2, 0.1, 0.05, 0.01}) {
        const double e = preservation_error(b, o, n);
        EXPECT_LT(e, prev);
        prev = e;
      }
    }
  }
}

TEST(Preservation, RenderedFootprintIsPreserved) {
  Camera<double> cam;
  cam.fx = cam.fy = 40;
  cam.cx = cam.cy = 16;
  cam.width = cam.height = 32;
  for (double o : {0.02, 0.05, 0.1}) {
    Scene<double> s(AppearanceLayout::spherical_beta(0));
    BetaPrimitive<double> p;
    p.position = Vec3<double>(0, 0, 3);
    p.opacity = o;
    p.scale = Vec3<double>(0.3, 0.2, 0.25);
    p.shape = 0.7;
    p.base_color = Vec3<double>(0.2, 0.9, 0.4);
    s.push_back(p);
    s.push_back(p);
    s.opacity[1] = logit(1e-4);
    const auto before = render_reference(s, cam);
    Rng rng(1);
    apply_relocation(s, plan_relocation(s, find_dead(s), rng), static_cast<AdamState<double>*>(nullptr));
    const auto after = render_reference(s, cam);
    // O(o^2) from the split, plus copies that now fall under the 1/255 alpha
    // cutoff: at most two skipped contributions of alpha < 1/255 against a
    // color difference of at most 0.8 from the white background.
    EXPECT_LE(max_abs_diff(before.color, after.color), 2 * o * o + 2 * kMinAlpha * 0.8);
  }
}
