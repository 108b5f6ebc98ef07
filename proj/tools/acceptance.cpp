// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.

#include "dbs/dbs.hpp"
#include "test_util.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

using namespace dbs;
using dbs::testing::coherent_scene;
using dbs::testing::default_camera;
using dbs::testing::random_scene;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  /// Records a sub-check; the first failure is named in the detail line.
  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "FAILED " << what << "; ";
    pass = pass && ok;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// 1 -------------------------------------------------------------------------
void kernel_gradients(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> ux(0.01, 0.99), ub(-4.0, 4.0);
  const double h = 1e-6, floor = 1e-12;
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const double x = ux(g), b = ub(g);
    const auto gr = beta_grad(x, b);
    const double fx = (beta_eval(x + h, b) - beta_eval(x - h, b)) / (2 * h);
    const double fb = (beta_eval(x, b + h) - beta_eval(x, b - h)) / (2 * h);
    worst = std::max(worst, std::abs(gr.d_dx - fx) / (std::max(std::abs(fx), floor) + floor));
    worst = std::max(worst, std::abs(gr.d_db - fb) / (std::max(std::abs(fb), floor) + floor));
  }
  const double secs = seconds_since(t0);
  o.require(worst <= 1e-4, "relative error");
  o.require(secs < 5.0, "runtime");
  o.detail << "samples=10000 max_rel_err=" << fmt(worst) << " (tol 1e-4) runtime=" << fmt(secs, "%.2f") << "s";
}

// 2 -------------------------------------------------------------------------
void gaussian_likeness(Outcome& o) {
  double worst = 0.0;
  for (int i = 0; i < 4096; ++i) {
    const double x = i / 4095.0;
    worst = std::max(worst, std::abs(beta_eval(x, 0.0) - gaussian_reference(x)));
  }
  const auto& rule = gauss_legendre(64);
  const double ib = integrate(rule, 0.0, 1.0, [](double x) { return beta_eval(x, 0.0); });
  const double ig = integrate(rule, 0.0, 1.0, [](double x) { return gaussian_reference(x); });
  o.require(worst <= 0.06, "max deviation");
  o.require(std::abs(ib - 0.2) <= 1e-12, "beta integral");
  o.require(std::abs(ig - (2.0 / 9.0) * (1.0 - std::exp(-4.5))) <= 1e-12 && std::abs(ig - 0.21975) <= 1e-5,
            "gaussian integral");
  o.detail << "max_dev=" << fmt(worst) << " (tol 0.06) int_beta=" << fmt(ib, "%.6f") << " int_gauss=" << fmt(ig, "%.6f");
}

// 3 -------------------------------------------------------------------------
void abel_validity(Outcome& o) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (double beta : {0.5, 1.0, 4.0}) {
    const auto p = RadialProfile::beta_2d(beta, 512);
    const auto k3 = inverse_abel(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      worst = std::max(worst, std::abs(forward_abel(k3, p.radii[i]) - p.values[i]));
    }
    o.require(validate_kernel_conditions(p).all_passed(), "beta profile conditions");
  }
  const bool constant_rejected =
      !validate_kernel_conditions(RadialProfile::sample([](double) { return 1.0; })).all_passed();
  const bool step_rejected =
      !validate_kernel_conditions(RadialProfile::sample([](double r) { return r < 0.5 ? 1.0 : 0.0; })).all_passed();
  const double secs = seconds_since(t0);
  o.require(worst <= 1e-3, "round trip");
  o.require(constant_rejected, "constant rejection");
  o.require(step_rejected, "step rejection");
  o.require(secs < 30.0, "runtime");
  o.detail << "round_trip_linf=" << fmt(worst) << " (tol 1e-3) constant_rejected=" << constant_rejected
           << " step_rejected=" << step_rejected << " runtime=" << fmt(secs, "%.2f") << "s";
}

// 4 -------------------------------------------------------------------------
void densification(Outcome& o) {
  const auto t0 = Clock::now();
  std::vector<double> grid;
  for (int k = 0; k < 20; ++k) grid.push_back(0.005 * (k + 1));  // 0.005 .. 0.1
  double peak = 0.0, worst_ratio = 0.0, worst_law = 0.0;
  bool monotone = true;
  for (double b : {-2.0, 0.0, 2.0}) {
    for (int n : {2, 4, 8}) {
      double prev = 0.0;
      for (double op : grid) {
        const double np = new_opacity(op, n);
        peak = std::max(peak, std::abs(op + std::expm1(double(n) * std::log1p(-np))));
        const double e = preservation_error(b, op, n);
        worst_ratio = std::max(worst_ratio, e / (2 * op * op));
        monotone = monotone && e > prev;
        prev = e;
        worst_law = std::max(worst_law, std::abs(np - op / n) / (op * op));
      }
    }
  }
  const double reference = preservation_error(0.0, 0.1, 2);
  const double secs = seconds_since(t0);
  o.require(peak <= 1e-15, "zero at peak");
  o.require(worst_ratio <= 1.0, "2 o^2 envelope");
  o.require(monotone, "monotone in o");
  o.require(std::abs(reference - 6.6e-4) <= 0.05e-4, "reference case");
  o.require(worst_law <= 1.0, "small-o law");
  o.require(secs < 10.0, "runtime");
  o.detail << "peak_err=" << fmt(peak) << " max_err/(2o^2)=" << fmt(worst_ratio) << " monotone=" << monotone
           << " err(b=0,o=0.1,N=2)=" << fmt(reference) << " max|o'-o/N|/o^2=" << fmt(worst_law)
           << " runtime=" << fmt(secs, "%.2f") << "s";
}

// 5 -------------------------------------------------------------------------
void lobe_accounting(Outcome& o) {
  for (int m = 0; m <= 8; ++m) o.require(AppearanceLayout::spherical_beta(m).parameter_count() == 3 + 6 * m, "3+6M");
  const int sb2 = AppearanceLayout::spherical_beta(2).parameter_count();
  const int sh3 = AppearanceLayout::spherical_harmonics(3).parameter_count();
  const double ratio = double(sb2) / double(sh3);
  o.require(sb2 == 15 && sh3 == 48 && ratio == 0.3125, "SB-2 / SH-3 ratio");

  // Views straddling the great circle R.V = 0: the jump is bounded by the kernel at 1 - eps.
  std::mt19937_64 g(5);
  std::normal_distribution<double> nrm;
  std::uniform_real_distribution<double> ub(-2.0, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    SbAppearance<double> a;
    a.base_color = Vec3<double>(0.3, 0.3, 0.3);
    const Vec3<double> dir = Vec3<double>(nrm(g), nrm(g), nrm(g)).normalized();
    const auto angles = lobe_angles(dir);
    a.lobes.push_back({angles[0], angles[1], ub(g), Vec3<double>(1, 1, 1)});
    const Vec3<double> r = a.lobes[0].direction();
    const Vec3<double> t = r.unitOrthogonal();
    const double spin = 2.0 * kPi * trial / 2000.0;
    const Vec3<double> u = (std::cos(spin) * t + std::sin(spin) * r.cross(t)).normalized();
    for (double eps : {1e-3, 1e-6, 1e-9}) {
      const double jump =
          (sb_eval(a, Vec3<double>((u + eps * r).normalized())) - sb_eval(a, Vec3<double>((u - eps * r).normalized())))
              .cwiseAbs()
              .maxCoeff();
      worst = std::max(worst, jump / (std::pow(eps, beta_exponent(a.lobes[0].sharpness)) * 1.01 + 1e-15));
    }
  }
  o.require(worst <= 1.0, "continuity");
  o.detail << "params(M)=3+6M for M<=8 ratio=" << sb2 << "/" << sh3 << "=" << fmt(100 * ratio, "%.2f")
           << "% max_jump/bound=" << fmt(worst);
}

// 6 -------------------------------------------------------------------------
template <class T> double weighted_sum(const RenderOutput<T>& r, const Image<T>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.data.size(); ++i) acc += double(r.color.data[i]) * double(w.data[i]);
  return acc;
}

void rasterizer_equivalence(Outcome& o, int threads) {
  const auto t0 = Clock::now();
  const auto cam = default_camera<float>(256, 256);
  RenderOptions opt;
  opt.threads = threads;
  double worst = 0.0;
  std::size_t largest = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t n = 200 * (seed + 1);
    const auto s = random_scene<float>(n, 1000 + seed, AppearanceLayout::spherical_beta(2), 1.2, 0.005, 0.06);
    worst = std::max(worst, max_abs_diff(render_reference(s, cam, opt).color, render_tiled(s, cam, opt).color));
    largest = std::max(largest, n);
  }

  auto s = random_scene<double>(5, 17, AppearanceLayout::spherical_beta(2), 0.5, 0.25, 0.5);
  const auto dcam = default_camera<double>(32, 32, 0.6);
  RenderOptions dopt;
  dopt.background = Vec3<double>(0.3, 0.2, 0.1);
  std::mt19937_64 g(18);
  std::normal_distribution<double> nrm;
  Image<double> w(32, 32, 3);
  for (auto& v : w.data) v = nrm(g);
  const auto grad = render_backward(s, dcam, dopt, w);
  const double h = 1e-6;
  double worst_rel = 0.0;
  std::size_t checked = 0;
  for (Group grp : kAllGroups) {
    auto& v = s.group(grp);
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double orig = v[k];
      v[k] = orig + h;
      const double fp = weighted_sum(render_reference(s, dcam, dopt), w);
      v[k] = orig - h;
      const double fm = weighted_sum(render_reference(s, dcam, dopt), w);
      v[k] = orig;
      const double fd = (fp - fm) / (2 * h);
      worst_rel = std::max(worst_rel, std::abs(grad.grad.group(grp)[k] - fd) / std::max(std::abs(fd), 1e-2));
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  o.require(worst <= 1e-5, "tiled vs reference");
  o.require(worst_rel <= 1e-3, "backward vs finite differences");
  o.require(secs < 120.0, "runtime");
  o.detail << "scenes=50 (200.." << largest << " prims, 256x256) linf=" << fmt(worst) << " (tol 1e-5) backward "
           << checked << " params max_rel_err=" << fmt(worst_rel) << " (tol 1e-3) runtime=" << fmt(secs, "%.1f")
           << "s";
}

// 7 -------------------------------------------------------------------------
struct ToyRun {
  ToyDataset toy;
  Scene<float> trained;
};

TrainConfig toy_config(int threads) {
  TrainConfig cfg;
  cfg.steps = 2000;
  cfg.eval_every = 2000;
  cfg.densify_every = 100;
  cfg.densify_from = 100;
  cfg.densify_until = 1500;
  cfg.max_primitives = 4000;
  cfg.lr_position_max_steps = 2000;
  cfg.lr_position_scale = 4.4;  // camera extent of the toy ring
  cfg.lambda_noise = 0.1;
  cfg.threads = threads;
  return cfg;
}

Scene<float> toy_init(Rng& rng) {
  return init_random<float>(2000, Vec3<double>::Constant(-1.2), Vec3<double>::Constant(1.2),
                            AppearanceLayout::spherical_beta(2), rng);
}

/// Trains the spheres toy from a random init; returns the wall time in seconds.
double fit_toy(ToyRun& run, int threads) {
  const auto t0 = Clock::now();
  ToyOptions topt;
  topt.views = 16;
  topt.width = topt.height = 64;
  run.toy = make_toy("spheres", 0, topt);
  Rng rng(1);
  run.trained = train(run.toy.data, toy_init(rng), toy_config(threads), rng).scene;
  return seconds_since(t0);
}

void toy_training(Outcome& o, ToyRun& run, int threads) {
  const double secs = fit_toy(run, threads);
  const auto& data = run.toy.data;
  const TrainConfig cfg = toy_config(threads);
  const double held_out = mean_psnr(run.trained, data, data.split(true), threads);

  std::vector<double> opacity;
  for (double lambda : {0.0, 1e-3, 1e-2}) {
    TrainConfig c = cfg;
    c.lambda_opacity = lambda;
    Rng r(1);
    opacity.push_back(mean_opacity(train(data, toy_init(r), c, r).scene));
  }
  o.require(run.toy.truth.size() == 200, "200 ground-truth primitives");
  o.require(held_out >= 30.0, "held-out PSNR");
  o.require(secs < 600.0, "runtime");
  o.require(opacity[0] > opacity[1] && opacity[1] > opacity[2], "opacity vs lambda_o");
  o.detail << "held_out_psnr=" << fmt(held_out, "%.2f") << "dB (min 30) primitives=" << run.trained.size()
           << " train_time=" << fmt(secs, "%.1f") << "s mean_opacity(lambda_o=0,1e-3,1e-2)=" << fmt(opacity[0])
           << "," << fmt(opacity[1]) << "," << fmt(opacity[2]);
}

// 8 -------------------------------------------------------------------------
void decomposition(Outcome& o, int threads) {
  std::size_t pixels = 0, contributors = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = random_scene<float>(400 + 200 * seed, 40 + seed);
    const auto cam = default_camera<float>(96, 80);
    RenderOptions full, diffuse, specular;
    full.threads = diffuse.threads = specular.threads = threads;
    diffuse.mode = ColorMode::diffuse;
    specular.mode = ColorMode::specular;
    const auto f = render_tiled(s, cam, full);
    const auto d = render_tiled(s, cam, diffuse);
    const auto sp = render_tiled(s, cam, specular);
    for (std::size_t k = 0; k < f.color.data.size(); ++k) {
      o.require(d.color.data[k] + sp.color.data[k] == f.color.data[k], "diffuse + specular == full");
    }
    pixels += f.color.data.size();

    const float t = mean_shape(s);
    const auto lo = render_masked(s, cam, shape_mask(s, t, true));
    const auto hi = render_masked(s, cam, shape_mask(s, t, false));
    for (std::size_t i = 0; i < s.size(); ++i) {
      const bool below = s.shape[i] < t;
      o.require(!(lo.contributions[i] > 0 && !below), "below mask admits only b < t");
      o.require(!(hi.contributions[i] > 0 && below), "above mask admits only b >= t");
      if (f.contributions[i] > 0) {
        ++contributors;
        o.require((below ? lo : hi).contributions[i] > 0, "every contributor lands in its own mask");
      }
    }
  }
  o.detail << "exact sum over " << pixels << " channel values; " << contributors
           << " contributors partitioned by mean-b threshold";
}

// 9 -------------------------------------------------------------------------
void codec(Outcome& o, const ToyRun& run) {
  const Scene<float>& s = run.trained;
  const auto archive = pack(s);
  const auto back = unpack(archive);
  const auto sorted = permute(s, sort_primitives(s));
  o.require(back.size() == s.size(), "count");
  o.require(std::memcmp(back.position.data(), sorted.position.data(), s.position.size() * sizeof(float)) == 0,
            "positions bit-exact");

  double worst_steps = 0.0;
  auto rot = sorted.rotation;
  for (std::size_t i = 0; i < sorted.size(); ++i) normalize_quaternion_linf(&rot[4 * i]);
  const auto& groups = archive.manifest["groups"];
  auto check = [&](const std::vector<float>& orig, const std::vector<float>& dec, std::size_t width, std::size_t offset,
                   const nlohmann::json& grp) {
    for (std::size_t c = 0; c < grp["channels"].get<std::size_t>(); ++c) {
      const double lo = grp["min"][c].get<double>(), hi = grp["max"][c].get<double>();
      const double half = (hi - lo) / 510.0 + 1e-7 * std::max(std::abs(lo), std::abs(hi));
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        const std::size_t k = width * i + offset + c;
        const double err = std::abs(double(dec[k]) - double(orig[k]));
        if (err > 0.0) worst_steps = std::max(worst_steps, err / half);
      }
    }
  };
  check(sorted.opacity, back.opacity, 1, 0, groups[0]);
  check(rot, back.rotation, 4, 0, groups[1]);
  check(sorted.scale, back.scale, 3, 0, groups[2]);
  check(sorted.shape, back.shape, 1, 0, groups[3]);
  check(sorted.base_color, back.base_color, 3, 0, groups[4]);
  const std::size_t f = std::size_t(s.layout.feature_dim());
  for (std::size_t gi = 5; gi < groups.size(); ++gi) check(sorted.features, back.features, f, 3 * (gi - 5), groups[gi]);
  o.require(worst_steps <= 1.0, "half-step bound");

  double worst_psnr = std::numeric_limits<double>::infinity();
  for (const auto& v : run.toy.data.views) {
    worst_psnr = std::min(worst_psnr, psnr(render_tiled(s, v.camera).color, render_tiled(back, v.camera).color));
  }
  o.require(worst_psnr >= 40.0, "rendered PSNR");

  const double ratio = double(archive.byte_size()) / double(raw_checkpoint_size(s));
  o.require(ratio <= 0.25, "archive size");

  const auto big = coherent_scene(100000, 9);
  const auto t0 = Clock::now();
  const auto big_back = unpack(pack(big));
  const double secs = seconds_since(t0);
  o.require(big_back.size() == big.size(), "1e5 round trip");
  o.require(secs < 10.0, "1e5 runtime");
  o.detail << "positions bit-exact, max_err=" << fmt(worst_steps) << " half-steps, min_psnr=" << fmt(worst_psnr, "%.2f")
           << "dB (min 40) archive/raw=" << fmt(100 * ratio, "%.1f") << "% (max 25%) 1e5 pack+unpack="
           << fmt(secs, "%.2f") << "s";
}

// 10 ------------------------------------------------------------------------
void determinism(Outcome& o, int requested) {
  const int threads = requested > 0 ? requested : 2;
  ToyOptions topt;
  topt.views = 8;
  topt.width = topt.height = 48;
  const auto toy = make_toy("specular-ball", 11, topt);
  TrainConfig cfg = toy_config(threads);
  cfg.steps = 300;
  cfg.densify_from = 100;
  cfg.densify_until = 250;
  cfg.max_primitives = 800;
  auto run = [&] {
    Rng rng(12);
    auto init = init_random<float>(500, Vec3<double>::Constant(-1.2), Vec3<double>::Constant(1.2),
                                   AppearanceLayout::spherical_beta(2), rng);
    const auto scene = train(toy.data, init, cfg, rng).scene;
    RenderOptions ropt;
    ropt.threads = threads;
    std::string renders;
    for (const auto& v : toy.data.views) {
      const auto png = encode_png(to_png(render_tiled(scene, v.camera, ropt).color, 16));
      renders.append(png.begin(), png.end());
    }
    return std::make_pair(checkpoint_bytes(scene), renders);
  };
  const auto a = run();
  const auto b = run();
  o.require(a.first == b.first, "checkpoint bytes");
  o.require(a.second == b.second, "render bytes");
  o.detail << "threads=" << threads << " checkpoint " << a.first.size() << " bytes, renders " << a.second.size()
           << " bytes, identical across two runs";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance checks");
  int threads = 0;
  std::vector<int> only;
  app.add_option("--threads", threads, "Worker threads (0: hardware concurrency)");
  app.add_option("--only", only, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };

  ToyRun toy;
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"kernel gradients", kernel_gradients},
      {"gaussian likeness at b=0", gaussian_likeness},
      {"abel validity", abel_validity},
      {"densification preservation", densification},
      {"spherical beta accounting", lobe_accounting},
      {"rasterizer equivalence", [&](Outcome& o) { rasterizer_equivalence(o, threads); }},
      {"toy training", [&](Outcome& o) { toy_training(o, toy, threads); }},
      {"decomposition identities", [&](Outcome& o) { decomposition(o, threads); }},
      {"codec", [&](Outcome& o) {
         if (toy.trained.empty()) fit_toy(toy, threads);
         codec(o, toy);
       }},
      {"determinism", [&](Outcome& o) { determinism(o, threads); }},
  };

  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = int(k) + 1;
    if (!wanted(id)) continue;
    Outcome o;
    try {
      criteria[k].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[k].first << ": " << o.detail.str()
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
