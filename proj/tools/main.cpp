// dbs command-line interface. Exit codes: 0 success, 1 runtime failure,
// 2 usage or configuration error.

#include "dbs/dbs.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace dbs;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Vec3<double> parse_rgb(const std::string& text) {
  std::istringstream in(text);
  Vec3<double> c;
  char sep1 = 0, sep2 = 0;
  if (!(in >> c[0] >> sep1 >> c[1] >> sep2 >> c[2]) || sep1 != ',' || sep2 != ',') {
    throw UsageError("expected r,g,b but got '" + text + "'");
  }
  return c;
}

/// View name reduced to a safe file stem.
std::string file_stem(const std::string& name) {
  std::string stem = fs::path(name).stem().string();
  for (char& c : stem) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return stem.empty() ? "view" : stem;
}

std::vector<std::pair<std::string, Camera<float>>> select_cameras(const std::string& path,
                                                                  const std::vector<std::string>& wanted) {
  auto cams = load_cameras(path);
  if (wanted.empty()) return cams;
  std::vector<std::pair<std::string, Camera<float>>> out;
  for (const auto& w : wanted) {
    auto it = std::find_if(cams.begin(), cams.end(), [&](const auto& c) { return c.first == w || file_stem(c.first) == w; });
    if (it == cams.end()) {
      std::size_t idx = 0;
      const auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), idx);
      if (ec == std::errc() && p == w.data() + w.size() && idx < cams.size()) it = cams.begin() + std::ptrdiff_t(idx);
    }
    if (it == cams.end()) throw DomainError("camera '" + w + "' not found in '" + path + "'");
    out.push_back(*it);
  }
  return out;
}

void write_image(const std::string& path, const Image<float>& img, int bit_depth, PngTransfer transfer) {
  write_png(path, to_png(img, bit_depth, transfer));
}

std::string format_psnr(double p) {
  if (std::isinf(p)) return "inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << p;
  return os.str();
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string dataset, out, config;
  std::vector<std::string> overrides;
  std::string mode, background = "1,1,1";
  std::int64_t steps = -1;
};

int cmd_train(const TrainArgs& a, std::optional<std::uint64_t> seed, std::optional<int> threads) {
  RunConfig cfg;
  if (!a.config.empty()) cfg = parse_config(read_text_file(a.config));
  for (const auto& o : a.overrides) apply_override(cfg, o);
  if (!a.mode.empty()) set_config_value(cfg, "mode", a.mode);
  if (a.steps >= 0) cfg.train.steps = a.steps;
  if (seed) cfg.train.seed = *seed;
  if (threads) cfg.train.threads = *threads;
  cfg.validate();

  TransformsOptions topt;
  topt.background = parse_rgb(a.background);
  const Dataset data = load_dataset(a.dataset, topt);
  Rng rng(cfg.train.seed);
  Scene<float> init = initial_scene(cfg, data, rng);
  const TrainConfig tcfg = resolve_train_config(cfg, data);

  fs::create_directories(fs::path(a.out) / "renders");
  write_text_file((fs::path(a.out) / "config.txt").string(), format_config(cfg));
  const auto tests = data.test_indices();
  const std::size_t preview = tests.empty() ? data.train_indices().front() : tests.front();
  RenderOptions ropt;
  ropt.background = data.background;
  ropt.threads = tcfg.threads;

  std::cout << "training " << init.size() << " primitives on " << data.train_indices().size() << " views\n";
  const auto t0 = std::chrono::steady_clock::now();
  auto observer = [&](const TrainLogRow& row, const Scene<float>& scene) {
    if (!std::isnan(row.psnr)) {
      std::cout << "step " << row.step << " loss " << row.loss << " psnr " << format_psnr(row.psnr) << " primitives "
                << row.primitives << std::endl;
      const auto img = render_tiled(scene, data.views[preview].camera, ropt).color;
      std::ostringstream name;
      name << "step_" << std::setw(6) << std::setfill('0') << row.step << "_" << file_stem(data.views[preview].name)
           << ".png";
      write_image((fs::path(a.out) / "renders" / name.str()).string(), img, 8, PngTransfer::srgb);
    }
    return true;
  };
  const auto res = train(data, std::move(init), tcfg, rng, observer);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_checkpoint((fs::path(a.out) / "checkpoint.ply").string(), res.scene);
  std::ofstream csv(fs::path(a.out) / "metrics.csv");
  write_metrics_csv(csv, res.log);
  if (!csv) throw IoError("cannot write metrics.csv");
  std::cout << "steps " << res.steps_run << " seconds " << std::fixed << std::setprecision(1) << secs << "\n";
  if (!tests.empty()) {
    std::cout << "test_psnr " << format_psnr(mean_psnr(res.scene, data, tests, tcfg.threads)) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
  std::string checkpoint, cameras, out, background = "1,1,1", b_split;
  std::vector<std::string> views;
  bool diffuse_only = false, specular_only = false;
  std::optional<double> b_below, b_above;
  int bit_depth = 8;
  std::string transfer = "srgb";
};

int cmd_render(const RenderArgs& a, std::optional<int> threads) {
  if (a.diffuse_only && a.specular_only) throw UsageError("--diffuse-only and --specular-only are exclusive");
  if (!a.b_split.empty() && a.b_split != "mean") throw UsageError("--b-split only accepts 'mean'");
  if (a.bit_depth != 8 && a.bit_depth != 16) throw UsageError("--bit-depth must be 8 or 16");
  if (a.transfer != "srgb" && a.transfer != "linear") throw UsageError("--transfer must be srgb or linear");
  const PngTransfer transfer = a.transfer == "srgb" ? PngTransfer::srgb : PngTransfer::raw;
  const Scene<float> scene = load_checkpoint(a.checkpoint);
  const auto cams = select_cameras(a.cameras, a.views);
  RenderOptions opt;
  opt.background = parse_rgb(a.background);
  opt.threads = threads.value_or(0);
  opt.mode = a.diffuse_only ? ColorMode::diffuse : a.specular_only ? ColorMode::specular : ColorMode::full;
  const std::string suffix = a.diffuse_only ? "_diffuse" : a.specular_only ? "_specular" : "";

  std::vector<std::pair<std::string, std::function<bool(std::size_t)>>> passes;
  if (!a.b_split.empty()) {
    const float t = mean_shape(scene);
    std::cout << "b_threshold " << t << "\n";
    passes.emplace_back("_b_below", shape_mask(scene, t, true));
    passes.emplace_back("_b_above", shape_mask(scene, t, false));
  } else if (a.b_below) {
    passes.emplace_back("_b_below", shape_mask(scene, float(*a.b_below), true));
  } else if (a.b_above) {
    passes.emplace_back("_b_above", shape_mask(scene, float(*a.b_above), false));
  } else {
    passes.emplace_back("", nullptr);
  }
  fs::create_directories(a.out);
  for (const auto& [name, cam] : cams) {
    for (const auto& [mask_suffix, mask] : passes) {
      RenderOptions o = opt;
      o.mask = mask;
      const auto img = render_tiled(scene, cam, o).color;
      const fs::path path = fs::path(a.out) / (file_stem(name) + suffix + mask_suffix + ".png");
      write_image(path.string(), img, a.bit_depth, transfer);
      std::cout << path.string() << "\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_eval(const std::string& checkpoint, const std::string& dataset, const std::string& out,
             const std::string& split, std::optional<int> threads) {
  const Scene<float> scene = load_checkpoint(checkpoint);
  const Dataset data = load_dataset(dataset);
  std::vector<std::size_t> views;
  if (split == "test") {
    views = data.test_indices();
  } else if (split == "train") {
    views = data.train_indices();
  } else if (split == "all") {
    views.resize(data.views.size());
    std::iota(views.begin(), views.end(), std::size_t{0});
  } else {
    throw UsageError("--split must be test, train or all");
  }
  RenderOptions opt;
  opt.background = data.background;
  opt.threads = threads.value_or(0);
  std::ostringstream csv;
  csv << "view,psnr,ssim\n";
  std::cout << std::left << std::setw(24) << "view" << std::setw(12) << "psnr"
            << "ssim\n";
  double sum_psnr = 0.0, sum_ssim = 0.0;
  for (std::size_t v : views) {
    const auto img = render_tiled(scene, data.views[v].camera, opt).color;
    const double p = psnr(img, data.views[v].image);
    const double s = ssim_value(img, data.views[v].image);
    sum_psnr += p;
    sum_ssim += s;
    csv << data.views[v].name << "," << format_psnr(p) << "," << std::setprecision(6) << std::fixed << s << "\n";
    std::cout << std::left << std::setw(24) << data.views[v].name << std::setw(12) << format_psnr(p) << std::fixed
              << std::setprecision(6) << s << "\n";
  }
  const double n = double(std::max<std::size_t>(views.size(), 1));
  csv << "mean," << format_psnr(sum_psnr / n) << "," << std::setprecision(6) << std::fixed << sum_ssim / n << "\n";
  std::cout << std::left << std::setw(24) << "mean" << std::setw(12) << format_psnr(sum_psnr / n) << std::fixed
            << std::setprecision(6) << sum_ssim / n << "\n";
  if (!out.empty()) write_text_file(out, csv.str());
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_compress(const std::string& checkpoint, const std::string& out, bool no_sort, int level) {
  const Scene<float> scene = load_checkpoint(checkpoint);
  PackOptions opt;
  opt.sort = !no_sort;
  opt.png_level = level;
  const auto t0 = std::chrono::steady_clock::now();
  const auto archive = pack(scene, opt);
  write_archive(out, archive);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::size_t raw = fs::file_size(checkpoint);
  const std::size_t size = archive.byte_size();
  std::cout << "primitives " << scene.size() << "\nraw_bytes " << raw << "\narchive_bytes " << size << "\nratio "
            << std::fixed << std::setprecision(3) << double(raw) / double(size) << "\nseconds " << std::setprecision(3)
            << secs << "\n";
  return 0;
}

int cmd_decompress(const std::string& archive_dir, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const Scene<float> scene = unpack(read_archive(archive_dir));
  save_checkpoint(out, scene);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "primitives " << scene.size() << "\nseconds " << std::fixed << std::setprecision(3) << secs << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

RadialProfile parse_profile_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  RadialProfile p;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double r, v;
    if (!(ls >> r >> v)) {
      if (p.radii.empty() && line.find_first_of("0123456789") == std::string::npos) continue;  // header
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected 'radius,value'");
    }
    if (!p.radii.empty() && !(r > p.radii.back())) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": radii must be strictly increasing");
    }
    p.radii.push_back(r);
    p.values.push_back(v);
  }
  try {
    p.validate();
  } catch (const DomainError& e) {
    throw UsageError(path + ": " + e.what());
  }
  return p;
}

RadialProfile parse_profile(const std::string& spec, std::size_t samples) {
  auto parse_double = [&](const std::string& t) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) throw UsageError("invalid number '" + t + "' in '" + spec + "'");
    return v;
  };
  if (spec.rfind("beta:b=", 0) == 0) {
    const double b = parse_double(spec.substr(7));
    return RadialProfile::sample([b](double r) { return beta_eval(std::min(1.0, r * r), b); }, samples);
  }
  if (spec.rfind("power:beta=", 0) == 0) return RadialProfile::beta_2d(parse_double(spec.substr(11)), samples);
  if (spec == "gaussian") return RadialProfile::sample([](double r) { return gaussian_reference(r * r); }, samples);
  if (spec == "constant") return RadialProfile::sample([](double) { return 1.0; }, samples);
  if (spec == "step") return RadialProfile::sample([](double r) { return r < 0.5 ? 1.0 : 0.0; }, samples);
  if (spec == "hemisphere") {
    return RadialProfile::sample([](double r) { return std::sqrt(std::max(0.0, 1.0 - r * r)); }, samples);
  }
  if (fs::exists(spec)) return parse_profile_csv(spec);
  throw UsageError("unknown profile '" + spec +
                   "' (expected beta:b=<v>, power:beta=<v>, gaussian, constant, step, hemisphere or a CSV file)");
}

int cmd_validate_kernel(const std::string& spec, std::size_t samples, const std::string& format) {
  if (format != "table" && format != "kv") throw UsageError("--format must be table or kv");
  if (samples < 2) throw UsageError("--samples must be at least 2");
  const RadialProfile profile = parse_profile(spec, samples);
  ConditionReport report = validate_kernel_conditions(profile);
  if (report.all_passed()) {
    const RadialProfile k3 = inverse_abel(profile);
    double err = 0.0;
    for (std::size_t i = 0; i < profile.size(); ++i) {
      err = std::max(err, std::abs(forward_abel(k3, profile.radii[i]) - profile.values[i]));
    }
    report.entries.push_back({"abel_round_trip", err <= 1e-3, err, "forward(inverse(K)) L-inf error <= 1e-3"});
  }
  std::cout << (format == "kv" ? report.to_key_value() : report.to_text());
  return report.all_passed() ? 0 : 1;
}

// ---------------------------------------------------------------------------

int cmd_make_toy(const std::string& out, const std::string& preset, std::uint64_t seed, const ToyOptions& opt) {
  if (opt.views < 8 || opt.views > 32) throw UsageError("--views must lie in [8, 32]");
  if (opt.width < 8 || opt.height < 8) throw UsageError("--width and --height must be at least 8");
  const auto presets = toy_presets();
  if (std::find(presets.begin(), presets.end(), preset) == presets.end()) {
    std::string all;
    for (const auto& p : presets) all += " " + p;
    throw UsageError("unknown preset '" + preset + "'; available:" + all);
  }
  const ToyDataset toy = make_toy(preset, seed, opt);
  save_dataset(out, toy.data);
  save_checkpoint((fs::path(out) / "ground_truth.ply").string(), toy.truth);
  std::cout << "views " << toy.data.views.size() << " (test " << toy.data.test_indices().size() << ")\nprimitives "
            << toy.truth.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string checkpoint, cameras, view = "0";
  std::size_t synthetic = 0;
  int width = 800, height = 800, repeats = 5;
};

int cmd_bench(const BenchArgs& a, std::optional<std::uint64_t> seed, std::optional<int> threads) {
  if (a.repeats < 1) throw UsageError("--repeats must be at least 1");
  Scene<float> scene;
  Camera<float> cam;
  if (a.synthetic > 0) {
    Rng rng(seed.value_or(0));
    scene = init_random<float>(a.synthetic, Vec3<double>::Constant(-1.0), Vec3<double>::Constant(1.0),
                               AppearanceLayout::spherical_beta(2), rng);
    // Small footprints, as in a trained scene of this size.
    const float ls = std::log(0.5f / std::cbrt(float(a.synthetic)));
    for (auto& s : scene.scale) s = ls;
    for (auto& o : scene.opacity) o = 0.0f;
    cam = Camera<float>::look_at(Vec3<double>(0.0, -3.5, 1.0), Vec3<double>::Zero(), Vec3<double>::UnitZ(), 0.8,
                                 a.width, a.height);
  } else {
    if (a.checkpoint.empty() || a.cameras.empty()) throw UsageError("bench needs --checkpoint and --cameras, or --synthetic");
    scene = load_checkpoint(a.checkpoint);
    cam = select_cameras(a.cameras, {a.view}).front().second;
  }
  RenderOptions opt;
  opt.threads = threads.value_or(0);
  auto time_path = [&](bool tiled) {
    std::vector<double> ms;
    for (int r = 0; r < a.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto out = tiled ? render_tiled(scene, cam, opt) : render_reference(scene, cam, opt);
      ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    const double median = ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
    const std::size_t i95 = std::min(ms.size() - 1, static_cast<std::size_t>(std::ceil(0.95 * double(ms.size()))) - 1);
    return std::pair<double, double>(median, ms[i95]);
  };
  const auto ref = time_path(false);
  const auto tiled = time_path(true);
  std::cout << "path,primitives,width,height,repeats,median_ms,p95_ms\n" << std::fixed << std::setprecision(3);
  std::cout << "reference," << scene.size() << "," << cam.width << "," << cam.height << "," << a.repeats << ","
            << ref.first << "," << ref.second << "\n";
  std::cout << "tiled," << scene.size() << "," << cam.width << "," << cam.height << "," << a.repeats << ","
            << tiled.first << "," << tiled.second << "\n";
  if (scene.size() >= 10000 && tiled.first > ref.first) {
    std::cerr << "error: tiled renderer slower than reference on " << scene.size() << " primitives\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) throw UsageError("invalid number '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

int cmd_densify_report(const std::string& out, const std::string& bs, const std::string& ns, double o_min, double o_max,
                       int o_steps) {
  if (!(o_min > 0.0 && o_max < 1.0 && o_min <= o_max) || o_steps < 1) {
    throw UsageError("opacity range must satisfy 0 < o-min <= o-max < 1 with o-steps >= 1");
  }
  std::ostringstream csv;
  csv << "b,n,o,new_opacity,preservation_error,bound_2o2\n" << std::setprecision(10);
  for (double b : parse_list(bs)) {
    for (double nd : parse_list(ns)) {
      const int n = static_cast<int>(nd);
      if (n < 1 || double(n) != nd) throw UsageError("--n values must be positive integers");
      for (int k = 0; k < o_steps; ++k) {
        const double o = o_steps == 1 ? o_min : o_min * std::pow(o_max / o_min, double(k) / double(o_steps - 1));
        csv << b << "," << n << "," << o << "," << new_opacity(o, n) << "," << preservation_error(b, o, n) << ","
            << 2 * o * o << "\n";
      }
    }
  }
  if (out.empty() || out == "-") {
    std::cout << csv.str();
  } else {
    write_text_file(out, csv.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformable Beta Splatting reference implementation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--seed", seed, "Random seed")->expected(1);
  app.add_option("--threads", threads, "Worker threads (default: DBS_THREADS or hardware concurrency)")
      ->check(CLI::NonNegativeNumber);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a scene on a dataset directory");
  train_cmd->add_option("dataset", ta.dataset, "Dataset directory (transforms*.json, images, points3D)")->required();
  train_cmd->add_option("--out,-o", ta.out, "Output directory")->required();
  train_cmd->add_option("--config,-c", ta.config, "key = value config file");
  train_cmd->add_option("--set", ta.overrides, "Config override key=value (repeatable)");
  train_cmd->add_option("--mode", ta.mode, "30k (fixed steps) or full (patience stopping)");
  train_cmd->add_option("--steps", ta.steps, "Fixed-mode step count");
  train_cmd->add_option("--background", ta.background, "Background r,g,b for alpha compositing");

  RenderArgs ra;
  auto* render_cmd = app.add_subcommand("render", "Render a checkpoint from transforms cameras");
  render_cmd->add_option("checkpoint", ra.checkpoint, "Checkpoint PLY")->required();
  render_cmd->add_option("--cameras", ra.cameras, "transforms JSON with the cameras")->required();
  render_cmd->add_option("--out,-o", ra.out, "Output directory")->required();
  render_cmd->add_option("--view", ra.views, "View name or index (repeatable; default all)");
  render_cmd->add_flag("--diffuse-only", ra.diffuse_only, "Render the diffuse (base color) component");
  render_cmd->add_flag("--specular-only", ra.specular_only, "Render the specular (lobe) component");
  auto* below = render_cmd->add_option("--b-below", ra.b_below, "Only primitives with shape b below T");
  auto* above = render_cmd->add_option("--b-above", ra.b_above, "Only primitives with shape b at or above T");
  auto* split = render_cmd->add_option("--b-split", ra.b_split, "'mean': render the b < mean and b >= mean halves");
  below->excludes(above)->excludes(split);
  above->excludes(split);
  render_cmd->add_option("--background", ra.background, "Background r,g,b");
  render_cmd->add_option("--bit-depth", ra.bit_depth, "PNG bit depth, 8 or 16");
  render_cmd->add_option("--transfer", ra.transfer, "srgb or linear PNG encoding");

  std::string ev_ckpt, ev_data, ev_out, ev_split = "test";
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint on a dataset split");
  eval_cmd->add_option("checkpoint", ev_ckpt, "Checkpoint PLY")->required();
  eval_cmd->add_option("dataset", ev_data, "Dataset directory")->required();
  eval_cmd->add_option("--out,-o", ev_out, "CSV output (view,psnr,ssim)");
  eval_cmd->add_option("--split", ev_split, "test, train or all");

  std::string cp_in, cp_out;
  bool no_sort = false;
  int level = 9;
  auto* compress_cmd = app.add_subcommand("compress", "Pack a checkpoint into a PNG archive directory");
  compress_cmd->add_option("checkpoint", cp_in, "Checkpoint PLY")->required();
  compress_cmd->add_option("archive", cp_out, "Archive directory")->required();
  compress_cmd->add_flag("--no-sort", no_sort, "Disable Morton ordering");
  compress_cmd->add_option("--level", level, "PNG compression level 0-9")->check(CLI::Range(0, 9));

  std::string dc_in, dc_out;
  auto* decompress_cmd = app.add_subcommand("decompress", "Unpack an archive directory into a checkpoint");
  decompress_cmd->add_option("archive", dc_in, "Archive directory")->required();
  decompress_cmd->add_option("checkpoint", dc_out, "Output checkpoint PLY")->required();

  std::string vk_spec, vk_format = "table";
  std::size_t vk_samples = 512;
  auto* vk_cmd = app.add_subcommand("validate-kernel", "Check the splatting-kernel conditions of a radial profile");
  vk_cmd->add_option("profile", vk_spec,
                     "beta:b=<v>, power:beta=<v>, gaussian, constant, step, hemisphere, or a radius,value CSV file")
      ->required();
  vk_cmd->add_option("--samples", vk_samples, "Grid size for builtin profiles");
  vk_cmd->add_option("--format", vk_format, "table or kv");

  std::string toy_out, toy_preset = "spheres";
  ToyOptions toy_opt;
  auto* toy_cmd = app.add_subcommand("make-toy", "Generate a synthetic dataset from a ground-truth scene");
  toy_cmd->add_option("out", toy_out, "Output directory")->required();
  toy_cmd->add_option("--preset", toy_preset, "spheres, box-room or specular-ball");
  toy_cmd->add_option("--views", toy_opt.views, "Number of ring views (8-32)");
  toy_cmd->add_option("--width", toy_opt.width, "Image width");
  toy_cmd->add_option("--height", toy_opt.height, "Image height");
  toy_cmd->add_option("--test-every", toy_opt.test_every, "Every k-th view is a test view");

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Time the reference and tiled renderers");
  bench_cmd->add_option("--checkpoint", ba.checkpoint, "Checkpoint PLY");
  bench_cmd->add_option("--cameras", ba.cameras, "transforms JSON with the camera");
  bench_cmd->add_option("--view", ba.view, "View name or index");
  bench_cmd->add_option("--synthetic", ba.synthetic, "Bench a random scene of N primitives instead");
  bench_cmd->add_option("--width", ba.width, "Synthetic camera width");
  bench_cmd->add_option("--height", ba.height, "Synthetic camera height");
  bench_cmd->add_option("--repeats", ba.repeats, "Timed renders per path");

  std::string dr_out, dr_b = "-2,0,2", dr_n = "2,4,8";
  double dr_omin = 0.005, dr_omax = 0.2;
  int dr_steps = 40;
  auto* dr_cmd = app.add_subcommand("densify-report", "CSV sweep of the densification preservation error");
  dr_cmd->add_option("--out,-o", dr_out, "CSV path (default stdout)");
  dr_cmd->add_option("--b", dr_b, "Comma-separated shape values");
  dr_cmd->add_option("--n", dr_n, "Comma-separated copy counts");
  dr_cmd->add_option("--o-min", dr_omin, "Smallest opacity");
  dr_cmd->add_option("--o-max", dr_omax, "Largest opacity");
  dr_cmd->add_option("--o-steps", dr_steps, "Log-spaced opacity samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(ta, seed, threads);
    if (*render_cmd) return cmd_render(ra, threads);
    if (*eval_cmd) return cmd_eval(ev_ckpt, ev_data, ev_out, ev_split, threads);
    if (*compress_cmd) return cmd_compress(cp_in, cp_out, no_sort, level);
    if (*decompress_cmd) return cmd_decompress(dc_in, dc_out);
    if (*vk_cmd) return cmd_validate_kernel(vk_spec, vk_samples, vk_format);
    if (*toy_cmd) return cmd_make_toy(toy_out, toy_preset, seed.value_or(0), toy_opt);
    if (*bench_cmd) return cmd_bench(ba, seed, threads);
    if (*dr_cmd) return cmd_densify_report(dr_out, dr_b, dr_n, dr_omin, dr_omax, dr_steps);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
