// gwcnet: data generation, training, evaluation, inference, verification
// and the channel sweep.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "gwc/checkpoint.hpp"
#include "gwc/config.hpp"
#include "gwc/stereo_io.hpp"
#include "gwc/train.hpp"
#include "gwc/verify.hpp"

namespace fs = std::filesystem;
using namespace gwc;

namespace {

struct GenDataArgs {
  std::string out;
  std::int64_t count = 10;
  std::int64_t height = 64;
  std::int64_t width = 128;
  std::int64_t dmax = 32;
  double density = 1.0;
  int max_shapes = SyntheticConfig{}.max_shapes;
  int dot_size = SyntheticConfig{}.dot_size;
  std::string format = "png";
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string config, data, out, variant;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::string ckpt, data;
  std::uint64_t seed = 0;
};

struct InferArgs {
  std::string ckpt, left, right, out, png16;
  std::uint64_t seed = 0;
};

struct SweepArgs {
  std::string config, out, data;
  std::uint64_t seed = 0;
};

std::vector<StereoSample> load_manifest_samples(const std::string& manifest) {
  const auto entries = read_manifest(manifest);
  if (entries.empty()) throw ConfigError("manifest " + manifest + " lists no samples");
  std::vector<StereoSample> samples;
  samples.reserve(entries.size());
  for (const auto& e : entries) samples.push_back(load_sample(e));
  return samples;
}

int cmd_gen_data(const GenDataArgs& a) {
  if (a.count <= 0) throw ConfigError("--count must be positive");
  if (a.format != "png" && a.format != "ppm") throw ConfigError("--format must be png or ppm");
  SyntheticConfig sc;
  sc.height = a.height;
  sc.width = a.width;
  sc.d_max = a.dmax;
  sc.dot_density = a.density;
  sc.max_shapes = a.max_shapes;
  sc.dot_size = a.dot_size;
  sc.validate();
  fs::create_directories(a.out);
  std::vector<ManifestEntry> entries;
  for (std::int64_t i = 0; i < a.count; ++i) {
    sc.seed = sample_seed(a.seed, static_cast<std::uint64_t>(i));
    const RdsPair pair = generate_rds_images(sc);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "%05lld", static_cast<long long>(i));
    const std::string left = std::string("left_") + stem + "." + a.format;
    const std::string right = std::string("right_") + stem + "." + a.format;
    const std::string gt = std::string("disp_") + stem + ".pfm";
    const fs::path dir(a.out);
    if (a.format == "png") {
      write_png8((dir / left).string(), pair.left);
      write_png8((dir / right).string(), pair.right);
    } else {
      write_ppm((dir / left).string(), pair.left);
      write_ppm((dir / right).string(), pair.right);
    }
    // Occluded pixels are stored as +inf.
    Tensor<float> disp = pair.gt.values.clone();
    for (std::size_t k = 0; k < disp.numel(); ++k) {
      if (!pair.gt.is_valid(k)) disp.ptr()[k] = std::numeric_limits<float>::infinity();
    }
    write_pfm((dir / gt).string(), disp);
    entries.push_back({left, right, gt});
  }
  const std::string manifest = (fs::path(a.out) / "manifest.txt").string();
  write_manifest(manifest, entries);
  std::cout << manifest << '\n';
  return 0;
}

int cmd_train(const TrainArgs& a, bool seed_given) {
  RunConfig cfg = load_run_config(a.config);
  if (!a.variant.empty()) apply_variant(cfg.net, a.variant);
  if (seed_given) cfg.train.seed = a.seed;
  cfg.net.validate();
  const auto samples = load_manifest_samples(a.data);
  TrainOutputs outputs;
  outputs.out_dir = a.out;
  outputs.on_log = [](const LogRow& row) { std::cerr << log_csv_row(row) << '\n'; };
  std::cerr << "variant " << cfg.net.variant_name() << ", " << samples.size() << " samples\n";
  const TrainResult r = train(cfg.net, samples, cfg.train, outputs);
  if (r.skipped_samples) std::cerr << "skipped " << r.skipped_samples << " samples with too few valid pixels\n";
  std::printf("best_val_epe,best_iteration,parameters\n%.4f,%lld,%lld\n", r.best_val_epe,
              static_cast<long long>(r.best_iteration), static_cast<long long>(r.parameter_count));
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  auto model = load_checkpoint<float>(a.ckpt);
  const auto samples = load_manifest_samples(a.data);
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const EvalSummary s = evaluate_model(*model, samples, all, Normalization{});
  std::cerr << "evaluated " << s.evaluated << " images, skipped " << s.skipped << " with <10% valid pixels\n";
  if (s.evaluated == 0) throw NumericError("no image has enough valid pixels to evaluate");
  std::cout << MetricReport::csv_header() << '\n' << s.report.csv_row() << '\n';
  return 0;
}

int cmd_infer(const InferArgs& a) {
  auto model = load_checkpoint<float>(a.ckpt);
  const Image8 l = read_image8(a.left);
  const Image8 r = read_image8(a.right);
  if (l.height != r.height || l.width != r.width) {
    throw ShapeError("left image is " + std::to_string(l.height) + "x" + std::to_string(l.width) +
                     " but right image is " + std::to_string(r.height) + "x" + std::to_string(r.width));
  }
  const Tensor<float> disp = predict(*model, image_to_tensor(l), image_to_tensor(r), Normalization{});
  write_pfm(a.out, disp);
  if (!a.png16.empty()) write_kitti_png(a.png16, DisparityMap<float>{disp, {}});
  return 0;
}

int cmd_verify(std::uint64_t seed) {
  int failed = 0;
  run_verify_suites(seed, [&](const SuiteResult& r) {
    std::printf("%s %s measured=%.3g tolerance=%.3g time=%.2fs (%s)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                r.measured, r.tolerance, r.seconds, r.detail.c_str());
    std::fflush(stdout);
    failed += !r.passed;
  });
  if (failed) {
    std::fprintf(stderr, "error: verify: %d suite(s) failed\n", failed);
    return 1;
  }
  return 0;
}

int cmd_sweep(const SweepArgs& a, bool seed_given) {
  RunConfig cfg = load_run_config(a.config);
  if (seed_given) cfg.sweep.train.seed = a.seed;
  const std::string data = a.data.empty() ? cfg.data : a.data;
  std::vector<StereoSample> samples;
  if (!data.empty()) {
    samples = load_manifest_samples(data);
  } else {
    SyntheticConfig sc;
    sc.height = cfg.synthetic_height;
    sc.width = cfg.synthetic_width;
    sc.d_max = cfg.net.d_max;
    sc.dot_size = cfg.synthetic_dot_size;
    for (std::int64_t i = 0; i < cfg.synthetic_samples; ++i) {
      sc.seed = sample_seed(cfg.sweep.train.seed, static_cast<std::uint64_t>(i));
      samples.push_back(generate_rds(sc));
    }
  }
  std::FILE* out = std::fopen(a.out.c_str(), "w");
  if (!out) throw IoError("cannot write " + a.out);
  std::fprintf(out, "%s\n", sweep_csv_header().c_str());
  try {
    run_sweep(cfg.sweep, samples, [&](const SweepRow& row) {
      std::fprintf(out, "%s\n", sweep_csv_row(row).c_str());
      std::fflush(out);
      std::cerr << sweep_csv_row(row) << '\n';
    });
  } catch (...) {
    std::fclose(out);
    throw;
  }
  std::fclose(out);
  return 0;
}

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-wise correlation stereo network: data, training, evaluation and verification"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Write random-dot stereo pairs, PFM ground truth and a manifest");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--count", gen.count, "Number of samples")->capture_default_str();
  c_gen->add_option("--height", gen.height, "Image height")->capture_default_str();
  c_gen->add_option("--width", gen.width, "Image width")->capture_default_str();
  c_gen->add_option("--dmax", gen.dmax, "Disparities are drawn from [0, dmax)")->capture_default_str();
  c_gen->add_option("--density", gen.density, "Fraction of random dots, in (0, 1]")->capture_default_str();
  c_gen->add_option("--max-shapes", gen.max_shapes, "Maximum foreground shapes per sample")->capture_default_str();
  c_gen->add_option("--dot-size", gen.dot_size, "Side of the square dots in pixels")->capture_default_str();
  c_gen->add_option("--format", gen.format, "Image format: png or ppm")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "Dataset seed")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model; writes best.ckpt and log.csv");
  c_train->add_option("--config", tr.config, "key=value config file")->required();
  c_train->add_option("--data", tr.data, "Manifest (left TAB right TAB gt)")->required();
  c_train->add_option("--out", tr.out, "Output directory")->required();
  c_train->add_option("--variant", tr.variant, "gwc-cat, gwc or cat (overrides the config)");
  auto* train_seed = c_train->add_option("--seed", tr.seed, "Overrides the config seed");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint; prints a metric CSV");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  c_eval->add_option("--data", ev.data, "Manifest")->required();
  c_eval->add_option("--seed", ev.seed, "Unused; evaluation is deterministic")->capture_default_str();

  InferArgs inf;
  auto* c_infer = app.add_subcommand("infer", "Predict the disparity of one stereo pair");
  c_infer->add_option("--ckpt", inf.ckpt, "Checkpoint")->required();
  c_infer->add_option("--left", inf.left, "Left image (PNG or PPM)")->required();
  c_infer->add_option("--right", inf.right, "Right image (PNG or PPM)")->required();
  c_infer->add_option("--out", inf.out, "Output PFM")->required();
  c_infer->add_option("--png16", inf.png16, "Also write a 16-bit disparity PNG");
  c_infer->add_option("--seed", inf.seed, "Unused; inference is deterministic")->capture_default_str();

  std::uint64_t verify_seed = 0;
  auto* c_verify = app.add_subcommand("verify", "Run the oracle, gradient, shape and identity suites");
  c_verify->add_option("--seed", verify_seed, "Seed of the random test instances")->capture_default_str();

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "Train every (variant, base channels) cell and write a CSV table");
  c_sweep->add_option("--config", sw.config, "key=value config file")->required();
  c_sweep->add_option("--out", sw.out, "Output CSV")->required();
  c_sweep->add_option("--data", sw.data, "Manifest (default: the config's data key, else synthetic)");
  auto* sweep_seed = c_sweep->add_option("--seed", sw.seed, "Overrides the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (*c_gen) return cmd_gen_data(gen);
    if (*c_train) return cmd_train(tr, train_seed->count() > 0);
    if (*c_eval) return cmd_eval(ev);
    if (*c_infer) return cmd_infer(inf);
    if (*c_verify) return cmd_verify(verify_seed);
    if (*c_sweep) return cmd_sweep(sw, sweep_seed->count() > 0);
  } catch (const gwc::Error& e) {
    std::cerr << "error: " << e.code() << ": " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 1;
}
