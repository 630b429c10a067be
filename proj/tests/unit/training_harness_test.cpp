#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "gwc/checkpoint.hpp"
#include "gwc/config.hpp"
#include "gwc/train.hpp"
#include "temp_dir.hpp"

using namespace gwc;
using gwc::testing::TempDir;

namespace {

NetworkConfig tiny_net() {
  NetworkConfig n = NetworkConfig::desk_scale();
  n.unary_channels = 8;
  n.gwc_groups = 2;
  n.concat_channels = 2;
  n.d_max = 8;
  n.base_3d_channels = 2;
  n.stage_blocks = {1, 1, 1, 1};
  n.min_stem_channels = 4;
  return n;
}

std::vector<StereoSample> tiny_samples(std::size_t count, std::uint64_t seed) {
  std::vector<StereoSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    SyntheticConfig cfg;
    cfg.height = 16;
    cfg.width = 32;
    cfg.d_max = 8;
    cfg.seed = sample_seed(seed, i);
    out.push_back(generate_rds(cfg));
  }
  return out;
}

TrainConfig tiny_train(std::int64_t iterations) {
  TrainConfig t;
  t.max_iterations = iterations;
  t.val_interval = 2;
  t.seed = 3;
  return t;
}

std::vector<Parameter<double>> one_param(std::vector<double> value, std::vector<double> grad) {
  const Shape shape{static_cast<std::int64_t>(value.size())};
  Tensor<double> t(shape, std::move(value));
  t.set_requires_grad(true);
  if (!grad.empty()) std::copy(grad.begin(), grad.end(), t.mutable_grad().begin());
  return {{"p", t}};
}

}  // namespace

TEST(Schedule, MilestoneHalving) {
  EXPECT_DOUBLE_EQ(scheduled_lr(0.001, {10, 12, 14}, 2, 0), 0.001);
  EXPECT_DOUBLE_EQ(scheduled_lr(0.001, {10, 12, 14}, 2, 9), 0.001);
  EXPECT_DOUBLE_EQ(scheduled_lr(0.001, {10, 12, 14}, 2, 10), 0.0005);
  EXPECT_DOUBLE_EQ(scheduled_lr(0.001, {10, 12, 14}, 2, 14), 0.000125);
  EXPECT_DOUBLE_EQ(scheduled_lr(0.001, {10, 12, 14}, 2, 100), 0.000125);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double g : {1e-3, 0.5, -7.0, 300.0}) {
    auto p = one_param({1.0}, {g});
    AdamState<double> state;
    AdamConfig cfg;
    adam_step(p, state, cfg);
    EXPECT_NEAR(p[0].tensor.data()[0], 1.0 - std::copysign(cfg.lr, g), 1e-8) << g;
    EXPECT_EQ(state.step, 1);
  }
}

TEST(Adam, ZeroLearningRateAndZeroGradientLeaveParameters) {
  auto p = one_param({2.0, -3.0}, {0.7, -0.1});
  AdamState<double> state;
  AdamConfig zero;
  zero.lr = 0;
  adam_step(p, state, zero);
  EXPECT_EQ(p[0].tensor.data()[0], 2.0);
  EXPECT_EQ(p[0].tensor.data()[1], -3.0);

  auto q = one_param({5.0}, {});
  AdamState<double> qs;
  for (int i = 0; i < 3; ++i) adam_step(q, qs, AdamConfig{});
  EXPECT_EQ(q[0].tensor.data()[0], 5.0);
}

TEST(Adam, ConstantGradientDescends) {
  auto p = one_param({0.0}, {0.3});
  AdamState<double> state;
  double prev = 0;
  for (int i = 0; i < 50; ++i) {
    adam_step(p, state, AdamConfig{});
    EXPECT_LT(p[0].tensor.data()[0], prev);
    prev = p[0].tensor.data()[0];
  }
}

TEST(Adam, ShapeDriftIsAnError) {
  auto p = one_param({1.0}, {1.0});
  AdamState<double> state;
  adam_step(p, state, AdamConfig{});
  auto bigger = one_param({1.0, 2.0}, {1.0, 1.0});
  EXPECT_THROW(adam_step(bigger, state, AdamConfig{}), ShapeError);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  t.milestones = {5, 3};
  EXPECT_THROW(t.validate(), ConfigError);
  t.milestones = {};
  t.adam.lr = 0;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Train, DeterministicPerSeed) {
  const auto samples = tiny_samples(4, 1);
  const auto a = train(tiny_net(), samples, tiny_train(4));
  const auto b = train(tiny_net(), samples, tiny_train(4));
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_epe, b.log[i].val_epe);
    EXPECT_TRUE(std::isfinite(a.log[i].train_loss));
  }
  auto other = tiny_train(4);
  other.seed = 4;
  EXPECT_NE(train(tiny_net(), samples, other).log.back().train_loss, a.log.back().train_loss);
}

TEST(Train, WritesLogAndCheckpointThatReproducesEpe) {
  TempDir dir;
  const auto samples = tiny_samples(10, 2);
  TrainOutputs out;
  out.out_dir = dir.path().string();
  const auto r = train(tiny_net(), samples, tiny_train(4), out);
  EXPECT_EQ(r.train_samples, 9);
  EXPECT_EQ(r.val_samples, 1);
  ASSERT_TRUE(std::filesystem::exists(dir.file("best.ckpt")));
  std::ifstream log(dir.file("log.csv"));
  std::string header;
  std::getline(log, header);
  EXPECT_EQ(header, log_csv_header());

  auto model = load_checkpoint<float>(dir.file("best.ckpt"));
  const auto summary = evaluate_model(*model, samples, {9}, TrainConfig{}.norm);
  EXPECT_EQ(summary.report.epe, r.best_val_epe);
}

TEST(Train, SkipsSamplesWithTooFewValidPixels) {
  auto samples = tiny_samples(4, 3);
  for (std::size_t i = 0; i < samples[1].gt.valid.size(); ++i) samples[1].gt.valid[i] = i < 10 ? 1 : 0;
  const auto r = train(tiny_net(), samples, tiny_train(2));
  EXPECT_EQ(r.skipped_samples, 1);
  EXPECT_EQ(r.train_samples, 3);  // too few for a held-out split, so validation reuses them
  EXPECT_EQ(r.val_samples, 3);
}

TEST(Train, NonFiniteLossAborts) {
  auto samples = tiny_samples(2, 4);
  for (auto& v : samples[0].left.data()) v = std::numeric_limits<float>::quiet_NaN();
  for (auto& v : samples[1].left.data()) v = std::numeric_limits<float>::quiet_NaN();
  try {
    train(tiny_net(), samples, tiny_train(2));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("checkpoint"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, RoundTripBothPrecisions) {
  TempDir dir;
  GwcNet<double> net(tiny_net(), 9);
  save_checkpoint(dir.file("m.ckpt"), net);
  auto back = load_checkpoint<double>(dir.file("m.ckpt"));
  EXPECT_EQ(back->config().unary_channels, 8);
  EXPECT_EQ(back->config().min_stem_channels, 4);
  const auto& a = net.registry().parameters();
  const auto& b = back->registry().parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].name, b[i].name);
    for (std::size_t k = 0; k < a[i].tensor.numel(); ++k) ASSERT_EQ(a[i].tensor.data()[k], b[i].tensor.data()[k]);
  }
  EXPECT_THROW(load_checkpoint<float>(dir.file("missing.ckpt")), IoError);
}

TEST(Sweep, ChannelArithmeticAndMonotoneParameters) {
  SweepConfig cfg;
  cfg.reference = NetworkConfig::desk_scale();
  for (std::int64_t base : {32, 16, 8, 4, 2}) {
    const auto cat = sweep_network(cfg, SweepVariant::CatOnly, base);
    const auto gwc = sweep_network(cfg, SweepVariant::GwcCat, base);
    EXPECT_FALSE(cat.use_gwc_volume);
    EXPECT_TRUE(gwc.use_gwc_volume && gwc.use_concat_volume);
    EXPECT_EQ(gwc.volume_channels() - cat.volume_channels(), gwc.gwc_groups);
    EXPECT_EQ(cfg.reference.unary_channels % gwc.gwc_groups, 0);
  }
  EXPECT_EQ(sweep_network(cfg, SweepVariant::GwcCat, 8).gwc_groups, 8);
  EXPECT_EQ(sweep_network(cfg, SweepVariant::GwcCat, 4).gwc_groups, 4);
  EXPECT_EQ(sweep_network(cfg, SweepVariant::GwcCat, 4).concat_channels, 2);

  for (auto variant : {SweepVariant::CatOnly, SweepVariant::GwcCat}) {
    std::int64_t prev = std::numeric_limits<std::int64_t>::max();
    for (std::int64_t base : cfg.base_channels) {
      GwcNet<float> net(sweep_network(cfg, variant, base), 0);
      const auto count = net.registry().parameter_count();
      EXPECT_LT(count, prev) << to_string(variant) << " " << base;
      prev = count;
    }
  }
}

TEST(Sweep, EmitsOneRowPerCell) {
  SweepConfig cfg;
  cfg.reference = tiny_net();
  cfg.base_channels = {4, 2};
  cfg.train = tiny_train(1);
  std::vector<std::string> lines;
  const auto rows = run_sweep(cfg, tiny_samples(3, 5), [&](const SweepRow& r) { lines.push_back(sweep_csv_row(r)); });
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(lines.size(), 4u);
  EXPECT_EQ(rows[0].variant, SweepVariant::CatOnly);
  EXPECT_EQ(rows[0].base_channels, 4);
  EXPECT_GT(rows[0].parameter_count, rows[1].parameter_count);
  EXPECT_EQ(sweep_csv_header(), "variant,base_channels,volume_channels,parameter_count,epe");
  EXPECT_EQ(lines[0].rfind("cat,4,", 0), 0u) << lines[0];
  EXPECT_EQ(parse_sweep_variant("gwc-cat"), SweepVariant::GwcCat);
  EXPECT_THROW(parse_sweep_variant("gwc"), ConfigError);
}

TEST(Config, MissingKeyIsNamed) {
  try {
    parse_run_config(KeyValueFile::parse("lr = 0.001\nmax_iterations = 10\n", "run.cfg"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("batch_size"), std::string::npos) << e.what();
  }
}

TEST(Config, ErrorsCarryLineNumbers) {
  const std::string base = "lr = 0.001\nbatch_size = 2\nmax_iterations = 10\n";
  auto message = [&](const std::string& extra) {
    try {
      parse_run_config(KeyValueFile::parse(base + "# note\n" + extra, "run.cfg"));
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("batch_size = 3\n").find("run.cfg:5"), std::string::npos);
  EXPECT_NE(message("bogus = 1\n").find("run.cfg:5: unknown key 'bogus'"), std::string::npos);
  EXPECT_NE(message("seed = x\n").find("run.cfg:5"), std::string::npos);
  EXPECT_NE(message("no equals sign\n").find("run.cfg:5"), std::string::npos);
}

TEST(Config, ParsesEveryField) {
  const auto cfg = parse_run_config(KeyValueFile::parse(
      "# training\nlr = 0.002\nbatch_size = 4\nmax_iterations = 50  # short\nmilestones = 10, 20\n"
      "loss_weights = 1,1,1,1\nprecision = f64\nvariant = cat\nd_max = 16\nsweep_base_channels = 8,4,2\n"
      "sweep_variants = cat,gwc-cat\n",
      "a.cfg"));
  EXPECT_DOUBLE_EQ(cfg.train.adam.lr, 0.002);
  EXPECT_EQ(cfg.train.batch_size, 4);
  EXPECT_EQ(cfg.train.max_iterations, 50);
  EXPECT_EQ(cfg.train.milestones, (std::vector<std::int64_t>{10, 20}));
  EXPECT_EQ(cfg.train.precision, Precision::F64);
  EXPECT_FALSE(cfg.net.use_gwc_volume);
  EXPECT_EQ(cfg.net.d_max, 16);
  EXPECT_EQ(cfg.sweep.base_channels.size(), 3u);
  EXPECT_EQ(cfg.sweep.reference.d_max, 16);
}

TEST(Config, VariantSetsVolumeFlags) {
  NetworkConfig n = NetworkConfig::desk_scale();
  apply_variant(n, "cat");
  EXPECT_FALSE(n.use_gwc_volume);
  apply_variant(n, "gwc-cat");
  EXPECT_TRUE(n.use_gwc_volume && n.use_concat_volume);
  apply_variant(n, "gwc");
  EXPECT_FALSE(n.use_concat_volume);
  EXPECT_THROW(apply_variant(n, "psm"), ConfigError);
}
