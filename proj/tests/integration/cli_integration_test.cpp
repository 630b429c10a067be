#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "gwc/checkpoint.hpp"
#include "gwc/config.hpp"
#include "gwc/stereo_io.hpp"
#include "temp_dir.hpp"

using namespace gwc;
using gwc::testing::TempDir;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

RunResult run(const std::string& args) {
  TempDir io;
  const std::string cmd =
      std::string(GWCNET_BIN) + " " + args + " >" + io.file("out") + " 2>" + io.file("err");
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(io.file("out")), slurp(io.file("err"))};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// A tiny architecture so training runs take a few seconds.
const char* kTinyConfig =
    "lr = 0.001\nbatch_size = 2\nmax_iterations = 4\nval_interval = 2\nseed = 1\n"
    "unary_channels = 8\ngwc_groups = 2\nconcat_channels = 2\nd_max = 8\nbase_3d_channels = 2\n"
    "stage_blocks = 1,1,1,1\nmin_stem_channels = 4\n";

std::string gen_tiny(const TempDir& dir, const std::string& sub, int count) {
  const auto r = run("gen-data --out " + dir.file(sub) + " --count " + std::to_string(count) +
                     " --height 16 --width 32 --dmax 8 --seed 3");
  EXPECT_EQ(r.code, 0) << r.err;
  return dir.file(sub + "/manifest.txt");
}

// Writes one sample whose ground truth is `gt` (non-finite = invalid).
void write_sample(const TempDir& dir, const std::string& stem, const Tensor<float>& gt, std::ofstream& manifest) {
  SyntheticConfig cfg;
  cfg.height = gt.dim(0);
  cfg.width = gt.dim(1);
  cfg.d_max = 8;
  cfg.seed = 11;
  const auto pair = generate_rds_images(cfg);
  write_png8(dir.file(stem + "_l.png"), pair.left);
  write_png8(dir.file(stem + "_r.png"), pair.right);
  write_pfm(dir.file(stem + "_d.pfm"), gt);
  manifest << stem << "_l.png\t" << stem << "_r.png\t" << stem << "_d.pfm\n";
}

}  // namespace

TEST(Cli, HelpForEveryCommand) {
  for (const std::string cmd : {"gen-data", "train", "eval", "infer", "verify", "sweep"}) {
    const auto r = run(cmd + " --help");
    EXPECT_EQ(r.code, 0) << cmd;
    EXPECT_NE(r.out.find("--seed"), std::string::npos) << cmd;
  }
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, UsageErrorsAreOneLine) {
  for (const std::string args : {"gen-data --out x --bogus 1", "", "frobnicate", "eval --ckpt a"}) {
    const auto r = run(args);
    EXPECT_EQ(r.code, 2) << args;
    EXPECT_EQ(lines_of(r.err).size(), 1u) << r.err;
    EXPECT_EQ(r.err.rfind("error: usage: ", 0), 0u) << r.err;
  }
}

TEST(Cli, GenDataCountAndDeterminism) {
  TempDir dir;
  for (const std::string sub : {"a", "b"}) {
    const auto r = run("gen-data --out " + dir.file(sub) + " --count 10 --seed 5 --format ppm");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, dir.file(sub + "/manifest.txt") + "\n");
  }
  EXPECT_EQ(lines_of(slurp(dir.file("a/manifest.txt"))).size(), 10u);
  for (const std::string f : {"manifest.txt", "left_00000.ppm", "right_00009.ppm", "disp_00004.pfm"}) {
    const std::string a = slurp(dir.file("a/" + f));
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir.file("b/" + f))) << f;
  }
}

TEST(Cli, GenDataRejectsRangeNotBelowWidth) {
  TempDir dir;
  const auto r = run("gen-data --out " + dir.file("x") + " --dmax 32 --width 16");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: config: ", 0), 0u) << r.err;
  EXPECT_EQ(lines_of(r.err).size(), 1u);
}

TEST(Cli, TrainWritesCheckpointAndLog) {
  TempDir dir;
  const auto manifest = gen_tiny(dir, "data", 6);
  write_text(dir.file("tiny.cfg"), kTinyConfig);
  const auto r = run("train --config " + dir.file("tiny.cfg") + " --data " + manifest + " --out " + dir.file("run") +
                     " --variant cat");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir.file("run/best.ckpt")));
  const auto log = lines_of(slurp(dir.file("run/log.csv")));
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[0], "iteration,lr,train_loss,val_epe,val_d1");
  EXPECT_EQ(lines_of(r.out)[0], "best_val_epe,best_iteration,parameters");
  const auto cfg = checkpoint_config(read_archive(dir.file("run/best.ckpt")));
  EXPECT_FALSE(cfg.use_gwc_volume);
  EXPECT_TRUE(cfg.use_concat_volume);

  const auto r2 = run("train --config " + dir.file("tiny.cfg") + " --data " + manifest + " --out " +
                      dir.file("run2") + " --variant gwc-cat");
  ASSERT_EQ(r2.code, 0) << r2.err;
  const auto cfg2 = checkpoint_config(read_archive(dir.file("run2/best.ckpt")));
  EXPECT_TRUE(cfg2.use_gwc_volume && cfg2.use_concat_volume);
}

TEST(Cli, TrainConfigErrorsNameKeyAndLine) {
  TempDir dir;
  const auto manifest = gen_tiny(dir, "data", 2);
  write_text(dir.file("missing.cfg"), "lr = 0.001\nmax_iterations = 2\n");
  auto r = run("train --config " + dir.file("missing.cfg") + " --data " + manifest + " --out " + dir.file("o"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("batch_size"), std::string::npos) << r.err;
  write_text(dir.file("bad.cfg"), "lr = 0.001\nbatch_size = two\nmax_iterations = 2\n");
  r = run("train --config " + dir.file("bad.cfg") + " --data " + manifest + " --out " + dir.file("o"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("bad.cfg:2"), std::string::npos) << r.err;
  EXPECT_EQ(lines_of(r.err).size(), 1u);
}

TEST(Cli, EvalIdentityCheckpointSparseGroundTruthAndSkips) {
  // With its last convolution zeroed, the final head scores every disparity
  // equally and predicts (32 - 1) / 2 = 15.5 everywhere, exactly.
  TempDir dir;
  {
    GwcNet<float> net(NetworkConfig::desk_scale(), 1);
    for (auto& w : net.registry().find("output3.conv2.weight")->data()) w = 0;
    save_checkpoint(dir.file("identity.ckpt"), net);
  }
  const float inf = std::numeric_limits<float>::infinity();
  Tensor<float> dense(Shape{32, 64}, 15.5f);
  Tensor<float> sparse(Shape{32, 64}, inf);
  for (std::size_t i = 0; i < sparse.numel(); i += 3) sparse.data()[i] = 15.5f;
  Tensor<float> empty(Shape{32, 64}, inf);
  for (std::size_t i = 0; i < 50; ++i) empty.data()[i] = 3.0f;  // 2.4% valid
  {
    std::ofstream m(dir.file("manifest.txt"));
    write_sample(dir, "dense", dense, m);
    write_sample(dir, "sparse", sparse, m);
    write_sample(dir, "empty", empty, m);
  }
  const auto r = run("eval --ckpt " + dir.file("identity.ckpt") + " --data " + dir.file("manifest.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = lines_of(r.out);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], "epe,err1,err2,err3,err5,d1_all,valid_count");
  const std::int64_t sparse_valid = (32 * 64 + 2) / 3;
  EXPECT_EQ(out[1], "0.0000,0.00,0.00,0.00,0.00,0.00," + std::to_string(32 * 64 + sparse_valid));
  EXPECT_NE(r.err.find("skipped 1"), std::string::npos) << r.err;
}

TEST(Cli, InferPadsAndCrops) {
  TempDir dir;
  {
    GwcNet<float> net(NetworkConfig::desk_scale(), 2);
    save_checkpoint(dir.file("m.ckpt"), net);
  }
  SyntheticConfig cfg;
  cfg.height = 62;
  cfg.width = 126;
  cfg.seed = 4;
  const auto pair = generate_rds_images(cfg);
  write_png8(dir.file("l.png"), pair.left);
  write_ppm(dir.file("r.ppm"), pair.right);
  const auto r = run("infer --ckpt " + dir.file("m.ckpt") + " --left " + dir.file("l.png") + " --right " +
                     dir.file("r.ppm") + " --out " + dir.file("d.pfm") + " --png16 " + dir.file("d.png"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pfm = read_pfm(dir.file("d.pfm"));
  ASSERT_EQ(pfm.data.shape(), (Shape{62, 126}));
  for (float v : pfm.data.data()) {
    ASSERT_GE(v, 0.f);
    ASSERT_LE(v, 31.f);
  }
  std::int64_t h = 0, w = 0;
  read_png16(dir.file("d.png"), h, w);
  EXPECT_EQ(h, 62);
  EXPECT_EQ(w, 126);

  cfg.width = 120;
  write_png8(dir.file("narrow.png"), generate_rds_images(cfg).left);
  const auto bad = run("infer --ckpt " + dir.file("m.ckpt") + " --left " + dir.file("l.png") + " --right " +
                       dir.file("narrow.png") + " --out " + dir.file("x.pfm"));
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(bad.err.rfind("error: shape: ", 0), 0u) << bad.err;
}

TEST(Cli, SweepWritesOneRowPerCell) {
  TempDir dir;
  write_text(dir.file("sweep.cfg"), std::string(kTinyConfig) +
                                        "max_iterations = 1\nsweep_base_channels = 2,1\nsynthetic_samples = 4\n"
                                        "synthetic_height = 16\nsynthetic_width = 32\n");
  // max_iterations appears twice: a duplicate-key error names both lines.
  auto r = run("sweep --config " + dir.file("sweep.cfg") + " --out " + dir.file("s.csv"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("duplicate key 'max_iterations'"), std::string::npos) << r.err;

  std::string cfg = kTinyConfig;
  cfg.replace(cfg.find("max_iterations = 4"), 18, "max_iterations = 1");
  write_text(dir.file("sweep.cfg"),
             cfg + "sweep_base_channels = 2,1\nsynthetic_samples = 4\nsynthetic_height = 16\nsynthetic_width = 32\n");
  r = run("sweep --config " + dir.file("sweep.cfg") + " --out " + dir.file("s.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines_of(slurp(dir.file("s.csv")));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "variant,base_channels,volume_channels,parameter_count,epe");
  EXPECT_EQ(rows[1].rfind("cat,2,", 0), 0u) << rows[1];
  EXPECT_EQ(rows[4].rfind("gwc-cat,1,", 0), 0u) << rows[4];
}

TEST(Cli, VerifyPasses) {
  const auto r = run("verify --seed 0");
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto lines = lines_of(r.out);
  EXPECT_GE(lines.size(), 8u);
  bool degeneracy = false, gradients = false;
  for (const auto& l : lines) {
    EXPECT_EQ(l.rfind("PASS ", 0), 0u) << l;
    degeneracy |= l.find("degeneracy") != std::string::npos;
    gradients |= l.find("grad") != std::string::npos;
  }
  EXPECT_TRUE(degeneracy);
  EXPECT_TRUE(gradients);
}

TEST(Configs, ShippedFilesParse) {
  const auto desk = load_run_config(std::string(GWC_CONFIG_DIR) + "/desk.cfg");
  EXPECT_EQ(desk.net.unary_channels, 32);
  EXPECT_EQ(desk.train.milestones, (std::vector<std::int64_t>{2000, 2600}));
  const auto sweep = load_run_config(std::string(GWC_CONFIG_DIR) + "/sweep.cfg");
  EXPECT_EQ(sweep.sweep.base_channels, (std::vector<std::int64_t>{8, 4, 2}));
  EXPECT_EQ(sweep.sweep.variants.size(), 2u);
}
