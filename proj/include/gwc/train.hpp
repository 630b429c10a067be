#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gwc/loss_metrics.hpp"
#include "gwc/model.hpp"
#include "gwc/stereo_io.hpp"

namespace gwc {

enum class Precision { F32, F64 };

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  AdamConfig adam;
  std::int64_t batch_size = 2;
  std::int64_t max_iterations = 3000;
  /// Iteration counts after which the learning rate is divided by
  /// lr_decay_factor. Sorted ascending.
  std::vector<std::int64_t> milestones;
  double lr_decay_factor = 2.0;
  LossConfig loss;
  std::uint64_t seed = 0;
  Precision precision = Precision::F32;
  std::int64_t val_interval = 100;
  double val_fraction = 0.1;
  Normalization norm;

  void validate() const;
};

/// Learning rate once `completed` iterations (or epochs) are done: the
/// initial rate divided by factor^k, k = number of milestones <= completed.
double scheduled_lr(double initial, const std::vector<std::int64_t>& milestones, double factor,
                    std::int64_t completed);

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

/// One bias-corrected Adam update over `params`, in place. An empty gradient
/// counts as zero. Throws ShapeError when the state no longer matches.
template <typename T>
void adam_step(const std::vector<Parameter<T>>& params, AdamState<T>& state, const AdamConfig& cfg);

struct LogRow {
  std::int64_t iteration = 0;
  double lr = 0;
  double train_loss = 0;  // mean over the iterations since the previous row
  double val_epe = 0;
  double val_d1 = 0;
};

std::string log_csv_header();
std::string log_csv_row(const LogRow& row);

struct EvalSummary {
  MetricReport report;       // mean of per-image reports
  std::int64_t evaluated = 0;
  std::int64_t skipped = 0;  // images with too few valid pixels
};

/// Final-head disparity [H, W] for one pair of [3, H, W] images in [0, 1].
/// Inputs are zero-padded on the top and right to multiples of 16 and the
/// prediction is cropped back.
template <typename T>
Tensor<float> predict(GwcNet<T>& model, const Tensor<float>& left, const Tensor<float>& right,
                      const Normalization& norm);

/// Evaluates samples[indices] with running statistics and the final head.
template <typename T>
EvalSummary evaluate_model(GwcNet<T>& model, const std::vector<StereoSample>& samples,
                           const std::vector<std::size_t>& indices, const Normalization& norm);

struct TrainResult {
  std::vector<LogRow> log;
  double best_val_epe = 0;
  std::int64_t best_iteration = 0;
  std::int64_t parameter_count = 0;
  std::int64_t skipped_samples = 0;
  std::int64_t train_samples = 0;
  std::int64_t val_samples = 0;
};

struct TrainOutputs {
  /// When nonempty, log.csv and best.ckpt are written here.
  std::string out_dir;
  /// Called after every validation row.
  std::function<void(const LogRow&)> on_log;
};

/// Trains a fresh model seeded by cfg.seed. The last val_fraction of the
/// samples is held out for validation (the training set itself when that
/// rounds to zero). Samples failing the valid-pixel threshold are skipped.
/// A non-finite loss aborts with NumericError naming the last checkpoint.
TrainResult train(const NetworkConfig& net, const std::vector<StereoSample>& samples, const TrainConfig& cfg,
                  const TrainOutputs& outputs = {});

enum class SweepVariant { CatOnly, GwcCat };
std::string to_string(SweepVariant v);
SweepVariant parse_sweep_variant(const std::string& s);

struct SweepConfig {
  std::vector<std::int64_t> base_channels{32, 16, 8, 4, 2};
  std::vector<SweepVariant> variants{SweepVariant::CatOnly, SweepVariant::GwcCat};
  NetworkConfig reference;  // widths at reference.base_3d_channels
  TrainConfig train;
  void validate() const;
};

/// The architecture of one sweep cell: group count and concat channels scale
/// with base / reference.base_3d_channels (at least 1; groups rounded down to
/// a divisor of unary_channels). Concat-only keeps the same concat channels.
NetworkConfig sweep_network(const SweepConfig& cfg, SweepVariant variant, std::int64_t base);

struct SweepRow {
  SweepVariant variant;
  std::int64_t base_channels = 0;
  std::int64_t volume_channels = 0;
  std::int64_t parameter_count = 0;
  double epe = 0;
};

std::string sweep_csv_header();
std::string sweep_csv_row(const SweepRow& row);

/// Trains every (variant, width) cell under the same budget and data.
std::vector<SweepRow> run_sweep(const SweepConfig& cfg, const std::vector<StereoSample>& samples,
                                const std::function<void(const SweepRow&)>& on_row = {});

}  // namespace gwc
