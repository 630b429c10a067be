#include "gwc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "gwc/checkpoint.hpp"
#include "gwc/ops.hpp"

namespace gwc {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(adam.lr > 0)) throw ConfigError("lr must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0 && adam.beta2 < 1)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(adam.eps > 0)) throw ConfigError("adam_eps must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (max_iterations <= 0) throw ConfigError("max_iterations must be positive");
  if (!std::is_sorted(milestones.begin(), milestones.end())) throw ConfigError("milestones must be sorted ascending");
  if (!(lr_decay_factor > 0)) throw ConfigError("lr_decay_factor must be positive");
  if (val_interval <= 0) throw ConfigError("val_interval must be positive");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("val_fraction must lie in [0, 1)");
  if (!(norm.std > 0)) throw ConfigError("norm_std must be positive");
  loss.validate();
}

double scheduled_lr(double initial, const std::vector<std::int64_t>& milestones, double factor,
                    std::int64_t completed) {
  double lr = initial;
  for (auto m : milestones) {
    if (completed >= m) lr /= factor;
  }
  return lr;
}

template <typename T>
void adam_step(const std::vector<Parameter<T>>& params, AdamState<T>& state, const AdamConfig& cfg) {
  if (state.m.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), T(0));
      state.v.emplace_back(p.tensor.numel(), T(0));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                     std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T> p = params[k].tensor;
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.numel() || v.size() != p.numel()) {
      throw ShapeError("adam_step: state for '" + params[k].name + "' has " + std::to_string(m.size()) +
                       " elements, parameter has " + std::to_string(p.numel()));
    }
    auto data = p.data();
    auto grad = p.grad();
    const bool has = !grad.empty();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const T g = has ? grad[i] : T(0);
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const T mh = m[i] / c1;
      const T vh = v[i] / c2;
      data[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

std::string log_csv_header() { return "iteration,lr,train_loss,val_epe,val_d1"; }

std::string log_csv_row(const LogRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.6f,%.6f,%.4f", static_cast<long long>(r.iteration), r.lr,
                r.train_loss, r.val_epe, r.val_d1);
  return buf;
}

template <typename T>
Tensor<float> predict(GwcNet<T>& model, const Tensor<float>& left, const Tensor<float>& right,
                      const Normalization& norm) {
  if (left.shape() != right.shape()) {
    throw ShapeError("left/right images differ in size: " + shape_str(left.shape()) + " vs " +
                     shape_str(right.shape()));
  }
  if (left.rank() != 3 || left.dim(0) != 3) throw ShapeError("predict: expected [3, H, W], got " + shape_str(left.shape()));
  NoGradGuard no_grad;
  const std::int64_t H = left.dim(1), W = left.dim(2);
  auto prepare = [&](const Tensor<float>& img) {
    Tensor<T> t(Shape{1, 3, H, W});
    for (std::size_t i = 0; i < img.numel(); ++i) t.ptr()[i] = static_cast<T>((img.ptr()[i] - norm.mean) / norm.std);
    return pad_top_right(t, 16);
  };
  const auto l = prepare(left);
  const auto r = prepare(right);
  const std::int64_t top = l.dim(2) - H;
  auto pred = model.forward(l, r, ForwardMode::infer());
  const auto cropped = slice(slice(pred.final_disparity(), 1, top, H), 2, 0, W);
  Tensor<float> out(Shape{H, W});
  for (std::size_t i = 0; i < out.numel(); ++i) out.ptr()[i] = static_cast<float>(cropped.ptr()[i]);
  return out;
}

template <typename T>
EvalSummary evaluate_model(GwcNet<T>& model, const std::vector<StereoSample>& samples,
                           const std::vector<std::size_t>& indices, const Normalization& norm) {
  EvalSummary summary;
  std::vector<MetricReport> reports;
  for (auto idx : indices) {
    const auto& s = samples.at(idx);
    auto filtered = filter_valid(s.gt, model.config().d_max);
    if (!filtered.passes) {
      ++summary.skipped;
      continue;
    }
    DisparityMap<float> pred;
    pred.values = predict(model, s.left, s.right, norm);
    reports.push_back(evaluate(pred, filtered.gt));
  }
  summary.evaluated = static_cast<std::int64_t>(reports.size());
  summary.report = average_reports(reports);
  return summary;
}

namespace {

template <typename T>
TrainResult train_impl(const NetworkConfig& net, const std::vector<StereoSample>& all, const TrainConfig& cfg,
                       const TrainOutputs& outputs) {
  cfg.validate();
  net.validate();
  TrainResult result;

  // Samples below the valid-pixel threshold never reach the loss.
  std::vector<StereoSample> samples;
  for (const auto& s : all) {
    auto f = filter_valid(s.gt, net.d_max);
    if (!f.passes) {
      ++result.skipped_samples;
      continue;
    }
    StereoSample kept = s;
    kept.gt = f.gt;
    samples.push_back(std::move(kept));
  }
  if (samples.empty()) throw ConfigError("no usable training samples");

  const std::size_t n = samples.size();
  const std::size_t n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * cfg.val_fraction));
  std::vector<std::size_t> train_idx(n - n_val), val_idx;
  std::iota(train_idx.begin(), train_idx.end(), 0);
  for (std::size_t i = n - n_val; i < n; ++i) val_idx.push_back(i);
  if (val_idx.empty()) val_idx = train_idx;
  result.train_samples = static_cast<std::int64_t>(train_idx.size());
  result.val_samples = static_cast<std::int64_t>(val_idx.size());

  GwcNet<T> model(net, cfg.seed);
  result.parameter_count = model.registry().parameter_count();
  AdamState<T> opt;
  std::mt19937_64 order_rng(sample_seed(cfg.seed, 0x5eed));

  std::ofstream log;
  std::string best_path;
  if (!outputs.out_dir.empty()) {
    fs::create_directories(outputs.out_dir);
    const std::string log_path = (fs::path(outputs.out_dir) / "log.csv").string();
    log.open(log_path);
    if (!log) throw IoError("cannot write " + log_path);
    log << log_csv_header() << '\n';
    best_path = (fs::path(outputs.out_dir) / "best.ckpt").string();
  }
  std::string last_saved;

  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  double loss_sum = 0;
  std::int64_t loss_count = 0;
  result.best_val_epe = std::numeric_limits<double>::infinity();
  const auto B = static_cast<std::size_t>(cfg.batch_size);

  for (std::int64_t it = 1; it <= cfg.max_iterations; ++it) {
    if (cursor >= order.size()) {
      order = train_idx;
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    std::vector<std::size_t> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), cursor + B)));
    cursor += B;
    const auto batch = make_batch<T>(samples, batch_idx, cfg.norm);
    AdamConfig step_cfg = cfg.adam;
    step_cfg.lr = scheduled_lr(cfg.adam.lr, cfg.milestones, cfg.lr_decay_factor, it - 1);

    model.registry().zero_grad();
    auto pred = model.forward(batch.left, batch.right, ForwardMode::train());
    auto loss = total_loss(pred.disparities, batch.gt, cfg.loss);
    const double lv = static_cast<double>(loss.item());
    if (!std::isfinite(lv)) {
      throw NumericError("non-finite training loss at iteration " + std::to_string(it) + "; last good checkpoint: " +
                         (last_saved.empty() ? std::string("none") : last_saved));
    }
    loss.backward();
    adam_step(model.registry().parameters(), opt, step_cfg);
    loss_sum += lv;
    ++loss_count;

    if (it % cfg.val_interval == 0 || it == cfg.max_iterations) {
      const auto summary = evaluate_model(model, samples, val_idx, cfg.norm);
      LogRow row;
      row.iteration = it;
      row.lr = step_cfg.lr;
      row.train_loss = loss_sum / static_cast<double>(loss_count);
      row.val_epe = summary.report.epe;
      row.val_d1 = summary.report.d1_all;
      loss_sum = 0;
      loss_count = 0;
      result.log.push_back(row);
      if (log) log << log_csv_row(row) << '\n' << std::flush;
      if (row.val_epe < result.best_val_epe) {
        result.best_val_epe = row.val_epe;
        result.best_iteration = it;
        if (!best_path.empty()) {
          save_checkpoint(best_path, model);
          last_saved = best_path;
        }
      }
      if (outputs.on_log) outputs.on_log(row);
    }
  }
  return result;
}

}  // namespace

TrainResult train(const NetworkConfig& net, const std::vector<StereoSample>& samples, const TrainConfig& cfg,
                  const TrainOutputs& outputs) {
  return cfg.precision == Precision::F64 ? train_impl<double>(net, samples, cfg, outputs)
                                         : train_impl<float>(net, samples, cfg, outputs);
}

std::string to_string(SweepVariant v) { return v == SweepVariant::CatOnly ? "cat" : "gwc-cat"; }

SweepVariant parse_sweep_variant(const std::string& s) {
  if (s == "cat") return SweepVariant::CatOnly;
  if (s == "gwc-cat") return SweepVariant::GwcCat;
  throw ConfigError("unknown sweep variant '" + s + "' (expected cat or gwc-cat)");
}

void SweepConfig::validate() const {
  if (base_channels.empty()) throw ConfigError("sweep needs at least one base channel count");
  for (auto b : base_channels) {
    if (b <= 0) throw ConfigError("sweep base channels must be positive");
  }
  if (variants.empty()) throw ConfigError("sweep needs at least one variant");
  reference.validate();
  train.validate();
}

NetworkConfig sweep_network(const SweepConfig& cfg, SweepVariant variant, std::int64_t base) {
  NetworkConfig net = cfg.reference;
  const double f = static_cast<double>(base) / static_cast<double>(cfg.reference.base_3d_channels);
  net.base_3d_channels = base;
  net.concat_channels = std::max<std::int64_t>(1, std::llround(static_cast<double>(cfg.reference.concat_channels) * f));
  std::int64_t groups = std::max<std::int64_t>(1, std::llround(static_cast<double>(cfg.reference.gwc_groups) * f));
  while (net.unary_channels % groups != 0) --groups;
  net.gwc_groups = groups;
  net.use_concat_volume = true;
  net.use_gwc_volume = variant == SweepVariant::GwcCat;
  return net;
}

std::string sweep_csv_header() { return "variant,base_channels,volume_channels,parameter_count,epe"; }

std::string sweep_csv_row(const SweepRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s,%lld,%lld,%lld,%.4f", to_string(r.variant).c_str(),
                static_cast<long long>(r.base_channels), static_cast<long long>(r.volume_channels),
                static_cast<long long>(r.parameter_count), r.epe);
  return buf;
}

std::vector<SweepRow> run_sweep(const SweepConfig& cfg, const std::vector<StereoSample>& samples,
                                const std::function<void(const SweepRow&)>& on_row) {
  cfg.validate();
  std::vector<SweepRow> rows;
  for (auto variant : cfg.variants) {
    for (auto base : cfg.base_channels) {
      const NetworkConfig net = sweep_network(cfg, variant, base);
      const TrainResult r = train(net, samples, cfg.train);
      SweepRow row{variant, base, net.volume_channels(), r.parameter_count, r.best_val_epe};
      rows.push_back(row);
      if (on_row) on_row(row);
    }
  }
  return rows;
}

template void adam_step(const std::vector<Parameter<float>>&, AdamState<float>&, const AdamConfig&);
template void adam_step(const std::vector<Parameter<double>>&, AdamState<double>&, const AdamConfig&);
template Tensor<float> predict(GwcNet<float>&, const Tensor<float>&, const Tensor<float>&, const Normalization&);
template Tensor<float> predict(GwcNet<double>&, const Tensor<float>&, const Tensor<float>&, const Normalization&);
template EvalSummary evaluate_model(GwcNet<float>&, const std::vector<StereoSample>&,
                                    const std::vector<std::size_t>&, const Normalization&);
template EvalSummary evaluate_model(GwcNet<double>&, const std::vector<StereoSample>&,
                                    const std::vector<std::size_t>&, const Normalization&);

}  // namespace gwc
