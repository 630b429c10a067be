#include "gwc/loss_metrics.hpp"

#include <cmath>
#include <cstdio>

#include "gwc/ops.hpp"
#include "op_util.hpp"

namespace gwc {

void LossConfig::validate() const {
  for (double l : lambdas) {
    if (!(l >= 0)) throw ConfigError("loss coefficients must be nonnegative");
  }
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1 ? 0.5 * x * x : a - 0.5;
}

template <typename T>
Tensor<T> smooth_l1_loss(const Tensor<T>& pred, const DisparityMap<T>& gt) {
  if (pred.shape() != gt.values.shape()) {
    throw ShapeError("smooth_l1_loss: prediction " + shape_str(pred.shape()) + " vs ground truth " +
                     shape_str(gt.values.shape()));
  }
  if (!gt.valid.empty() && gt.valid.size() != pred.numel()) {
    throw ShapeError("smooth_l1_loss: mask size does not match the disparity map");
  }
  std::int64_t count = 0;
  double acc = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    if (!gt.is_valid(i)) continue;
    acc += smooth_l1(static_cast<double>(pred.ptr()[i]) - static_cast<double>(gt.values.ptr()[i]));
    ++count;
  }
  if (count == 0) throw NumericError("smooth_l1_loss: ground truth has no valid pixels");
  auto ip = pred.impl();
  auto target = gt.values.impl();
  auto mask = gt.valid;
  const T inv = T(1) / static_cast<T>(count);
  return make_result<T>(Shape{}, {static_cast<T>(acc / static_cast<double>(count))}, {ip},
                        [ip, target, mask, inv](TensorImpl<T>& self) {
    auto* g = grad_target(ip.get());
    if (!g) return;
    const T go = self.grad[0] * inv;
    for (std::size_t i = 0; i < g->size(); ++i) {
      if (!mask.empty() && !mask[i]) continue;
      const T diff = ip->data[i] - target->data[i];
      const T slope = diff > T(1) ? T(1) : (diff < T(-1) ? T(-1) : diff);
      (*g)[i] += go * slope;
    }
  }, "smooth_l1_loss");
}

template <typename T>
Tensor<T> total_loss(const std::vector<Tensor<T>>& preds, const DisparityMap<T>& gt, const LossConfig& cfg) {
  cfg.validate();
  if (preds.size() != cfg.lambdas.size()) {
    throw ShapeError("total_loss: expected " + std::to_string(cfg.lambdas.size()) + " predictions, got " +
                     std::to_string(preds.size()));
  }
  Tensor<T> total;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto term = multiply_scalar(smooth_l1_loss(preds[i], gt), static_cast<T>(cfg.lambdas[i]));
    total = i == 0 ? term : add(total, term);
  }
  return total;
}

std::string MetricReport::csv_header() { return "epe,err1,err2,err3,err5,d1_all,valid_count"; }

std::string MetricReport::csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.4f,%.2f,%.2f,%.2f,%.2f,%.2f,%lld", epe, err1, err2, err3, err5, d1_all,
                static_cast<long long>(valid_pixel_count));
  return buf;
}

double d1_threshold(double gt) { return std::max(3.0, 0.05 * gt); }

template <typename T>
MetricReport evaluate(const DisparityMap<T>& pred, const DisparityMap<T>& gt) {
  if (pred.values.shape() != gt.values.shape()) {
    throw ShapeError("evaluate: prediction " + shape_str(pred.values.shape()) + " vs ground truth " +
                     shape_str(gt.values.shape()));
  }
  MetricReport r;
  std::int64_t n = 0, e1 = 0, e2 = 0, e3 = 0, e5 = 0, d1 = 0;
  double abs_sum = 0;
  for (std::size_t i = 0; i < gt.values.numel(); ++i) {
    if (!gt.is_valid(i)) continue;
    const double g = gt.values.ptr()[i];
    const double err = std::abs(static_cast<double>(pred.values.ptr()[i]) - g);
    abs_sum += err;
    e1 += err > 1;
    e2 += err > 2;
    e3 += err > 3;
    e5 += err > 5;
    d1 += err > d1_threshold(g);
    ++n;
  }
  if (n == 0) throw NumericError("evaluate: ground truth has no valid pixels");
  const double pct = 100.0 / static_cast<double>(n);
  r.epe = abs_sum / static_cast<double>(n);
  r.err1 = static_cast<double>(e1) * pct;
  r.err2 = static_cast<double>(e2) * pct;
  r.err3 = static_cast<double>(e3) * pct;
  r.err5 = static_cast<double>(e5) * pct;
  r.d1_all = static_cast<double>(d1) * pct;
  r.valid_pixel_count = n;
  return r;
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
  MetricReport avg;
  if (reports.empty()) return avg;
  for (const auto& r : reports) {
    avg.epe += r.epe;
    avg.err1 += r.err1;
    avg.err2 += r.err2;
    avg.err3 += r.err3;
    avg.err5 += r.err5;
    avg.d1_all += r.d1_all;
    avg.valid_pixel_count += r.valid_pixel_count;
  }
  const double k = 1.0 / static_cast<double>(reports.size());
  avg.epe *= k;
  avg.err1 *= k;
  avg.err2 *= k;
  avg.err3 *= k;
  avg.err5 *= k;
  avg.d1_all *= k;
  return avg;
}

template <typename T>
ValidityResult<T> filter_valid(const DisparityMap<T>& gt, std::int64_t d_max, bool zero_is_missing) {
  ValidityResult<T> out;
  out.gt.values = gt.values;
  const std::size_t n = gt.values.numel();
  out.gt.valid.assign(n, 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = gt.values.ptr()[i];
    bool ok = std::isfinite(d) && d >= 0 && d < static_cast<double>(d_max) && gt.is_valid(i);
    if (zero_is_missing && d == 0) ok = false;
    out.gt.valid[i] = ok;
    count += ok;
  }
  out.valid_fraction = n ? static_cast<double>(count) / static_cast<double>(n) : 0.0;
  out.passes = out.valid_fraction >= kMinValidFraction;
  return out;
}

#define GWC_INSTANTIATE_LOSS(T)                                                                       \
  template Tensor<T> smooth_l1_loss(const Tensor<T>&, const DisparityMap<T>&);                        \
  template Tensor<T> total_loss(const std::vector<Tensor<T>>&, const DisparityMap<T>&, const LossConfig&); \
  template MetricReport evaluate(const DisparityMap<T>&, const DisparityMap<T>&);                     \
  template ValidityResult<T> filter_valid(const DisparityMap<T>&, std::int64_t, bool);

GWC_INSTANTIATE_LOSS(float)
GWC_INSTANTIATE_LOSS(double)

}  // namespace gwc
