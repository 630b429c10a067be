#pragma once

#include <array>
#include <string>
#include <vector>

#include "gwc/disparity_head.hpp"

namespace gwc {

/// Per-output loss coefficients for outputs 0..3.
struct LossConfig {
  std::array<double, 4> lambdas{0.5, 0.5, 0.7, 1.0};
  void validate() const;
};

/// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
double smooth_l1(double x);

/// Mean of smooth_l1(pred - gt) over gt's valid pixels. pred and gt.values
/// share a shape. Throws NumericError when no pixel is valid.
template <typename T>
Tensor<T> smooth_l1_loss(const Tensor<T>& pred, const DisparityMap<T>& gt);

/// sum_i lambda_i * smooth_l1_loss(preds[i], gt).
template <typename T>
Tensor<T> total_loss(const std::vector<Tensor<T>>& preds, const DisparityMap<T>& gt, const LossConfig& cfg);

struct MetricReport {
  double epe = 0;     // mean |pred - gt| in pixels
  double err1 = 0;    // % of valid pixels with error > 1px
  double err2 = 0;
  double err3 = 0;
  double err5 = 0;
  double d1_all = 0;  // % of valid pixels with error > max(3px, 5% of gt)
  std::int64_t valid_pixel_count = 0;

  static std::string csv_header();
  /// epe, err1, err2, err3, err5, d1_all, valid_count; rates to two decimals.
  std::string csv_row() const;
};

/// Outlier threshold of the D1 metric for ground truth `gt`.
double d1_threshold(double gt);

/// Metrics over gt's valid pixels. Throws NumericError when none is valid.
template <typename T>
MetricReport evaluate(const DisparityMap<T>& pred, const DisparityMap<T>& gt);

/// Mean of per-image reports (valid counts are summed).
MetricReport average_reports(const std::vector<MetricReport>& reports);

inline constexpr double kMinValidFraction = 0.10;

template <typename T>
struct ValidityResult {
  DisparityMap<T> gt;          // same values, mask replaced
  double valid_fraction = 0;
  bool passes = false;         // at least kMinValidFraction of pixels valid
};

/// Valid pixels are finite with 0 <= d < d_max; with zero_is_missing (sparse
/// sensor data) a value of exactly 0 is also invalid. An existing mask is
/// intersected.
template <typename T>
ValidityResult<T> filter_valid(const DisparityMap<T>& gt, std::int64_t d_max, bool zero_is_missing = false);

}  // namespace gwc
