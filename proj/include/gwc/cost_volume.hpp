#pragma once

#include "gwc/tensor.hpp"

namespace gwc {

enum class VolumeKind { Correlation, Concat, GroupwiseCorrelation, Combined };

const char* to_string(VolumeKind kind);

/// Matching cost volume, channel-major: tensor [N, C, D, H, W] where D is the
/// number of quarter-resolution disparity levels. Level d pairs left pixel x
/// with right pixel x - d; cells with x - d < 0 see a zero right feature.
template <typename T>
struct CostVolume {
  Tensor<T> tensor;
  VolumeKind kind = VolumeKind::Combined;

  std::int64_t channels() const { return tensor.dim(1); }
  std::int64_t d_levels() const { return tensor.dim(2); }
};

/// C(d, x, y) = <f_l(x, y), f_r(x - d, y)> / Nc. Features are [N, Nc, H, W].
template <typename T>
CostVolume<T> build_full_correlation_volume(const Tensor<T>& left, const Tensor<T>& right, std::int64_t d_levels);

/// Channel stack of f_l(x, y) and f_r(x - d, y): 2 * C channels.
template <typename T>
CostVolume<T> build_concat_volume(const Tensor<T>& left, const Tensor<T>& right, std::int64_t d_levels);

/// Per-group correlation: group g owns channels [g*Nc/Ng, (g+1)*Nc/Ng) and
/// C(d, x, y, g) = <f_l^g(x, y), f_r^g(x - d, y)> / (Nc/Ng).
template <typename T>
CostVolume<T> build_gwc_volume(const Tensor<T>& left, const Tensor<T>& right, std::int64_t d_levels,
                               std::int64_t groups);

/// Channel concatenation, group-wise correlation channels first.
template <typename T>
CostVolume<T> build_combined_volume(const CostVolume<T>& gwc, const CostVolume<T>& concat);

/// Nested-loop reference evaluation of the same definitions, without a graph.
/// For kind == Combined, the result is the gwc volume followed by the concat
/// volume of the same features.
template <typename T>
CostVolume<T> oracle_volume(VolumeKind kind, const Tensor<T>& left, const Tensor<T>& right, std::int64_t d_levels,
                            std::int64_t groups = 1);

}  // namespace gwc
