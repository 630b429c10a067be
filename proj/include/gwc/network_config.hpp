#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace gwc {

/// Architecture hyperparameters. Every extent below is the count at the
/// configured scale; full_scale() reproduces the published layout.
struct NetworkConfig {
  std::int64_t unary_channels = 32;   // Nc, concatenated conv2/conv3/conv4 widths
  std::int64_t gwc_groups = 8;        // Ng, must divide unary_channels
  std::int64_t concat_channels = 4;   // per-image compressed channels for the concat volume
  std::int64_t d_max = 32;            // full-resolution disparity range, multiple of 4
  std::int64_t base_3d_channels = 8;  // width of the 3D aggregation trunk
  std::array<int, 4> stage_blocks{1, 2, 1, 1};  // residual blocks in conv1..conv4
  bool use_concat_volume = true;
  bool use_gwc_volume = true;
  int num_hourglasses = 3;
  std::int64_t min_stem_channels = 16;  // floor on the stem/conv1 width at small unary_channels

  static NetworkConfig full_scale();
  static NetworkConfig desk_scale();

  /// Channel count of the cost volume fed to the aggregation network.
  std::int64_t volume_channels() const;
  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
  std::string variant_name() const;
};

/// Per-stage widths of the feature extractor. conv2 + conv3 + conv4 sum to
/// unary_channels; the split follows the 64/128/128 full-scale layout.
struct FeatureWidths {
  std::int64_t stem = 0;
  std::int64_t conv1 = 0;
  std::int64_t conv2 = 0;
  std::int64_t conv3 = 0;
  std::int64_t conv4 = 0;
  std::int64_t compress_hidden = 0;
};

FeatureWidths feature_widths(const NetworkConfig& cfg);

}  // namespace gwc
