#pragma once

#include <vector>

#include "gwc/layers.hpp"
#include "gwc/network_config.hpp"

namespace gwc {

enum class Side { Left, Right };

/// Unary features at quarter resolution: tensor [N, nc, H/4, W/4].
template <typename T>
struct FeatureMap {
  Tensor<T> tensor;
  std::int64_t nc = 0;
  Side source = Side::Left;
};

/// ResNet-like unary feature extractor (no spatial pyramid pooling): a stem of
/// three 3x3 convs to 1/2 resolution, stages conv1 (1/2), conv2 (stride 2 to
/// 1/4), conv3 (dilation 1) and conv4 (dilation 2). The outputs of conv2,
/// conv3 and conv4 are concatenated. One parameter set serves both views.
template <typename T>
class FeatureExtractor {
 public:
  FeatureExtractor(ParameterRegistry<T>& reg, const NetworkConfig& cfg, Rng& rng);

  /// image [N, 3, H, W] with H, W divisible by 4.
  FeatureMap<T> extract(const Tensor<T>& image, Side side, bool training);

  /// Two 2D convolutions reducing features to concat_channels for the
  /// concatenation volume. Requires cfg.use_concat_volume.
  FeatureMap<T> compress_for_concat(const FeatureMap<T>& f, bool training);

 private:
  NetworkConfig cfg_;
  FeatureWidths widths_;
  std::vector<Conv2dUnit<T>> stem_;
  std::vector<ResidualBlock2d<T>> conv1_, conv2_, conv3_, conv4_;
  std::vector<Conv2dUnit<T>> compress_;
};

extern template class FeatureExtractor<float>;
extern template class FeatureExtractor<double>;

}  // namespace gwc
