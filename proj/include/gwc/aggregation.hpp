#pragma once

#include <vector>

#include "gwc/cost_volume.hpp"
#include "gwc/layers.hpp"
#include "gwc/network_config.hpp"
#include "gwc/shape_trace.hpp"

namespace gwc {

/// Which aggregation outputs are materialized. Auxiliary outputs only feed
/// their own heads, so dropping them leaves the final volume unchanged.
enum class HeadMode { AllOutputs, FinalOnly };

/// Four 3x3x3 conv+BN+ReLU layers in two pairs; the output is the sum of the
/// two pair outputs (no ReLU after the sum).
template <typename T>
class PreHourglass {
 public:
  PreHourglass(ParameterRegistry<T>& reg, std::int64_t volume_channels, std::int64_t base, Rng& rng);
  Tensor<T> forward(const Tensor<T>& volume, bool training, ShapeTrace* trace = nullptr);

 private:
  std::int64_t volume_channels_;
  Conv3dUnit<T> conv1a_, conv1b_, conv2a_, conv2b_;
};

/// 3D encoder-decoder: two stride-2 stages down to 1/4 of the input volume,
/// two stride-2 deconvs back up, with 1x1x1 conv+BN shortcuts added before
/// each ReLU. Output shape equals input shape.
template <typename T>
class Hourglass {
 public:
  Hourglass(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t base, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, bool training, ShapeTrace* trace = nullptr);

 private:
  std::string prefix_;
  Conv3dUnit<T> conv1a_, conv1b_, conv2a_, conv2b_;
  Deconv3dUnit<T> deconv1_, deconv0_;
  Conv3dUnit<T> shortcut1_, shortcut0_;
};

/// v0 from the pre-hourglass, v1..v3 from the hourglasses. In FinalOnly mode
/// `volumes` holds only v3.
template <typename T>
struct AggregationOutputs {
  std::vector<Tensor<T>> volumes;
  const Tensor<T>& final_volume() const { return volumes.back(); }
};

/// Pre-hourglass followed by stacked hourglasses, each consuming the previous
/// output directly (no residuals between hourglasses).
template <typename T>
class Aggregation {
 public:
  Aggregation(ParameterRegistry<T>& reg, const NetworkConfig& cfg, Rng& rng);

  /// Volumes whose D, H or W are not multiples of 4 are zero padded on the high
  /// side and every output is cropped back.
  AggregationOutputs<T> aggregate(const CostVolume<T>& volume, HeadMode mode, bool training,
                                  ShapeTrace* trace = nullptr);

  PreHourglass<T>& pre_hourglass() { return pre_; }
  Hourglass<T>& hourglass(std::size_t i) { return hourglasses_.at(i); }

 private:
  PreHourglass<T> pre_;
  std::vector<Hourglass<T>> hourglasses_;
};

extern template class PreHourglass<float>;
extern template class PreHourglass<double>;
extern template class Hourglass<float>;
extern template class Hourglass<double>;
extern template class Aggregation<float>;
extern template class Aggregation<double>;

}  // namespace gwc
