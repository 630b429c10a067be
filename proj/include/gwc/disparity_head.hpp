#pragma once

#include <cstdint>
#include <vector>

#include "gwc/layers.hpp"
#include "gwc/shape_trace.hpp"

namespace gwc {

/// Per-pixel distribution over full-resolution disparity indices:
/// tensor [N, D_max, H, W], summing to one over axis 1.
template <typename T>
struct ProbabilityVolume {
  Tensor<T> tensor;
};

/// Disparity in full-resolution pixels, values [N, H, W] (or [H, W] for a
/// single ground-truth map). `valid` is empty when every pixel is valid.
template <typename T>
struct DisparityMap {
  Tensor<T> values;
  std::vector<std::uint8_t> valid;

  bool is_valid(std::size_t i) const { return valid.empty() || valid[i] != 0; }
};

/// Output module: 3x3x3 conv+BN+ReLU, 3x3x3 conv to one channel, x4 trilinear
/// upsampling of the score volume, softmax over disparity.
template <typename T>
class OutputModule {
 public:
  OutputModule(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t base, Rng& rng);
  ProbabilityVolume<T> forward(const Tensor<T>& v, std::int64_t d_max, bool training,
                               ShapeTrace* trace = nullptr);

 private:
  std::string prefix_;
  Conv3dUnit<T> conv1_, conv2_;
};

/// d = sum_k k * p_k over axis 1 of [N, D, H, W]; returns [N, H, W].
template <typename T>
DisparityMap<T> soft_argmin(const ProbabilityVolume<T>& p);

extern template class OutputModule<float>;
extern template class OutputModule<double>;

}  // namespace gwc
