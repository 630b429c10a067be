#pragma once

#include <random>
#include <string>

#include "gwc/ops.hpp"
#include "gwc/parameters.hpp"

namespace gwc {

using Rng = std::mt19937_64;

/// He-style fan-in initialization: N(0, sqrt(2 / fan_in)).
template <typename T>
Tensor<T> he_normal(Shape shape, std::int64_t fan_in, Rng& rng);

template <typename T>
class BatchNorm {
 public:
  BatchNorm(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t channels);
  Tensor<T> forward(const Tensor<T>& x, bool training);

  Tensor<T> gamma, beta, running_mean, running_var;
};

/// 2D convolution without bias, optionally followed by batchnorm.
template <typename T>
class Conv2dUnit {
 public:
  Conv2dUnit(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t in_channels,
             std::int64_t out_channels, int kernel, Conv2dOptions opt, bool with_bn, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, bool training);

  Tensor<T> weight;
  Conv2dOptions opt;
  std::optional<BatchNorm<T>> bn;
};

/// 3D convolution without bias, optionally followed by batchnorm.
template <typename T>
class Conv3dUnit {
 public:
  Conv3dUnit(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t in_channels,
             std::int64_t out_channels, int kernel, Conv3dOptions opt, bool with_bn, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, bool training);

  Tensor<T> weight;
  Conv3dOptions opt;
  std::optional<BatchNorm<T>> bn;
};

/// Stride-2 transposed 3D convolution (doubles D, H, W) followed by batchnorm.
template <typename T>
class Deconv3dUnit {
 public:
  Deconv3dUnit(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t in_channels,
               std::int64_t out_channels, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, bool training);

  Tensor<T> weight;
  ConvTranspose3dOptions opt;
  BatchNorm<T> bn;
};

/// ResNet basic block: two 3x3 conv+BN, identity or 1x1 projection shortcut,
/// ReLU after the sum.
template <typename T>
class ResidualBlock2d {
 public:
  ResidualBlock2d(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t in_channels,
                  std::int64_t out_channels, int stride, int dilation, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, bool training);

 private:
  Conv2dUnit<T> conv1_, conv2_;
  std::optional<Conv2dUnit<T>> downsample_;
};

extern template class BatchNorm<float>;
extern template class BatchNorm<double>;
extern template class Conv2dUnit<float>;
extern template class Conv2dUnit<double>;
extern template class Conv3dUnit<float>;
extern template class Conv3dUnit<double>;
extern template class Deconv3dUnit<float>;
extern template class Deconv3dUnit<double>;
extern template class ResidualBlock2d<float>;
extern template class ResidualBlock2d<double>;

}  // namespace gwc
