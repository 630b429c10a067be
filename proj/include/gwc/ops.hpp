#pragma once

#include <optional>
#include <vector>

#include "gwc/tensor.hpp"

namespace gwc {

// Differentiable operators. Every op here records a backward node when grad
// mode is on and an input requires grad.

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> multiply_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T> Tensor<T> slice(const Tensor<T>& a, int axis, std::int64_t start, std::int64_t length);
/// Zero padding along one axis.
template <typename T> Tensor<T> pad(const Tensor<T>& a, int axis, std::int64_t before, std::int64_t after);

template <typename T> Tensor<T> softmax(const Tensor<T>& a, int axis);

/// Trilinear upsampling of [N, C, D, H, W] by an integer factor on all three
/// spatial axes, half-pixel centres (align_corners = false).
template <typename T> Tensor<T> upsample_trilinear(const Tensor<T>& a, int scale);

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

struct Conv3dOptions {
  int stride = 1;
  int padding = 0;
};

struct ConvTranspose3dOptions {
  int stride = 2;
  int padding = 1;
  int output_padding = 1;
};

/// Cross-correlation. input [N, Cin, H, W], weight [Cout, Cin, kH, kW].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 Conv2dOptions opt = {});

/// input [N, Cin, D, H, W], weight [Cout, Cin, kD, kH, kW].
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 Conv3dOptions opt = {});

/// Adjoint of conv3d. weight [Cin, Cout, kD, kH, kW]. A stride-2 transpose must
/// exactly double every spatial extent; other configurations are rejected.
template <typename T>
Tensor<T> conv_transpose3d(const Tensor<T>& input, const Tensor<T>& weight,
                           const std::optional<Tensor<T>>& bias, ConvTranspose3dOptions opt = {});

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel normalization over every axis but 1. In training mode the
/// batch statistics are used and the running statistics (plain tensors, no
/// grad) are updated in place with momentum; otherwise the running statistics
/// are used.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, bool training);

/// Output extent of a convolution along one axis.
std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int padding, int dilation = 1);
std::int64_t conv_transpose_out_extent(std::int64_t in, int kernel, int stride, int padding,
                                       int output_padding);

}  // namespace gwc
