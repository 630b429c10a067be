#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gwc/ops.hpp"

namespace gwc {

/// Outcome of one verification suite. `measured` is the worst error seen and
/// `tolerance` the pass threshold on it.
struct SuiteResult {
  std::string name;
  bool passed = false;
  double measured = 0;
  double tolerance = 0;
  std::string detail;
  double seconds = 0;
};

/// Nested-loop reference convolutions, no graph.
Tensor<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* bias,
                            Conv2dOptions opt);
Tensor<double> naive_conv3d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* bias,
                            Conv3dOptions opt);
/// Scatter form of the transposed convolution; weight [Cin, Cout, k, k, k].
Tensor<double> naive_conv_transpose3d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* bias,
                                      ConvTranspose3dOptions opt);

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Central finite differences against backward(). For each input, the
/// relative error is |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|)
/// in the Euclidean norm over the checked coordinates; the worst input is
/// returned. `coords_per_input` > 0 checks that many random coordinates per
/// input instead of all of them.
double gradcheck(const ScalarFn& f, const std::vector<Tensor<double>>& inputs, double h = 1e-5,
                 std::size_t coords_per_input = 0, std::uint64_t seed = 0);

/// Same check on tensors that `f` reads directly (model parameters, inputs
/// with requires_grad set); they are perturbed in place and restored.
double gradcheck_tensors(const std::function<Tensor<double>()>& f, const std::vector<Tensor<double>>& targets,
                         double h = 1e-5, std::size_t coords_per_input = 0, std::uint64_t seed = 0);

/// Reduces any op output to a scalar with fixed random weights so that every
/// output element carries a distinct gradient.
Tensor<double> random_projection(const Tensor<double>& y, std::uint64_t seed);

SuiteResult verify_degeneracy(std::uint64_t seed);
SuiteResult verify_group_mean(std::uint64_t seed);
SuiteResult verify_volume_oracle(std::uint64_t seed);
SuiteResult verify_conv_oracle(std::uint64_t seed);
/// One result per differentiable op, each the worst case over `seeds` seeds.
std::vector<SuiteResult> verify_op_gradients(std::uint64_t seed, int seeds = 20);
SuiteResult verify_pipeline_gradient(std::uint64_t seed);
SuiteResult verify_shape_conformance();
SuiteResult verify_aux_head_removal(std::uint64_t seed);

/// Every suite above, in order.
std::vector<SuiteResult> run_verify_suites(std::uint64_t seed,
                                           const std::function<void(const SuiteResult&)>& on_result = {});

}  // namespace gwc
