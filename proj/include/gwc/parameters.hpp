#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gwc/tensor.hpp"

namespace gwc {

/// A trainable tensor with a unique dotted name such as
/// "hourglass1.conv1a.weight".
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

/// Owns the naming of a model's state. Parameters are trainable; buffers are
/// non-trainable state such as batchnorm running statistics. Both take part in
/// checkpoints.
template <typename T>
class ParameterRegistry {
 public:
  Tensor<T> add_parameter(const std::string& name, Tensor<T> tensor);
  Tensor<T> add_buffer(const std::string& name, Tensor<T> tensor);

  const std::vector<Parameter<T>>& parameters() const { return params_; }
  const std::vector<Parameter<T>>& buffers() const { return buffers_; }

  std::optional<Tensor<T>> find(const std::string& name) const;
  std::int64_t parameter_count() const;
  /// Parameter count restricted to names starting with `prefix`.
  std::int64_t parameter_count(const std::string& prefix) const;
  void zero_grad();

 private:
  void claim(const std::string& name);

  std::vector<Parameter<T>> params_;
  std::vector<Parameter<T>> buffers_;
  std::vector<std::string> names_;
};

extern template class ParameterRegistry<float>;
extern template class ParameterRegistry<double>;

}  // namespace gwc
