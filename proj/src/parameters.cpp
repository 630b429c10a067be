#include "gwc/parameters.hpp"

#include <algorithm>

namespace gwc {

template <typename T>
void ParameterRegistry<T>::claim(const std::string& name) {
  if (name.empty()) throw ConfigError("parameter name must not be empty");
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  names_.push_back(name);
}

template <typename T>
Tensor<T> ParameterRegistry<T>::add_parameter(const std::string& name, Tensor<T> tensor) {
  claim(name);
  tensor.set_requires_grad(true);
  params_.push_back({name, tensor});
  return tensor;
}

template <typename T>
Tensor<T> ParameterRegistry<T>::add_buffer(const std::string& name, Tensor<T> tensor) {
  claim(name);
  tensor.set_requires_grad(false);
  buffers_.push_back({name, tensor});
  return tensor;
}

template <typename T>
std::optional<Tensor<T>> ParameterRegistry<T>::find(const std::string& name) const {
  for (const auto* list : {&params_, &buffers_}) {
    for (const auto& p : *list) {
      if (p.name == name) return p.tensor;
    }
  }
  return std::nullopt;
}

template <typename T>
std::int64_t ParameterRegistry<T>::parameter_count() const {
  return parameter_count("");
}

template <typename T>
std::int64_t ParameterRegistry<T>::parameter_count(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const auto& p : params_) {
    if (p.name.compare(0, prefix.size(), prefix) == 0) n += static_cast<std::int64_t>(p.tensor.numel());
  }
  return n;
}

template <typename T>
void ParameterRegistry<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template class ParameterRegistry<float>;
template class ParameterRegistry<double>;

}  // namespace gwc
