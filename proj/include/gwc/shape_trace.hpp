#pragma once

#include <string>
#include <vector>

#include "gwc/tensor.hpp"

namespace gwc {

/// Optional recorder of intermediate tensor shapes, keyed by layer name
/// ("hourglass1.conv1a", "output3.prob", ...).
class ShapeTrace {
 public:
  struct Entry {
    std::string name;
    Shape shape;
  };

  void record(const std::string& name, const Shape& shape) { entries_.push_back({name, shape}); }
  const std::vector<Entry>& entries() const { return entries_; }
  /// Last shape recorded under `name`, or nullptr.
  const Shape* find(const std::string& name) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (it->name == name) return &it->shape;
    }
    return nullptr;
  }

 private:
  std::vector<Entry> entries_;
};

inline void trace_shape(ShapeTrace* trace, const std::string& name, const Shape& shape) {
  if (trace) trace->record(name, shape);
}

}  // namespace gwc
