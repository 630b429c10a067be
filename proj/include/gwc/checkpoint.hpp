#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gwc/model.hpp"

namespace gwc {

enum class DType : std::uint32_t { F32 = 0, F64 = 1 };

/// One named tensor of an archive. Exactly one of f32/f64 holds the data,
/// according to dtype.
struct ArchiveTensor {
  std::string name;
  Shape shape;
  DType dtype = DType::F32;
  std::vector<float> f32;
  std::vector<double> f64;

  std::size_t numel() const { return numel_of(shape); }
};

/// Archive layout, all integers little-endian:
///   "GWCT", u32 version, u32 count, then per tensor
///   u32 name length, name bytes, u32 rank, u64 extents[rank], u32 dtype,
///   raw little-endian element data.
inline constexpr std::uint32_t kArchiveVersion = 1;

std::string encode_archive(const std::vector<ArchiveTensor>& tensors);
std::vector<ArchiveTensor> decode_archive(const std::string& bytes);
void write_archive(const std::string& path, const std::vector<ArchiveTensor>& tensors);
std::vector<ArchiveTensor> read_archive(const std::string& path);

/// Stores every parameter and buffer under its registry name (in the model's
/// precision) plus the architecture as "meta.*" scalars.
template <typename T>
void save_checkpoint(const std::string& path, const GwcNet<T>& model);

/// Rebuilds the architecture from the meta entries and loads all state.
/// Missing or mis-shaped tensors are errors.
template <typename T>
std::unique_ptr<GwcNet<T>> load_checkpoint(const std::string& path);

/// Architecture recorded in a checkpoint.
NetworkConfig checkpoint_config(const std::vector<ArchiveTensor>& archive);

}  // namespace gwc
