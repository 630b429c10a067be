#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gwc/disparity_head.hpp"

namespace gwc {

/// A decoded PFM file. Grayscale files give [H, W]; color files give
/// planar [3, H, W].
struct PfmImage {
  Tensor<float> data;
  bool color = false;
  float scale = -1.0f;  // magnitude as stored; sign records the file's byte order
  bool little_endian() const { return scale < 0; }
};

PfmImage read_pfm(const std::string& path);
PfmImage parse_pfm(const std::string& bytes);

/// Writes a little-endian PFM ("Pf" for [H, W], "PF" for [3, H, W]).
void write_pfm(const std::string& path, const Tensor<float>& image, float scale = 1.0f);
std::string encode_pfm(const Tensor<float>& image, float scale = 1.0f);

/// KITTI disparity PNG: 16-bit grayscale, disparity = raw / 256, raw 0 means
/// no measurement. Returns values [H, W] with a mask.
DisparityMap<float> read_kitti_png(const std::string& path);

/// Inverse of read_kitti_png. Valid pixels store round(d * 256) clamped to
/// [0, 65535]; invalid pixels store 0.
void write_kitti_png(const std::string& path, const DisparityMap<float>& disparity);

/// Raw 16-bit grayscale PNG access, row-major [H, W].
std::vector<std::uint16_t> read_png16(const std::string& path, std::int64_t& height, std::int64_t& width);
void write_png16(const std::string& path, const std::vector<std::uint16_t>& raw, std::int64_t height,
                 std::int64_t width);

/// 8-bit RGB image, interleaved row-major.
struct Image8 {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> rgb;
};

/// Loads an 8-bit PNG (gray, gray+alpha, RGB or RGBA) or a binary PPM/PGM,
/// chosen by file signature. Gray inputs are replicated to three channels.
Image8 read_image8(const std::string& path);
void write_png8(const std::string& path, const Image8& image);
void write_ppm(const std::string& path, const Image8& image);

/// [3, H, W] with values k / 255.
Tensor<float> image_to_tensor(const Image8& image);
Image8 tensor_to_image(const Tensor<float>& chw);

struct SyntheticConfig {
  std::int64_t height = 64;
  std::int64_t width = 128;
  std::int64_t d_max = 32;
  double dot_density = 1.0;
  int max_shapes = 6;
  int dot_size = 6;  // side of the square dots in pixels
  std::uint64_t seed = 0;
  void validate() const;
};

/// A stereo pair. Images are [3, H, W] in [0, 1]; normalization happens when
/// batches are assembled. gt.values is [H, W].
struct StereoSample {
  Tensor<float> left;
  Tensor<float> right;
  DisparityMap<float> gt;
  std::string id;
};

/// Random-dot stereogram with an integer piecewise-constant disparity field.
/// Left pixel (x, y) with disparity d appears at right pixel (x - d, y) unless
/// a nearer surface covers that pixel; such pixels, and those that leave the
/// frame, are invalid. Right pixels that no left pixel reaches get fresh noise.
struct RdsPair {
  Image8 left;
  Image8 right;
  DisparityMap<float> gt;
};
RdsPair generate_rds_images(const SyntheticConfig& cfg);
StereoSample generate_rds(const SyntheticConfig& cfg);

/// Seed of the index-th sample of a dataset seeded with `seed`.
std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index);

struct ManifestEntry {
  std::string left;
  std::string right;
  std::string gt;
};

/// One sample per line: left TAB right TAB gt. Relative paths resolve against
/// the manifest's directory. Blank lines and '#' lines are skipped.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

/// Ground truth by extension: ".pfm" (non-finite = invalid) or ".png" (KITTI).
DisparityMap<float> read_disparity(const std::string& path);
StereoSample load_sample(const ManifestEntry& entry);

struct Normalization {
  float mean = 0.5f;
  float std = 0.5f;
};

template <typename T>
struct Batch {
  Tensor<T> left;         // [B, 3, H, W], normalized
  Tensor<T> right;
  DisparityMap<T> gt;     // [B, H, W] with a full mask
};

template <typename T>
Batch<T> make_batch(const std::vector<StereoSample>& samples, const std::vector<std::size_t>& indices,
                    const Normalization& norm);

/// Zero-pads a [N, C, H, W] tensor on the top and right up to multiples of
/// `multiple`.
template <typename T>
Tensor<T> pad_top_right(const Tensor<T>& x, std::int64_t multiple);

}  // namespace gwc
