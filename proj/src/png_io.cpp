#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "gwc/stereo_io.hpp"

namespace gwc {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError(std::string("cannot open ") + path);
  return f;
}

// libpng reports errors by longjmp; the message is kept so the caller can
// throw once the png structs are destroyed.
struct ErrorSlot {
  char message[256] = {0};
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* slot = static_cast<ErrorSlot*>(png_get_error_ptr(png));
  std::snprintf(slot->message, sizeof(slot->message), "%s", msg);
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct DecodedPng {
  std::int64_t height = 0;
  std::int64_t width = 0;
  int bit_depth = 0;
  int channels = 0;
  std::vector<std::uint8_t> bytes;  // rows as libpng delivers them, 16-bit samples big-endian
};

// Plain C-style body so longjmp never skips a destructor.
bool decode_png(std::FILE* fp, DecodedPng* out, ErrorSlot* err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, err, on_png_error, on_png_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  png_bytep* rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    std::free(rows);
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  out->width = png_get_image_width(png, info);
  out->height = png_get_image_height(png, info);
  out->bit_depth = png_get_bit_depth(png, info);
  out->channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out->bytes.resize(stride * static_cast<std::size_t>(out->height));
  rows = static_cast<png_bytep*>(std::malloc(sizeof(png_bytep) * static_cast<std::size_t>(out->height)));
  for (std::int64_t y = 0; y < out->height; ++y) rows[y] = out->bytes.data() + stride * static_cast<std::size_t>(y);
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  std::free(rows);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

DecodedPng load_png(const std::string& path) {
  auto fp = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ParseError(path + ": not a PNG file");
  }
  std::rewind(fp.get());
  DecodedPng img;
  ErrorSlot err;
  if (!decode_png(fp.get(), &img, &err)) {
    throw ParseError(path + ": png decode failed: " + (err.message[0] ? err.message : "out of memory"));
  }
  return img;
}

bool encode_png(std::FILE* fp, const std::uint8_t* data, std::int64_t height, std::int64_t width, int bit_depth,
                int color_type, std::size_t stride, ErrorSlot* err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, err, on_png_error, on_png_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::int64_t y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data + stride * static_cast<std::size_t>(y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

void save_png(const std::string& path, const std::uint8_t* data, std::int64_t height, std::int64_t width,
              int bit_depth, int color_type, std::size_t stride) {
  if (height <= 0 || width <= 0) throw ShapeError("png: empty image");
  auto fp = open_file(path, "wb");
  ErrorSlot err;
  if (!encode_png(fp.get(), data, height, width, bit_depth, color_type, stride, &err)) {
    throw IoError(path + ": png encode failed: " + (err.message[0] ? err.message : "out of memory"));
  }
  if (std::fflush(fp.get()) != 0) throw IoError("write failed: " + path);
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Image8 parse_pnm(const std::string& path, const std::string& bytes) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw ParseError(path + ": byte " + std::to_string(pos) + ": " + msg);
  };
  auto skip = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip();
    std::int64_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])) && v < (1 << 24)) {
      v = v * 10 + (bytes[pos++] - '0');
    }
    if (pos == start || v <= 0) {
      pos = start;
      fail(std::string("bad ") + what);
    }
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    fail("expected binary PPM (P6) or PGM (P5)");
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  Image8 img;
  img.width = number("width");
  img.height = number("height");
  const std::int64_t maxval = number("maxval");
  if (maxval != 255) fail("only 8-bit images (maxval 255) are supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) fail("expected whitespace");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(img.width * img.height * channels);
  if (bytes.size() - pos < need) {
    pos = bytes.size();
    fail("truncated payload");
  }
  img.rgb.resize(static_cast<std::size_t>(img.width * img.height * 3));
  const auto* src = reinterpret_cast<const std::uint8_t*>(bytes.data() + pos);
  for (std::size_t i = 0; i < static_cast<std::size_t>(img.width * img.height); ++i) {
    for (int c = 0; c < 3; ++c) img.rgb[i * 3 + c] = src[i * channels + (channels == 3 ? c : 0)];
  }
  return img;
}

}  // namespace

std::vector<std::uint16_t> read_png16(const std::string& path, std::int64_t& height, std::int64_t& width) {
  DecodedPng img = load_png(path);
  if (img.bit_depth != 16 || img.channels != 1) {
    throw ParseError(path + ": expected a 16-bit single-channel PNG, got " + std::to_string(img.bit_depth) +
                     "-bit with " + std::to_string(img.channels) + " channel(s)");
  }
  height = img.height;
  width = img.width;
  std::vector<std::uint16_t> raw(static_cast<std::size_t>(height * width));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<std::uint16_t>((img.bytes[2 * i] << 8) | img.bytes[2 * i + 1]);
  }
  return raw;
}

void write_png16(const std::string& path, const std::vector<std::uint16_t>& raw, std::int64_t height,
                 std::int64_t width) {
  if (raw.size() != static_cast<std::size_t>(height * width)) throw ShapeError("write_png16: size mismatch");
  std::vector<std::uint8_t> bytes(raw.size() * 2);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(raw[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(raw[i] & 0xff);
  }
  save_png(path, bytes.data(), height, width, 16, PNG_COLOR_TYPE_GRAY, static_cast<std::size_t>(width) * 2);
}

DisparityMap<float> read_kitti_png(const std::string& path) {
  std::int64_t h = 0, w = 0;
  const auto raw = read_png16(path, h, w);
  DisparityMap<float> out;
  out.values = Tensor<float>(Shape{h, w});
  out.valid.assign(raw.size(), 0);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out.values.ptr()[i] = static_cast<float>(raw[i] / 256.0);
    out.valid[i] = raw[i] != 0;
  }
  return out;
}

void write_kitti_png(const std::string& path, const DisparityMap<float>& disparity) {
  const auto& v = disparity.values;
  if (v.rank() != 2) throw ShapeError("write_kitti_png: expected [H, W], got " + shape_str(v.shape()));
  std::vector<std::uint16_t> raw(v.numel());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double d = v.ptr()[i];
    if (!disparity.is_valid(i) || !std::isfinite(d)) continue;
    raw[i] = static_cast<std::uint16_t>(std::clamp(std::lround(d * 256.0), 0L, 65535L));
  }
  write_png16(path, raw, v.dim(0), v.dim(1));
}

Image8 read_image8(const std::string& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '5')) return parse_pnm(path, bytes);
  DecodedPng png = load_png(path);
  if (png.bit_depth != 8) {
    throw ParseError(path + ": expected an 8-bit image, got " + std::to_string(png.bit_depth) + "-bit");
  }
  Image8 img;
  img.height = png.height;
  img.width = png.width;
  img.rgb.resize(static_cast<std::size_t>(img.height * img.width * 3));
  const int ch = png.channels;
  for (std::size_t i = 0; i < static_cast<std::size_t>(img.height * img.width); ++i) {
    const std::uint8_t* p = png.bytes.data() + i * static_cast<std::size_t>(ch);
    for (int c = 0; c < 3; ++c) img.rgb[i * 3 + c] = ch >= 3 ? p[c] : p[0];
  }
  return img;
}

void write_png8(const std::string& path, const Image8& image) {
  if (image.rgb.size() != static_cast<std::size_t>(image.height * image.width * 3)) {
    throw ShapeError("write_png8: buffer size mismatch");
  }
  save_png(path, image.rgb.data(), image.height, image.width, 8, PNG_COLOR_TYPE_RGB,
           static_cast<std::size_t>(image.width) * 3);
}

void write_ppm(const std::string& path, const Image8& image) {
  if (image.rgb.size() != static_cast<std::size_t>(image.height * image.width * 3)) {
    throw ShapeError("write_ppm: buffer size mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw IoError("write failed: " + path);
}

Tensor<float> image_to_tensor(const Image8& image) {
  Tensor<float> t(Shape{3, image.height, image.width});
  const std::size_t plane = static_cast<std::size_t>(image.height * image.width);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) t.ptr()[c * plane + i] = static_cast<float>(image.rgb[i * 3 + c]) / 255.0f;
  }
  return t;
}

Image8 tensor_to_image(const Tensor<float>& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw ShapeError("tensor_to_image: expected [3, H, W]");
  Image8 img;
  img.height = chw.dim(1);
  img.width = chw.dim(2);
  const std::size_t plane = static_cast<std::size_t>(img.height * img.width);
  img.rgb.resize(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(chw.ptr()[c * plane + i], 0.0f, 1.0f);
      img.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  return img;
}

}  // namespace gwc
