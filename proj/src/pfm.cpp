#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gwc/stereo_io.hpp"

namespace gwc {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  std::string token(const char* what) {
    while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) fail(start, std::string("missing ") + what);
    return bytes_.substr(start, pos_ - start);
  }

  std::int64_t dimension(const char* what) {
    const std::size_t at = skip_space();
    const std::string t = token(what);
    std::int64_t v = 0;
    for (char c : t) {
      if (!std::isdigit(static_cast<unsigned char>(c)) || v > (std::int64_t{1} << 31)) {
        fail(at, std::string("bad ") + what + " '" + t + "'");
      }
      v = v * 10 + (c - '0');
    }
    if (v <= 0) fail(at, std::string(what) + " must be positive");
    return v;
  }

  double number(const char* what) {
    const std::size_t at = skip_space();
    const std::string t = token(what);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || !std::isfinite(v)) fail(at, std::string("bad ") + what + " '" + t + "'");
    return v;
  }

  // The header ends with exactly one whitespace byte before the payload.
  std::size_t end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail(pos_, "expected whitespace after the scale");
    }
    return pos_ + 1;
  }

  std::size_t skip_space() {
    while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    return pos_;
  }

  [[noreturn]] static void fail(std::size_t offset, const std::string& msg) {
    throw ParseError("pfm: byte " + std::to_string(offset) + ": " + msg);
  }

  std::size_t pos_ = 0;

 private:
  const std::string& bytes_;
};

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

float load_float(const char* p, bool little) {
  std::uint32_t u;
  std::memcpy(&u, p, 4);
  if (little != (std::endian::native == std::endian::little)) u = byteswap32(u);
  return std::bit_cast<float>(u);
}

void store_float_le(char* p, float f) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  if (std::endian::native != std::endian::little) u = byteswap32(u);
  std::memcpy(p, &u, 4);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

PfmImage parse_pfm(const std::string& bytes) {
  HeaderReader r(bytes);
  const std::string magic = r.token("magic");
  PfmImage out;
  if (magic == "PF") {
    out.color = true;
  } else if (magic != "Pf") {
    HeaderReader::fail(0, "bad magic '" + magic.substr(0, 8) + "', expected Pf or PF");
  }
  const std::int64_t width = r.dimension("width");
  const std::int64_t height = r.dimension("height");
  const std::size_t scale_at = r.skip_space();
  const double scale = r.number("scale");
  if (scale == 0) HeaderReader::fail(scale_at, "scale must be nonzero");
  out.scale = static_cast<float>(scale);
  const std::size_t data_at = r.end_of_header();

  const std::int64_t channels = out.color ? 3 : 1;
  const std::size_t need = static_cast<std::size_t>(width * height * channels) * 4;
  if (bytes.size() - data_at < need) {
    HeaderReader::fail(bytes.size(), "truncated payload: expected " + std::to_string(need) + " bytes after offset " +
                                         std::to_string(data_at) + ", found " +
                                         std::to_string(bytes.size() - data_at));
  }
  const bool little = scale < 0;
  out.data = out.color ? Tensor<float>(Shape{3, height, width}) : Tensor<float>(Shape{height, width});
  float* dst = out.data.ptr();
  const char* src = bytes.data() + data_at;
  const std::int64_t plane = height * width;
  for (std::int64_t row = 0; row < height; ++row) {
    const std::int64_t y = height - 1 - row;  // stored bottom-to-top
    for (std::int64_t x = 0; x < width; ++x) {
      for (std::int64_t c = 0; c < channels; ++c) {
        dst[c * plane + y * width + x] = load_float(src, little);
        src += 4;
      }
    }
  }
  return out;
}

PfmImage read_pfm(const std::string& path) {
  try {
    return parse_pfm(slurp(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string encode_pfm(const Tensor<float>& image, float scale) {
  const bool color = image.rank() == 3;
  if (!(image.rank() == 2 || (color && image.dim(0) == 3))) {
    throw ShapeError("write_pfm: expected [H, W] or [3, H, W], got " + shape_str(image.shape()));
  }
  if (!(scale > 0) || !std::isfinite(scale)) throw ConfigError("write_pfm: scale magnitude must be positive");
  const std::int64_t height = image.dim(color ? 1 : 0);
  const std::int64_t width = image.dim(color ? 2 : 1);
  const std::int64_t channels = color ? 3 : 1;
  std::ostringstream header;
  header << (color ? "PF" : "Pf") << '\n' << width << ' ' << height << '\n';
  char sbuf[64];
  std::snprintf(sbuf, sizeof(sbuf), "%.9g", -static_cast<double>(scale));
  header << sbuf << '\n';
  std::string out = header.str();
  const std::size_t data_at = out.size();
  out.resize(data_at + static_cast<std::size_t>(width * height * channels) * 4);
  char* dst = out.data() + data_at;
  const float* src = image.ptr();
  const std::int64_t plane = height * width;
  for (std::int64_t row = 0; row < height; ++row) {
    const std::int64_t y = height - 1 - row;
    for (std::int64_t x = 0; x < width; ++x) {
      for (std::int64_t c = 0; c < channels; ++c) {
        store_float_le(dst, src[c * plane + y * width + x]);
        dst += 4;
      }
    }
  }
  return out;
}

void write_pfm(const std::string& path, const Tensor<float>& image, float scale) {
  const std::string bytes = encode_pfm(image, scale);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace gwc
