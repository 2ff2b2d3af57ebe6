#include "oedflow/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "oedflow/error.hpp"

namespace oedflow {

namespace {

constexpr char kTensorMagic[4] = {'O', 'E', 'D', 'T'};
constexpr std::uint32_t kTensorVersion = 1;

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed for " + path.string());
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<unsigned char>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

struct PgmHeader {
  std::size_t width = 0, height = 0, maxval = 0, offset = 0;
};

// Reads one whitespace-delimited decimal token, skipping '#' comments.
std::size_t pgm_token(const std::vector<unsigned char>& b, std::size_t& pos, const std::string& name) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError(FormatError::Kind::Truncated, name + ": truncated header");
  std::size_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) v = v * 10 + (b[pos++] - '0');
  return v;
}

PgmHeader parse_pgm(const std::vector<unsigned char>& b, const std::string& name) {
  if (b.size() < 2 || b[0] != 'P' || b[1] != '5') throw FormatError(FormatError::Kind::BadMagic, name + ": bad magic");
  std::size_t pos = 2;
  PgmHeader h;
  h.width = pgm_token(b, pos, name);
  h.height = pgm_token(b, pos, name);
  h.maxval = pgm_token(b, pos, name);
  if (h.width == 0 || h.height == 0 || h.maxval == 0 || h.maxval > 65535)
    throw FormatError(FormatError::Kind::Corrupt, name + ": invalid header values");
  if (pos >= b.size()) throw FormatError(FormatError::Kind::Truncated, name + ": truncated payload");
  h.offset = pos + 1;  // single whitespace byte after maxval
  return h;
}

RealGrid decode_pgm(const std::vector<unsigned char>& b, const std::string& name) {
  const auto h = parse_pgm(b, name);
  const std::size_t bytes_per = h.maxval > 255 ? 2 : 1;
  const std::size_t n = h.width * h.height;
  if (b.size() < h.offset + n * bytes_per) throw FormatError(FormatError::Kind::Truncated, name + ": truncated payload");
  RealGrid img({h.height, h.width});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = h.offset + i * bytes_per;
    const std::size_t v = bytes_per == 2 ? (static_cast<std::size_t>(b[at]) << 8) | b[at + 1] : b[at];
    img.data[i] = static_cast<double>(v) / static_cast<double>(h.maxval);
  }
  return img;
}

RealGrid decode_tensor(const std::vector<unsigned char>& b, const std::string& name) {
  if (b.size() < 4 || !std::equal(kTensorMagic, kTensorMagic + 4, b.begin()))
    throw FormatError(FormatError::Kind::BadMagic, name + ": bad magic");
  if (b.size() < 12) throw FormatError(FormatError::Kind::Truncated, name + ": truncated header");
  const auto version = get_u32(b, 4);
  if (version != kTensorVersion)
    throw FormatError(FormatError::Kind::VersionMismatch, name + ": unsupported version " + std::to_string(version));
  const auto rank = get_u32(b, 8);
  if (rank == 0 || rank > 8) throw FormatError(FormatError::Kind::Corrupt, name + ": invalid rank");
  if (b.size() < 12 + 4 * static_cast<std::size_t>(rank)) throw FormatError(FormatError::Kind::Truncated, name + ": truncated header");
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_u32(b, 12 + 4 * i);
    if (shape[i] == 0) throw FormatError(FormatError::Kind::Corrupt, name + ": zero extent");
  }
  const std::size_t n = shape_size(shape);
  const std::size_t offset = 12 + 4 * rank;
  if (b.size() < offset + 4 * n) throw FormatError(FormatError::Kind::Truncated, name + ": truncated payload");
  RealGrid t(shape);
  for (std::size_t i = 0; i < n; ++i) {
    const float f = std::bit_cast<float>(get_u32(b, offset + 4 * i));
    if (!std::isfinite(f)) throw FormatError(FormatError::Kind::Corrupt, name + ": non-finite payload value");
    t.data[i] = static_cast<double>(f);
  }
  return t;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height, std::uint16_t maxval,
               const std::vector<std::uint16_t>& pixels) {
  if (pixels.size() != width * height) throw InvalidArgument("write_pgm: pixel count mismatch");
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n" +
                             std::to_string(maxval) + "\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (auto v : pixels) {
    if (v > maxval) throw InvalidArgument("write_pgm: value exceeds maxval");
    if (maxval > 255) bytes.push_back(static_cast<unsigned char>(v >> 8));
    bytes.push_back(static_cast<unsigned char>(v & 0xFF));
  }
  spit(path, bytes);
}

void write_pgm_image(const std::filesystem::path& path, const RealGrid& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw InvalidArgument("write_pgm_image: bit depth must be 8 or 16");
  std::size_t height = 1, width = image.size();
  if (image.shape.size() == 2) {
    height = image.shape[0];
    width = image.shape[1];
  } else if (image.shape.size() != 1) {
    throw InvalidArgument("write_pgm_image: image must be 1D or 2D");
  }
  const std::uint16_t maxval = bit_depth == 8 ? 255 : 65535;
  std::vector<std::uint16_t> px(image.size());
  for (std::size_t i = 0; i < image.size(); ++i)
    px[i] = static_cast<std::uint16_t>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * maxval));
  write_pgm(path, width, height, maxval, px);
}

RealGrid read_pgm(const std::filesystem::path& path) { return decode_pgm(slurp(path), path.string()); }

void write_tensor(const std::filesystem::path& path, const RealGrid& tensor) {
  std::vector<unsigned char> bytes(kTensorMagic, kTensorMagic + 4);
  put_u32(bytes, kTensorVersion);
  put_u32(bytes, static_cast<std::uint32_t>(tensor.shape.size()));
  for (auto e : tensor.shape) put_u32(bytes, static_cast<std::uint32_t>(e));
  for (double v : tensor.data) put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  spit(path, bytes);
}

RealGrid read_tensor(const std::filesystem::path& path) { return decode_tensor(slurp(path), path.string()); }

std::vector<RealGrid> load_images(const std::filesystem::path& path, const Shape& extents) {
  const auto bytes = slurp(path);
  const std::string name = path.string();
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
    auto img = decode_pgm(bytes, name);
    if (img.shape != extents) throw FormatError(FormatError::Kind::ExtentMismatch, name + ": extent mismatch");
    return {std::move(img)};
  }
  const auto t = decode_tensor(bytes, name);
  const std::size_t per = shape_size(extents);
  std::size_t count = 0;
  if (t.shape == extents) {
    count = 1;
  } else if (t.shape.size() == extents.size() + 1 && std::equal(extents.begin(), extents.end(), t.shape.begin() + 1)) {
    count = t.shape[0];
  } else {
    throw FormatError(FormatError::Kind::ExtentMismatch, name + ": extent mismatch");
  }
  const auto [lo, hi] = std::minmax_element(t.data.begin(), t.data.end());
  const double range = *hi - *lo;
  std::vector<RealGrid> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    RealGrid img(extents);
    for (std::size_t i = 0; i < per; ++i) img.data[i] = range > 0.0 ? (t.data[c * per + i] - *lo) / range : 0.0;
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace oedflow
