#include "avloc/avic_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "avloc/error.hpp"

namespace avloc {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw IoError("AVIC: truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

}  // namespace

std::vector<std::uint8_t> encode_avic(const Tensor& t) {
  std::vector<std::uint8_t> out{'A', 'V', 'I', 'C'};
  out.reserve(12 + 4 * t.rank() + 4 * t.size());
  put_u32(out, kAvicVersion);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (double v : t.data()) put_f32(out, v);
  return out;
}

Tensor decode_avic(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "AVIC", 4) != 0) {
    throw IoError("AVIC: bad magic");
  }
  std::size_t pos = 4;
  const auto version = get_u32(bytes, pos);
  if (version != kAvicVersion) throw IoError("AVIC: unsupported version " + std::to_string(version));
  const auto ndim = get_u32(bytes, pos);
  if (ndim == 0) throw IoError("AVIC: zero-rank tensor");
  Shape shape;
  for (std::uint32_t i = 0; i < ndim; ++i) shape.push_back(get_u32(bytes, pos));
  std::size_t n = 1;
  for (auto e : shape) {
    if (e == 0) throw IoError("AVIC: zero extent");
    n *= e;
  }
  if (bytes.size() - pos != 4 * n) {
    throw IoError("AVIC: payload holds " + std::to_string(bytes.size() - pos) +
                  " bytes, expected " + std::to_string(4 * n));
  }
  std::vector<double> data(n);
  for (auto& v : data) v = static_cast<double>(std::bit_cast<float>(get_u32(bytes, pos)));
  return Tensor(std::move(shape), std::move(data));
}

void write_avic(const std::filesystem::path& path, const Tensor& t) {
  write_bytes(path, encode_avic(t));
}

Tensor read_avic(const std::filesystem::path& path) { return decode_avic(read_bytes(path)); }

Tensor quantize_f32(const Tensor& t) {
  Tensor q = t;
  for (auto& v : q.data()) v = static_cast<double>(static_cast<float>(v));
  return q;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<std::uint8_t> encode_f32le(const std::vector<double>& values) {
  std::vector<std::uint8_t> out;
  out.reserve(4 * values.size());
  for (double v : values) put_f32(out, v);
  return out;
}

std::vector<double> decode_f32le(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % 4 != 0) throw IoError("raw f32 stream length is not a multiple of 4");
  std::vector<double> out(bytes.size() / 4);
  std::size_t pos = 0;
  for (auto& v : out) v = static_cast<double>(std::bit_cast<float>(get_u32(bytes, pos)));
  return out;
}

}  // namespace avloc
