#pragma once

// AVIC tensor files: "AVIC", u32 version (1), u32 ndim, ndim x u32 extents,
// then row-major float32 values. All integers and floats little-endian.
// Values are stored in 32-bit precision and widened to double on load.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avloc/tensor.hpp"

namespace avloc {

inline constexpr std::uint32_t kAvicVersion = 1;

std::vector<std::uint8_t> encode_avic(const Tensor& t);
Tensor decode_avic(const std::vector<std::uint8_t>& bytes);

void write_avic(const std::filesystem::path& path, const Tensor& t);
Tensor read_avic(const std::filesystem::path& path);

/// Rounds every value to float32 and back, i.e. what a save/load cycle yields.
Tensor quantize_f32(const Tensor& t);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Raw little-endian float32 sample stream.
std::vector<std::uint8_t> encode_f32le(const std::vector<double>& values);
std::vector<double> decode_f32le(const std::vector<std::uint8_t>& bytes);

}  // namespace avloc
