#pragma once

// TDF binary tensor files: "TDF1", u8 dtype (0 = f64), u8 rank,
// rank x u32 little-endian dims, then the row-major little-endian payload.

#include <filesystem>
#include <string>

#include "fedsurg/tensor.hpp"

namespace fedsurg::tdf {

inline constexpr char kMagic[4] = {'T', 'D', 'F', '1'};
inline constexpr unsigned char kDtypeF64 = 0;

std::string encode(const Tensor& tensor);
Tensor decode(std::string_view bytes);

void write(const std::filesystem::path& path, const Tensor& tensor);
Tensor read(const std::filesystem::path& path);

/// FNV-1a of the file's bytes, as 16 lowercase hex digits.
std::string file_checksum(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

}  // namespace fedsurg::tdf
