#include "fedsurg/tdf.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fedsurg/errors.hpp"
#include "fedsurg/rng.hpp"

namespace fedsurg::tdf {

namespace {

template <typename UInt>
void put_le(std::string& out, UInt value) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

template <typename UInt>
UInt get_le(std::string_view bytes, std::size_t offset) {
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    value |= static_cast<UInt>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::string encode(const Tensor& tensor) {
  if (tensor.rank() > 255) throw DimensionError("TDF rank limited to 255");
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kDtypeF64));
  out.push_back(static_cast<char>(tensor.rank()));
  for (auto d : tensor.shape()) {
    if (d > UINT32_MAX) throw DimensionError("TDF dimension exceeds u32");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + 8 * tensor.size());
  for (double v : tensor.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Tensor decode(std::string_view bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("TDF: bad magic");
  const auto dtype = static_cast<unsigned char>(bytes[4]);
  if (dtype != kDtypeF64) throw FormatError("TDF: unsupported dtype tag " + std::to_string(dtype));
  const std::size_t rank = static_cast<unsigned char>(bytes[5]);
  std::size_t offset = 6;
  if (bytes.size() < offset + 4 * rank) throw FormatError("TDF: truncated header");
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_le<std::uint32_t>(bytes, offset);
    if (shape[i] == 0) throw FormatError("TDF: zero dimension");
    offset += 4;
  }
  const std::size_t n = shape_size(shape);
  if (bytes.size() != offset + 8 * n) throw FormatError("TDF: payload length mismatch");
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, offset));
    offset += 8;
  }
  return Tensor(std::move(shape), std::move(data));
}

void write(const std::filesystem::path& path, const Tensor& tensor) {
  const std::string bytes = encode(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Tensor read(const std::filesystem::path& path) { return decode(read_file(path)); }

std::string hex64(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return s;
}

std::string file_checksum(const std::filesystem::path& path) { return hex64(fnv1a64(read_file(path))); }

}  // namespace fedsurg::tdf
