#pragma once

// ATNB: the binary tensor container used for every tensor crossing the
// component boundary.
//
//   offset  size  field
//   0       4     magic "ATNB"
//   4       2     version (u16 LE, = 1)
//   6       1     dtype code (u8, 0 = float32)
//   7       1     reserved (0)
//   8       4     dimension count n (u32 LE, 1..4)
//   12      8*n   dimensions (u64 LE each)
//   12+8n   4*N   row-major float32 LE payload, N = product of dimensions

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "seediff/errors.hpp"
#include "seediff/tensor.hpp"

namespace seediff::atnb {

inline constexpr std::array<char, 4> kMagic = {'A', 'T', 'N', 'B'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 0;
inline constexpr std::size_t kMaxRank = 4;

inline constexpr std::size_t header_size(std::size_t rank) {
  return 12 + 8 * rank;
}

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(p[i]) << (8 * i);
  }
  return value;
}

}  // namespace detail

/// Serializes `tensor` to ATNB bytes. Output is a pure function of the
/// tensor's shape and bit patterns.
inline std::vector<std::uint8_t> encode(const Tensor& tensor) {
  if (tensor.rank() < 1 || tensor.rank() > kMaxRank) {
    throw EncodingError("ATNB supports 1 to 4 dimensions, got " +
                        std::to_string(tensor.rank()));
  }
  for (std::size_t d : tensor.shape()) {
    if (d == 0) throw EncodingError("ATNB dimensions must be positive");
  }
  if (!tensor.all_finite()) {
    throw EncodingError("tensor contains a non-finite entry");
  }

  std::vector<std::uint8_t> out;
  out.reserve(header_size(tensor.rank()) + tensor.size() * 4);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  detail::put_le<std::uint16_t>(out, kVersion);
  out.push_back(kDtypeFloat32);
  out.push_back(0);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) {
    detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  }

  const std::size_t payload_at = out.size();
  out.resize(payload_at + tensor.size() * 4);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data() + payload_at, tensor.data(), tensor.size() * 4);
  } else {
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(tensor[i]);
      for (std::size_t b = 0; b < 4; ++b) {
        out[payload_at + 4 * i + b] = static_cast<std::uint8_t>(bits >> (8 * b));
      }
    }
  }
  return out;
}

/// Parses ATNB bytes. Throws FormatError on any deviation from the layout,
/// including trailing bytes.
inline Tensor decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < header_size(0)) {
    throw FormatError("ATNB stream shorter than the fixed header");
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError("bad ATNB magic");
  }
  const auto version = detail::get_le<std::uint16_t>(bytes.data() + 4);
  if (version != kVersion) {
    throw FormatError("unsupported ATNB version " + std::to_string(version));
  }
  if (bytes[6] != kDtypeFloat32) {
    throw FormatError("unsupported ATNB dtype code " + std::to_string(bytes[6]));
  }
  const auto rank = detail::get_le<std::uint32_t>(bytes.data() + 8);
  if (rank < 1 || rank > kMaxRank) {
    throw FormatError("ATNB dimension count " + std::to_string(rank) +
                      " outside 1..4");
  }
  if (bytes.size() < header_size(rank)) {
    throw FormatError("ATNB header truncated");
  }

  Shape shape(rank);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const auto d = detail::get_le<std::uint64_t>(bytes.data() + 12 + 8 * i);
    if (d == 0) throw FormatError("ATNB dimension of size zero");
    if (count > std::numeric_limits<std::uint64_t>::max() / 4 / d) {
      throw FormatError("ATNB dimensions overflow");
    }
    count *= d;
    shape[i] = static_cast<std::size_t>(d);
  }

  const std::size_t payload = bytes.size() - header_size(rank);
  if (payload != count * 4) {
    throw FormatError("ATNB payload is " + std::to_string(payload) +
                      " bytes, dimensions " + to_string(shape) + " require " +
                      std::to_string(count * 4));
  }

  std::vector<float> values(static_cast<std::size_t>(count));
  const std::uint8_t* src = bytes.data() + header_size(rank);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(values.data(), src, payload);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(src + 4 * i));
    }
  }
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace seediff::atnb

namespace seediff {

inline void write_bytes(const std::filesystem::path& destination,
                        std::span<const std::uint8_t> bytes) {
  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + destination.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write to " + destination.string() + " failed");
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw IoError("cannot open " + source.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  if (size < 0) throw IoError("cannot size " + source.string());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw IoError("read from " + source.string() + " failed");
  return bytes;
}

inline void write_tensor(const Tensor& tensor,
                         const std::filesystem::path& destination) {
  write_bytes(destination, atnb::encode(tensor));
}

inline Tensor read_tensor(const std::filesystem::path& source) {
  return atnb::decode(read_bytes(source));
}

}  // namespace seediff
