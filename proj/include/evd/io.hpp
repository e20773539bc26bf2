#pragma once

// "EVD1" binary matrix files: 4 magic bytes, little-endian u64 n, then
// (rectangular only) u64 m, then the column-major FP64 payload. Square and
// rectangular files are told apart by total size, which is unambiguous.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "evd/matrix.hpp"

namespace evd::io {

static_assert(std::endian::native == std::endian::little, "EVD1 I/O assumes a little-endian host");

inline constexpr char kMagic[4] = {'E', 'V', 'D', '1'};

class IoError : public Error {
 public:
  using Error::Error;
};

inline std::vector<char> encode(const Matrix& m) {
  const bool square = m.rows() == m.cols();
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  std::vector<char> out(4 + 8 + (square ? 0 : 8) + 8 * rows * cols);
  char* p = out.data();
  std::memcpy(p, kMagic, 4);
  p += 4;
  std::memcpy(p, &rows, 8);
  p += 8;
  if (!square) {
    std::memcpy(p, &cols, 8);
    p += 8;
  }
  if (!m.empty()) std::memcpy(p, m.data(), 8 * rows * cols);
  return out;
}

inline Matrix decode(std::span<const char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IoError("not an EVD1 matrix file");
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data() + 4, 8);
  const std::uint64_t payload_square = bytes.size() - 12;
  if (n > 0 && n < (1ull << 28) && payload_square == 8 * n * n) {
    Matrix m(static_cast<index_t>(n), static_cast<index_t>(n));
    std::memcpy(m.data(), bytes.data() + 12, payload_square);
    return m;
  }
  if (bytes.size() < 20) throw IoError("truncated EVD1 header");
  std::uint64_t cols = 0;
  std::memcpy(&cols, bytes.data() + 12, 8);
  const std::uint64_t payload = bytes.size() - 20;
  if (n >= (1ull << 28) || cols >= (1ull << 28) || payload != 8 * n * cols) throw IoError("EVD1 payload size does not match header");
  Matrix m(static_cast<index_t>(n), static_cast<index_t>(cols));
  if (payload) std::memcpy(m.data(), bytes.data() + 20, payload);
  return m;
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto bytes = encode(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

/// Vectors are stored as n x 1 matrices.
inline void write_vector(const std::filesystem::path& path, std::span<const double> v) {
  Matrix m(static_cast<index_t>(v.size()), 1);
  std::copy(v.begin(), v.end(), m.data());
  write_matrix(path, m);
}

inline std::vector<double> read_vector(const std::filesystem::path& path) {
  Matrix m = read_matrix(path);
  if (m.cols() != 1 && !(m.rows() == 1 && m.cols() == 1)) throw IoError("expected an n x 1 vector file");
  return {m.data(), m.data() + m.rows()};
}

}  // namespace evd::io
