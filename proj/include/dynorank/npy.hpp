#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dynorank::npy {

// Element type of an NPY payload, normalized to little-endian host order.
enum class DType { kFloat32, kFloat64, kInt8, kInt16, kInt32, kInt64, kUInt8, kUInt16, kUInt32, kUInt64, kBool };

std::size_t dtype_size(DType t);

// Decoded NPY array. `bytes` always holds C-order, host-endian elements:
// Fortran-order and big-endian payloads are converted while parsing.
struct Array {
  std::vector<std::size_t> shape;
  DType dtype = DType::kFloat64;
  std::vector<unsigned char> bytes;

  std::size_t size() const;

  // Element-wise conversion to T. Throws ValidationError for bool->float
  // style mismatches that are not meaningful.
  template <typename T>
  std::vector<T> as() const;
};

// Parses a complete NPY file image (format versions 1.0, 2.0 and 3.0).
Array parse(std::span<const unsigned char> file);
Array read(const std::filesystem::path& path);

// Serializes as NPY v1.0 (v2.0 when the header does not fit in 65535 bytes).
std::vector<unsigned char> serialize(std::span<const std::size_t> shape, DType dtype,
                                     std::span<const unsigned char> payload);

void write(const std::filesystem::path& path, std::span<const std::size_t> shape,
           std::span<const float> values);
void write(const std::filesystem::path& path, std::span<const std::size_t> shape,
           std::span<const double> values);
void write(const std::filesystem::path& path, std::span<const std::size_t> shape,
           std::span<const std::int64_t> values);

// Writes bytes to `path` via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);
std::vector<unsigned char> read_file(const std::filesystem::path& path);

}  // namespace dynorank::npy
