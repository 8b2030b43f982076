#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "flowssm/autodiff/tensor.hpp"

namespace flowssm::ad {

/// Named tensors plus a JSON manifest, stored as one binary file:
///
///   "FSSMTNSR"            8-byte magic
///   u32 version           currently 1
///   u64 manifest bytes, then UTF-8 JSON
///   u32 tensor count, then per tensor:
///     u32 name bytes, name, u32 rank, u64 dims[rank], f64 data[prod(dims)]
///
/// All integers and floats are little-endian. In memory a tensor of rank >= 2
/// is a shape[0] x (remaining dims) row-major matrix.
struct TensorArchive {
  nlohmann::json manifest = nlohmann::json::object();
  std::map<std::string, std::pair<Shape, Matrix>> tensors;

  void put(const std::string& name, const Matrix& value);
  void put(const std::string& name, const Matrix& value, Shape shape);
  [[nodiscard]] const Matrix& get(const std::string& name) const;
  [[nodiscard]] bool contains(const std::string& name) const { return tensors.count(name) != 0; }
};

inline constexpr std::uint32_t kArchiveVersion = 1;

[[nodiscard]] std::string serialize_archive(const TensorArchive& archive);
[[nodiscard]] TensorArchive deserialize_archive(std::string_view bytes);

/// Atomic write; throws IoError.
void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
/// Throws IoError on a missing file, bad magic, unknown version or truncation.
[[nodiscard]] TensorArchive read_archive(const std::filesystem::path& path);

}  // namespace flowssm::ad
