#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace flowssm {

/// Hex SHA-1 of `data`.
[[nodiscard]] std::string sha1_hex(std::string_view data);

/// Git blob id: SHA-1 of "blob <size>\0" followed by the contents.
[[nodiscard]] std::string git_blob_hash(std::string_view contents);
[[nodiscard]] std::string git_blob_hash_file(const std::filesystem::path& path);

}  // namespace flowssm
