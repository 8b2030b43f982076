#pragma once

#include <filesystem>
#include <string_view>

namespace flowssm {

/// Writes `contents` to a sibling temporary file and renames it over `path`.
/// Throws IoError on failure; the destination is never left half-written.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

[[nodiscard]] std::string read_file(const std::filesystem::path& path);

}  // namespace flowssm
