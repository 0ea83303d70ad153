#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace extc::io {

/// Reads a whole file; throws Errc::kFile on failure.
std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers see either the old
/// content or the new content, never a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

}  // namespace extc::io
