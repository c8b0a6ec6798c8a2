#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace jsvuln {

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);

/// SHA-256 of a file, or of a directory tree (relative paths and contents of
/// all regular files, visited in sorted order).
std::string hash_path(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace jsvuln
