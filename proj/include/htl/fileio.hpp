#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace htl {

// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);
// CRC-32 (zlib) of the bytes, as 8 lowercase hex digits.
std::string crc32_hex(std::string_view bytes);
std::uint32_t crc32_of(std::string_view bytes);

}  // namespace htl
