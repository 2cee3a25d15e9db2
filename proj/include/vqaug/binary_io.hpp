#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace vqaug {

/// Little-endian IEEE-754 doubles, independent of host byte order.
void write_f64_le(std::ostream& out, std::span<const double> values);
void read_f64_le(std::istream& in, std::span<double> values);

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace vqaug
