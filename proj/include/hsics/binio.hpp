#pragma once

// Shared layout of the HSDICT1 / HSMEAS1 / HSBAL1 files: an 8-byte magic,
// then one or more matrix blocks (u32 rows, u32 cols, f64 column-major), then
// a u32 byte count and a UTF-8 JSON blob. Everything little-endian. Vectors
// are stored as single-column blocks.

#include "hsics/core.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace hsics::binio {

struct Contents {
  std::vector<Matrix> blocks;
  std::string json;
};

/// `magic` is 7 characters; the terminating NUL is written as the 8th byte.
void write(const std::filesystem::path& path, const char* magic, const std::vector<const Matrix*>& blocks,
           const std::string& json);

/// Throws ValidationError on a wrong magic, truncation, trailing bytes or a
/// block count other than `blocks`.
Contents read(const std::filesystem::path& path, const char* magic, int blocks);

} // namespace hsics::binio
