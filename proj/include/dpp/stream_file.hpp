#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dpp/buffer.hpp"

namespace dpp {

// Stream file layout (little-endian):
//   "DPS1", u8 type-name length, type name, u64 element count, elements
inline constexpr std::string_view kStreamFileMagic = "DPS1";

std::vector<std::byte> encode_stream_file(const Buffer& buffer);
/// Throws IoError on a bad header or a body of the wrong length.
Buffer decode_stream_file(std::span<const std::byte> data);

/// Throw IoError if the file cannot be read or written.
Buffer read_stream_file(const std::filesystem::path& path);
void write_stream_file(const std::filesystem::path& path, const Buffer& buffer);

}  // namespace dpp
