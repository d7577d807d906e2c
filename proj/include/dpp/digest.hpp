#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dpp {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Standard base64 with padding.
std::string base64_encode(std::span<const std::byte> data);
/// Returns nullopt for malformed input. Whitespace is not accepted.
std::optional<std::vector<std::byte>> base64_decode(std::string_view text);

}  // namespace dpp
