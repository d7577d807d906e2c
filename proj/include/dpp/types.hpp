#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dpp {

/// Scalar element types. Integers are two's complement, float is binary32.
enum class ScalarType : std::uint8_t { Char, UChar, Short, UShort, Int, UInt, Long, ULong, Float };

std::size_t scalar_size(ScalarType t);
bool is_integer(ScalarType t);
bool is_signed(ScalarType t);
std::string_view scalar_name(ScalarType t);
std::optional<ScalarType> scalar_from_name(std::string_view name);

constexpr bool valid_width(int w) { return w == 1 || w == 2 || w == 4 || w == 8 || w == 16; }

/// A scalar or vector type: `base` repeated `width` times.
struct DataType {
  ScalarType base = ScalarType::Float;
  int width = 1;

  bool is_vector() const { return width > 1; }
  bool is_integer() const { return dpp::is_integer(base); }
  bool is_float() const { return base == ScalarType::Float; }
  DataType scalar() const { return {base, 1}; }
  std::size_t byte_size() const { return scalar_size(base) * static_cast<std::size_t>(width); }
  std::string name() const;

  friend bool operator==(const DataType&, const DataType&) = default;
};

/// Parses "float", "uchar4", ... Returns nullopt for anything else.
std::optional<DataType> parse_data_type(std::string_view name);

}  // namespace dpp
