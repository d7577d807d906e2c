#include "dpp/types.hpp"

#include <array>
#include <charconv>

namespace dpp {
namespace {

struct ScalarInfo {
  ScalarType type;
  std::string_view name;
  std::size_t size;
  bool integer;
  bool is_signed;
};

constexpr std::array<ScalarInfo, 9> kScalars{{
    {ScalarType::Char, "char", 1, true, true},
    {ScalarType::UChar, "uchar", 1, true, false},
    {ScalarType::Short, "short", 2, true, true},
    {ScalarType::UShort, "ushort", 2, true, false},
    {ScalarType::Int, "int", 4, true, true},
    {ScalarType::UInt, "uint", 4, true, false},
    {ScalarType::Long, "long", 8, true, true},
    {ScalarType::ULong, "ulong", 8, true, false},
    {ScalarType::Float, "float", 4, false, true},
}};

const ScalarInfo& info(ScalarType t) { return kScalars[static_cast<std::size_t>(t)]; }

}  // namespace

std::size_t scalar_size(ScalarType t) { return info(t).size; }
bool is_integer(ScalarType t) { return info(t).integer; }
bool is_signed(ScalarType t) { return info(t).is_signed; }
std::string_view scalar_name(ScalarType t) { return info(t).name; }

std::optional<ScalarType> scalar_from_name(std::string_view name) {
  for (const auto& s : kScalars) {
    if (s.name == name) return s.type;
  }
  return std::nullopt;
}

std::string DataType::name() const {
  std::string out(scalar_name(base));
  if (width > 1) out += std::to_string(width);
  return out;
}

std::optional<DataType> parse_data_type(std::string_view name) {
  std::size_t split = name.size();
  while (split > 0 && name[split - 1] >= '0' && name[split - 1] <= '9') --split;
  auto base = scalar_from_name(name.substr(0, split));
  if (!base) return std::nullopt;
  if (split == name.size()) return DataType{*base, 1};
  auto digits = name.substr(split);
  if (digits.front() == '0') return std::nullopt;
  int width = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), width);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  // "float1" is not an OpenCL type name.
  if (width == 1 || !valid_width(width)) return std::nullopt;
  return DataType{*base, width};
}

}  // namespace dpp
