#pragma once

#include <bit>
#include <cstddef>
#include <cstring>
#include <span>
#include <stdexcept>
#include <vector>

#include "dpp/types.hpp"

namespace dpp {

// Buffers hold scalars in little-endian order, which is also the wire order.
static_assert(std::endian::native == std::endian::little, "little-endian host required");

/// Flat scalar storage for a stream or a point: `elements() * type.width` scalars.
struct Buffer {
  DataType type;
  std::vector<std::byte> bytes;

  Buffer() = default;
  Buffer(DataType t, std::size_t element_count) : type(t), bytes(element_count * t.byte_size()) {}
  Buffer(DataType t, std::vector<std::byte> raw) : type(t), bytes(std::move(raw)) {
    if (bytes.size() % t.byte_size() != 0) throw std::invalid_argument("buffer size is not a multiple of the element size");
  }

  std::size_t elements() const { return bytes.size() / type.byte_size(); }
  std::size_t scalars() const { return elements() * static_cast<std::size_t>(type.width); }

  friend bool operator==(const Buffer&, const Buffer&) = default;
};

struct ConstBufferView {
  DataType type;
  std::span<const std::byte> bytes;

  std::size_t elements() const { return bytes.size() / type.byte_size(); }
};

struct BufferView {
  DataType type;
  std::span<std::byte> bytes;

  std::size_t elements() const { return bytes.size() / type.byte_size(); }
  operator ConstBufferView() const { return {type, bytes}; }
};

inline ConstBufferView view(const Buffer& b) { return {b.type, b.bytes}; }
inline BufferView view(Buffer& b) { return {b.type, b.bytes}; }

/// Builds a buffer from host scalars; `values.size()` must be a multiple of `type.width`.
template <class T>
Buffer make_buffer(DataType type, const std::vector<T>& values) {
  if (sizeof(T) != scalar_size(type.base)) throw std::invalid_argument("host scalar size does not match buffer type");
  if (values.size() % static_cast<std::size_t>(type.width) != 0) throw std::invalid_argument("scalar count not a multiple of width");
  std::vector<std::byte> raw(values.size() * sizeof(T));
  if (!raw.empty()) std::memcpy(raw.data(), values.data(), raw.size());
  return Buffer(type, std::move(raw));
}

template <class T>
std::vector<T> to_vector(const Buffer& b) {
  if (sizeof(T) != scalar_size(b.type.base)) throw std::invalid_argument("host scalar size does not match buffer type");
  std::vector<T> out(b.bytes.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), b.bytes.data(), b.bytes.size());
  return out;
}

}  // namespace dpp
