#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dpp::wire {

// Data-plane byte format. All integers are little-endian.
//
//   handshake  "DPP1" u16 len, run id
//   reply      "DPOK" | "DPER", u16 len, message
//   frame      u8 type, then
//     DATA   (0)  u16 len, stream name, u64 chunk index, u32 element count, u32 payload len, payload
//     END    (1)  u16 len, stream name
//     ERROR  (2)  u16 len, message

inline constexpr std::string_view kHandshakeMagic = "DPP1";
inline constexpr std::string_view kReplyOk = "DPOK";
inline constexpr std::string_view kReplyError = "DPER";

/// Upper bound on a single DATA payload accepted by the decoder.
inline constexpr std::uint32_t kMaxPayload = 1u << 30;

enum class FrameType : std::uint8_t { Data = 0, End = 1, Error = 2 };

struct DataFrame {
  std::string stream;
  std::uint64_t chunk_index = 0;
  std::uint32_t element_count = 0;
  std::vector<std::byte> payload;

  friend bool operator==(const DataFrame&, const DataFrame&) = default;
};

struct EndFrame {
  std::string stream;

  friend bool operator==(const EndFrame&, const EndFrame&) = default;
};

struct ErrorFrame {
  std::string message;

  friend bool operator==(const ErrorFrame&, const ErrorFrame&) = default;
};

using Frame = std::variant<DataFrame, EndFrame, ErrorFrame>;

struct Reply {
  bool ok = false;
  std::string message;

  friend bool operator==(const Reply&, const Reply&) = default;
};

using Bytes = std::vector<std::byte>;

Bytes encode_handshake(std::string_view run_id);
Bytes encode_reply(const Reply& reply);
Bytes encode_frame(const Frame& frame);

/// Appends a DATA frame without building a DataFrame first.
void append_data_frame(Bytes& out, std::string_view stream, std::uint64_t chunk_index, std::uint32_t element_count,
                       std::span<const std::byte> payload);

/// Reads up to `n` bytes into `dst`, returning the count; 0 means end of input.
using ReadFn = std::function<std::size_t(std::byte* dst, std::size_t n)>;

/// Blocking decoders over a byte source. Each returns nullopt if the source ends
/// cleanly before the first byte and throws ProtocolError on truncated or malformed
/// input.
std::optional<std::string> read_handshake(const ReadFn& read);
std::optional<Reply> read_reply(const ReadFn& read);
std::optional<Frame> read_frame(const ReadFn& read);

/// ReadFn over an in-memory buffer, handing out at most `max_step` bytes per call.
ReadFn memory_reader(std::span<const std::byte> data, std::size_t max_step = SIZE_MAX);

}  // namespace dpp::wire
