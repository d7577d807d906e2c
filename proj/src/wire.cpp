#include "dpp/wire.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#include "dpp/error.hpp"

namespace dpp::wire {

namespace {

template <class T>
void put(Bytes& out, T value) {
  const auto* p = reinterpret_cast<const std::byte*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

void put_bytes(Bytes& out, std::string_view s) {
  const auto* p = reinterpret_cast<const std::byte*>(s.data());
  out.insert(out.end(), p, p + s.size());
}

void put_string(Bytes& out, std::string_view s, const char* what) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ProtocolError(std::string(what) + " longer than 65535 bytes");
  }
  put(out, static_cast<std::uint16_t>(s.size()));
  put_bytes(out, s);
}

class Source {
 public:
  explicit Source(const ReadFn& read) : read_(read) {}

  // First read of a message: distinguishes clean end of input from truncation.
  bool begin(std::byte* dst, std::size_t n) {
    std::size_t got = read_(dst, n);
    if (got == 0) return false;
    fill(dst + got, n - got);
    return true;
  }

  void fill(std::byte* dst, std::size_t n) {
    while (n > 0) {
      std::size_t got = read_(dst, n);
      if (got == 0) throw ProtocolError("connection closed in the middle of a message");
      dst += got;
      n -= got;
    }
  }

  template <class T>
  T get() {
    T value;
    fill(reinterpret_cast<std::byte*>(&value), sizeof(T));
    return value;
  }

  std::string get_string() {
    auto len = get<std::uint16_t>();
    std::string s(len, '\0');
    fill(reinterpret_cast<std::byte*>(s.data()), len);
    return s;
  }

 private:
  const ReadFn& read_;
};

std::optional<std::string> read_tagged(const ReadFn& read, std::string& magic) {
  Source src(read);
  magic.assign(4, '\0');
  if (!src.begin(reinterpret_cast<std::byte*>(magic.data()), 4)) return std::nullopt;
  return src.get_string();
}

}  // namespace

Bytes encode_handshake(std::string_view run_id) {
  Bytes out;
  put_bytes(out, kHandshakeMagic);
  put_string(out, run_id, "run id");
  return out;
}

Bytes encode_reply(const Reply& reply) {
  Bytes out;
  put_bytes(out, reply.ok ? kReplyOk : kReplyError);
  put_string(out, reply.message, "reply message");
  return out;
}

void append_data_frame(Bytes& out, std::string_view stream, std::uint64_t chunk_index, std::uint32_t element_count,
                       std::span<const std::byte> payload) {
  if (payload.size() > kMaxPayload) throw ProtocolError("DATA payload too large");
  put(out, static_cast<std::uint8_t>(FrameType::Data));
  put_string(out, stream, "stream name");
  put(out, chunk_index);
  put(out, element_count);
  put(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
}

Bytes encode_frame(const Frame& frame) {
  Bytes out;
  if (const auto* d = std::get_if<DataFrame>(&frame)) {
    append_data_frame(out, d->stream, d->chunk_index, d->element_count, d->payload);
  } else if (const auto* e = std::get_if<EndFrame>(&frame)) {
    put(out, static_cast<std::uint8_t>(FrameType::End));
    put_string(out, e->stream, "stream name");
  } else {
    put(out, static_cast<std::uint8_t>(FrameType::Error));
    put_string(out, std::get<ErrorFrame>(frame).message, "error message");
  }
  return out;
}

std::optional<std::string> read_handshake(const ReadFn& read) {
  std::string magic;
  auto id = read_tagged(read, magic);
  if (id && magic != kHandshakeMagic) throw ProtocolError("bad handshake magic");
  return id;
}

std::optional<Reply> read_reply(const ReadFn& read) {
  std::string magic;
  auto msg = read_tagged(read, magic);
  if (!msg) return std::nullopt;
  if (magic == kReplyOk) return Reply{true, *msg};
  if (magic == kReplyError) return Reply{false, *msg};
  throw ProtocolError("bad handshake reply magic");
}

std::optional<Frame> read_frame(const ReadFn& read) {
  Source src(read);
  std::uint8_t type = 0;
  if (!src.begin(reinterpret_cast<std::byte*>(&type), 1)) return std::nullopt;
  switch (static_cast<FrameType>(type)) {
    case FrameType::Data: {
      DataFrame d;
      d.stream = src.get_string();
      d.chunk_index = src.get<std::uint64_t>();
      d.element_count = src.get<std::uint32_t>();
      auto len = src.get<std::uint32_t>();
      if (len > kMaxPayload) throw ProtocolError("DATA payload of " + std::to_string(len) + " bytes exceeds the limit");
      d.payload.resize(len);
      src.fill(d.payload.data(), len);
      return d;
    }
    case FrameType::End:
      return EndFrame{src.get_string()};
    case FrameType::Error:
      return ErrorFrame{src.get_string()};
  }
  throw ProtocolError("unknown frame type " + std::to_string(type));
}

ReadFn memory_reader(std::span<const std::byte> data, std::size_t max_step) {
  return [data, max_step, pos = std::size_t{0}](std::byte* dst, std::size_t n) mutable {
    std::size_t k = std::min({n, max_step, data.size() - pos});
    if (k > 0) std::memcpy(dst, data.data() + pos, k);
    pos += k;
    return k;
  };
}

}  // namespace dpp::wire
