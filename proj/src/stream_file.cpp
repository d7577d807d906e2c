#include "dpp/stream_file.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "dpp/error.hpp"

namespace dpp {

std::vector<std::byte> encode_stream_file(const Buffer& buffer) {
  const std::string name = buffer.type.name();
  const std::uint64_t count = buffer.elements();
  std::vector<std::byte> out(4 + 1 + name.size() + 8 + buffer.bytes.size());
  std::byte* p = out.data();
  std::memcpy(p, kStreamFileMagic.data(), 4);
  p[4] = static_cast<std::byte>(name.size());
  std::memcpy(p + 5, name.data(), name.size());
  std::memcpy(p + 5 + name.size(), &count, 8);
  if (!buffer.bytes.empty()) std::memcpy(p + 13 + name.size(), buffer.bytes.data(), buffer.bytes.size());
  return out;
}

Buffer decode_stream_file(std::span<const std::byte> data) {
  if (data.size() < 5 || std::memcmp(data.data(), kStreamFileMagic.data(), 4) != 0) {
    throw IoError("not a stream file (bad magic)");
  }
  const std::size_t name_len = static_cast<std::uint8_t>(data[4]);
  if (data.size() < 13 + name_len) throw IoError("truncated stream file header");
  std::string name(reinterpret_cast<const char*>(data.data()) + 5, name_len);
  auto type = parse_data_type(name);
  if (!type) throw IoError("stream file has unknown type '" + name + "'");
  std::uint64_t count = 0;
  std::memcpy(&count, data.data() + 5 + name_len, 8);
  auto body = data.subspan(13 + name_len);
  if (count > body.size() / type->byte_size() || body.size() != count * type->byte_size()) {
    throw IoError("stream file body has " + std::to_string(body.size()) + " bytes, header announces " +
                  std::to_string(count) + " elements of " + name);
  }
  return Buffer(*type, std::vector<std::byte>(body.begin(), body.end()));
}

Buffer read_stream_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("cannot read " + path.string());
  try {
    return decode_stream_file(std::as_bytes(std::span(raw)));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_stream_file(const std::filesystem::path& path, const Buffer& buffer) {
  auto bytes = encode_stream_file(buffer);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace dpp
