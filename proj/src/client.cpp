#include "dpp/client.hpp"

#include <exception>
#include <set>
#include <thread>

#include <httplib.h>

#include "dpp/socket.hpp"
#include "dpp/wire.hpp"

namespace dpp {

using json = nlohmann::json;

namespace {

struct Url {
  std::string scheme_host_port;  // what httplib::Client wants
  std::string host;
  std::uint16_t port = 80;
};

Url parse_url(const std::string& base) {
  std::string rest = base;
  if (rest.rfind("http://", 0) == 0) {
    rest = rest.substr(7);
  } else if (rest.find("://") != std::string::npos) {
    throw NetworkError("unsupported server URL '" + base + "' (only http:// is supported)", false);
  }
  rest = rest.substr(0, rest.find('/'));
  Url u;
  std::string port;
  if (!rest.empty() && rest.front() == '[') {
    auto close = rest.find(']');
    if (close == std::string::npos) throw NetworkError("malformed server URL '" + base + "'", false);
    u.host = rest.substr(1, close - 1);
    if (close + 1 < rest.size() && rest[close + 1] == ':') port = rest.substr(close + 2);
  } else {
    auto colon = rest.rfind(':');
    u.host = rest.substr(0, colon);
    if (colon != std::string::npos) port = rest.substr(colon + 1);
  }
  if (u.host.empty()) throw NetworkError("malformed server URL '" + base + "'", false);
  if (!port.empty()) {
    try {
      unsigned long p = std::stoul(port);
      if (p == 0 || p > 65535) throw std::out_of_range("port");
      u.port = static_cast<std::uint16_t>(p);
    } catch (const std::exception&) {
      throw NetworkError("malformed port in server URL '" + base + "'", false);
    }
  }
  u.scheme_host_port = "http://" + rest;
  return u;
}

httplib::Client make_client(const Url& url) {
  httplib::Client cli(url.scheme_host_port);
  cli.set_connection_timeout(10);
  cli.set_read_timeout(600);
  cli.set_write_timeout(600);
  return cli;
}

[[noreturn]] void transport_failure(const std::string& what, httplib::Error err) {
  throw NetworkError(what + ": " + httplib::to_string(err), true);
}

[[noreturn]] void http_failure(const std::string& what, const httplib::Result& res) {
  std::string msg = what + ": HTTP " + std::to_string(res->status);
  try {
    auto j = json::parse(res->body);
    if (j.contains("error")) msg += ": " + j["error"].get<std::string>();
  } catch (const std::exception&) {
  }
  bool retriable = res->status == 409 || res->status == 429 || res->status >= 500;
  throw NetworkError(msg, retriable);
}

std::string upload(httplib::Client& cli, const Program& program, const std::string& id) {
  if (auto head = cli.Head("/v1/programs/" + id); head && head->status == 200) return id;
  auto res = cli.Post("/v1/programs", serialize_program(program), "application/json");
  if (!res) transport_failure("upload program", res.error());
  if (res->status == 400) throw ValidationError(validate(program));
  if (res->status != 200 && res->status != 201) http_failure("upload program", res);
  auto got = json::parse(res->body).at("program_id").get<std::string>();
  if (got != id) throw NetworkError("server stored the program under unexpected id " + got, false);
  return id;
}

std::map<std::string, Buffer> run_local(const LocalBackend& b, const Program& program,
                                        const std::map<std::string, Buffer>& inputs) {
  ExecutionPlan p = plan(program, b.chunk_size);
  std::vector<Chunk> outputs;
  run_stream(
      p, stream_reader(p, inputs), [&](Chunk&& c) { outputs.push_back(std::move(c)); },
      RunOptions{b.parallelism, 0});
  return join_chunks(p, outputs);
}

std::map<std::string, Buffer> run_remote(const RemoteBackend& b, const Program& program,
                                         const std::map<std::string, Buffer>& inputs) {
  const Url url = parse_url(b.base_url);
  auto cli = make_client(url);
  const std::string id = upload(cli, program, program_id(program));

  auto res = cli.Post("/v1/programs/" + id + "/runs", json{{"chunk_size", b.chunk_size}}.dump(), "application/json");
  if (!res) transport_failure("create run", res.error());
  if (res->status != 201) http_failure("create run", res);
  auto created = json::parse(res->body);
  const auto run_id = created.at("run_id").get<std::string>();
  const auto port = created.at("data_port").get<std::uint16_t>();

  net::TcpStream conn;
  try {
    conn = net::TcpStream::connect(url.host, port);
  } catch (const std::system_error& e) {
    throw NetworkError(std::string("data plane: ") + e.what(), true);
  }
  wire::ReadFn read = [&conn](std::byte* dst, std::size_t n) { return conn.recv_some(dst, n); };

  try {
    conn.send_all(wire::encode_handshake(run_id));
    auto reply = wire::read_reply(read);
    if (!reply) throw ProtocolError("server closed the data connection during the handshake");
    if (!reply->ok) throw ProtocolError("server refused the run: " + reply->message);
  } catch (const std::system_error& e) {
    throw NetworkError(std::string("data plane: ") + e.what(), true);
  }

  // Inputs go out on a separate thread so the server can stream outputs back while
  // we are still sending; otherwise both sides can block on full socket buffers.
  const auto free = free_points(program);
  std::exception_ptr send_error;
  std::thread sender([&] {
    try {
      std::size_t total = inputs.empty() ? 0 : inputs.begin()->second.elements();
      wire::Bytes buf;
      std::uint64_t index = 0;
      for (std::size_t begin = 0; begin < total; begin += b.chunk_size, ++index) {
        const std::size_t end = std::min(total, begin + b.chunk_size);
        buf.clear();
        for (const auto& [name, in] : inputs) {
          const std::size_t es = in.type.byte_size();
          wire::append_data_frame(buf, name, index, static_cast<std::uint32_t>(end - begin),
                                  std::span(in.bytes).subspan(begin * es, (end - begin) * es));
        }
        conn.send_all(buf);
      }
      buf.clear();
      for (const auto& [name, _] : inputs) {
        auto e = wire::encode_frame(wire::EndFrame{name});
        buf.insert(buf.end(), e.begin(), e.end());
      }
      conn.send_all(buf);
    } catch (...) {
      send_error = std::current_exception();
    }
  });

  std::map<std::string, Buffer> outputs;
  std::set<std::string> ended;
  std::map<std::string, std::uint64_t> next_index;
  for (const auto& f : free) {
    if (f.direction == Direction::Output) {
      outputs.emplace(f.stream_name(), Buffer(f.data, 0));
      next_index[f.stream_name()] = 0;
    }
  }

  std::exception_ptr recv_error;
  try {
    while (ended.size() < outputs.size()) {
      auto frame = wire::read_frame(read);
      if (!frame) throw ProtocolError("server closed the data connection before END on every output stream");
      if (auto* err = std::get_if<wire::ErrorFrame>(&*frame)) throw RemoteRunError(err->message);
      if (auto* end = std::get_if<wire::EndFrame>(&*frame)) {
        if (!outputs.count(end->stream) || !ended.insert(end->stream).second) {
          throw ProtocolError("unexpected END for stream '" + end->stream + "'");
        }
        continue;
      }
      auto& d = std::get<wire::DataFrame>(*frame);
      auto it = outputs.find(d.stream);
      if (it == outputs.end() || ended.count(d.stream)) {
        throw ProtocolError("unexpected DATA for stream '" + d.stream + "'");
      }
      if (d.chunk_index != next_index[d.stream]++) {
        throw ProtocolError("DATA for stream '" + d.stream + "' out of order");
      }
      if (d.payload.size() != static_cast<std::size_t>(d.element_count) * it->second.type.byte_size()) {
        throw ProtocolError("DATA payload size does not match its element count");
      }
      it->second.bytes.insert(it->second.bytes.end(), d.payload.begin(), d.payload.end());
    }
  } catch (...) {
    recv_error = std::current_exception();
    conn.shutdown_both();  // unblocks the sender
  }
  sender.join();

  if (recv_error) {
    try {
      std::rethrow_exception(recv_error);
    } catch (const std::system_error& e) {
      throw NetworkError(std::string("data plane: ") + e.what(), true);
    }
  }
  if (send_error) {
    try {
      std::rethrow_exception(send_error);
    } catch (const std::system_error& e) {
      throw NetworkError(std::string("data plane: ") + e.what(), true);
    }
  }
  return outputs;
}

}  // namespace

void check_inputs(const Program& program, const std::map<std::string, Buffer>& inputs) {
  std::optional<std::size_t> count;
  std::set<std::string> expected;
  for (const auto& f : free_points(program)) {
    if (f.direction != Direction::Input) continue;
    const auto name = f.stream_name();
    expected.insert(name);
    auto it = inputs.find(name);
    if (it == inputs.end()) throw InputError("missing input stream '" + name + "'");
    if (it->second.type != f.data) {
      throw InputError("input stream '" + name + "' has type " + it->second.type.name() + ", expected " +
                       f.data.name());
    }
    if (count && *count != it->second.elements()) {
      throw InputError("input streams have different lengths");
    }
    count = it->second.elements();
  }
  for (const auto& [name, _] : inputs) {
    if (!expected.count(name)) throw InputError("'" + name + "' is not a free input of the program");
  }
}

std::map<std::string, Buffer> run(const Backend& backend, const Program& program,
                                  const std::map<std::string, Buffer>& inputs) {
  auto report = validate(program);
  if (!report.ok()) throw ValidationError(std::move(report));
  check_inputs(program, inputs);
  if (const auto* local = std::get_if<LocalBackend>(&backend)) return run_local(*local, program, inputs);
  return run_remote(std::get<RemoteBackend>(backend), program, inputs);
}

json server_status(const std::string& base_url) {
  auto cli = make_client(parse_url(base_url));
  auto res = cli.Get("/v1/status");
  if (!res) transport_failure("status", res.error());
  if (res->status != 200) http_failure("status", res);
  return json::parse(res->body);
}

std::string ensure_uploaded(const std::string& base_url, const Program& program) {
  auto cli = make_client(parse_url(base_url));
  return upload(cli, program, program_id(program));
}

}  // namespace dpp
