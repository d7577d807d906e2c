#include "dpp/server.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <system_error>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dpp/digest.hpp"
#include "dpp/error.hpp"
#include "dpp/program.hpp"
#include "dpp/socket.hpp"
#include "dpp/wire.hpp"
#include "dpp/worker_pool.hpp"

namespace dpp {

using json = nlohmann::json;

namespace {

Reply json_reply(int status, const json& body) { return {status, body.dump(), "application/json"}; }

Reply error_reply(int status, const std::string& message) { return json_reply(status, {{"error", message}}); }

/// Writes `data` to `path` so that a crash leaves either nothing or the whole file.
void write_file_atomically(const std::filesystem::path& path, std::string_view data) {
  auto tmp = path;
  tmp += ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw std::system_error(errno, std::generic_category(), "open " + tmp.string());
  std::size_t done = 0;
  while (done < data.size()) {
    ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      int err = errno;
      ::close(fd);
      throw std::system_error(err, std::generic_category(), "write " + tmp.string());
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    throw std::system_error(errno, std::generic_category(), "sync " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
  int dir = ::open(path.parent_path().c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (dir >= 0) {
    ::fsync(dir);
    ::close(dir);
  }
}

enum class RunState { Waiting, Running, Done, Failed };

std::string_view state_name(RunState s) {
  switch (s) {
    case RunState::Waiting: return "waiting";
    case RunState::Running: return "running";
    case RunState::Done: return "done";
    case RunState::Failed: return "failed";
  }
  return "unknown";
}

/// Assembles input chunks from DATA/END frames. All streams' frames for chunk i
/// must arrive before any frame of chunk i+1, one frame per stream and chunk.
class ChunkAssembler {
 public:
  explicit ChunkAssembler(const ExecutionPlan& plan) {
    for (const auto& f : plan.free_inputs) types_.emplace(f.stream_name(), f.data);
  }

  /// Returns a complete chunk, nullopt after END on every stream, or throws ProtocolError.
  std::optional<Chunk> next(const wire::ReadFn& read) {
    while (true) {
      auto frame = wire::read_frame(read);
      if (!frame) {
        throw ProtocolError("connection closed before END on every input stream");
      }
      if (auto* e = std::get_if<wire::ErrorFrame>(&*frame)) {
        throw ProtocolError("client reported an error: " + e->message);
      }
      if (auto* end = std::get_if<wire::EndFrame>(&*frame)) {
        if (!types_.count(end->stream)) throw ProtocolError("END for unknown input stream '" + end->stream + "'");
        if (!ended_.insert(end->stream).second) throw ProtocolError("duplicate END for stream '" + end->stream + "'");
        if (!pending_.streams.empty()) {
          throw ProtocolError("END on stream '" + end->stream + "' while chunk " + std::to_string(index_) +
                              " is incomplete");
        }
        if (ended_.size() == types_.size()) return std::nullopt;
        continue;
      }
      auto& d = std::get<wire::DataFrame>(*frame);
      auto type = types_.find(d.stream);
      if (type == types_.end()) throw ProtocolError("DATA for unknown input stream '" + d.stream + "'");
      if (!ended_.empty()) throw ProtocolError("DATA for stream '" + d.stream + "' after END on another stream");
      if (d.chunk_index != index_) {
        throw ProtocolError("DATA for chunk " + std::to_string(d.chunk_index) + " of stream '" + d.stream +
                            "' while expecting chunk " + std::to_string(index_));
      }
      if (pending_.streams.count(d.stream)) {
        throw ProtocolError("second DATA frame for stream '" + d.stream + "' in chunk " + std::to_string(index_));
      }
      const std::size_t expected = static_cast<std::size_t>(d.element_count) * type->second.byte_size();
      if (d.payload.size() != expected) {
        throw ProtocolError("DATA payload for stream '" + d.stream + "' has " + std::to_string(d.payload.size()) +
                            " bytes, expected " + std::to_string(expected));
      }
      if (!pending_.streams.empty() && pending_.streams.begin()->second.elements() != d.element_count) {
        throw ProtocolError("streams disagree on the element count of chunk " + std::to_string(index_));
      }
      pending_.streams.emplace(d.stream, Buffer(type->second, std::move(d.payload)));
      if (pending_.streams.size() == types_.size()) {
        Chunk out = std::move(pending_);
        out.index = index_++;
        pending_ = Chunk{};
        return out;
      }
    }
  }

 private:
  std::map<std::string, DataType> types_;
  std::set<std::string> ended_;
  Chunk pending_;
  std::uint64_t index_ = 0;
};

}  // namespace

// ---- run sessions --------------------------------------------------------------

struct RunSession {
  std::string id;
  std::string program_id;
  std::shared_ptr<const ExecutionPlan> plan;
  net::TcpListener listener;
  std::uint16_t port = 0;

  mutable std::mutex mu;
  RunState state = RunState::Waiting;
  std::string error;
  net::TcpStream* connection = nullptr;  // guarded by mu, for cancellation

  std::atomic<std::uint64_t> chunks_in{0};
  std::atomic<std::uint64_t> chunks_out{0};
  std::atomic<std::uint64_t> work_items{0};
  std::atomic<bool> cancelled{false};
  std::thread thread;

  RunState current() const {
    std::lock_guard lock(mu);
    return state;
  }

  bool open() const {
    auto s = current();
    return s == RunState::Waiting || s == RunState::Running;
  }

  json snapshot() const {
    std::lock_guard lock(mu);
    json j = {{"run_id", id},
              {"program_id", program_id},
              {"state", state_name(state)},
              {"chunk_size", plan->chunk_size},
              {"chunks_in", chunks_in.load()},
              {"chunks_out", chunks_out.load()},
              {"work_items", work_items.load()},
              {"data_port", port}};
    if (!error.empty()) j["error"] = error;
    return j;
  }
};

struct Server::Impl {
  ServerConfig config;
  WorkerPool pool;

  mutable std::shared_mutex store_mu;
  struct Stored {
    Program program;
    std::string document;
  };
  std::map<std::string, Stored> store;

  std::mutex runs_mu;
  std::map<std::string, std::shared_ptr<RunSession>> runs;
  std::deque<std::string> finished_order;
  std::mt19937_64 rng{std::random_device{}()};

  httplib::Server http;
  std::thread http_thread;

  explicit Impl(ServerConfig c)
      : config(std::move(c)), pool(config.workers == 0 ? WorkerPool::hardware_threads() : config.workers) {}

  void log(const std::string& msg) const {
    if (config.log) config.log(msg);
  }

  void load_store() {
    if (config.store_dir.empty()) return;
    std::filesystem::create_directories(config.store_dir);
    for (const auto& entry : std::filesystem::directory_iterator(config.store_dir)) {
      if (entry.path().extension() != ".json") continue;
      std::ifstream in(entry.path(), std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      try {
        Program p = parse_program(ss.str());
        std::string id = program_id(p);
        if (id != entry.path().stem().string()) {
          log("skipping " + entry.path().string() + ": content does not match its name");
          continue;
        }
        std::string canonical = serialize_program(p);
        store.emplace(id, Stored{std::move(p), std::move(canonical)});
      } catch (const std::exception& e) {
        log("skipping " + entry.path().string() + ": " + e.what());
      }
    }
  }

  std::optional<Stored> find_program(const std::string& id) const {
    std::shared_lock lock(store_mu);
    auto it = store.find(id);
    if (it == store.end()) return std::nullopt;
    return it->second;
  }

  std::string new_run_id() {
    // Caller holds runs_mu. UUID version 4 layout.
    std::uint64_t hi = rng(), lo = rng();
    hi = (hi & ~0xf000ull) | 0x4000ull;
    lo = (lo & ~(0xc000ull << 48)) | (0x8000ull << 48);
    return fmt::format("{:08x}-{:04x}-{:04x}-{:04x}-{:012x}", hi >> 32, (hi >> 16) & 0xffff, hi & 0xffff, lo >> 48,
                       lo & 0xffffffffffffull);
  }

  net::TcpListener bind_data_port() {
    if (config.data_port_min == 0 && config.data_port_max == 0) return net::TcpListener::bind(config.host, 0);
    for (unsigned p = config.data_port_min; p <= config.data_port_max; ++p) {
      try {
        return net::TcpListener::bind(config.host, static_cast<std::uint16_t>(p));
      } catch (const std::system_error&) {
      }
    }
    throw std::system_error(std::make_error_code(std::errc::address_in_use), "no free data port in range");
  }

  void finish(RunSession& s, RunState state, const std::string& error) {
    std::lock_guard lock(s.mu);
    s.state = state;
    s.error = error;
    s.connection = nullptr;
  }

  void run_session(const std::shared_ptr<RunSession>& s) {
    std::optional<net::TcpStream> conn;
    while (!s->cancelled && !conn) {
      auto candidate = s->listener.accept(std::chrono::milliseconds(100));
      if (!candidate) continue;
      auto read = [&c = *candidate](std::byte* dst, std::size_t n) { return c.recv_some(dst, n); };
      try {
        auto id = wire::read_handshake(read);
        if (!id) continue;
        if (*id != s->id) {
          candidate->send_all(wire::encode_reply({false, "unknown run id '" + *id + "'"}));
          continue;
        }
        candidate->send_all(wire::encode_reply({true, ""}));
        conn = std::move(candidate);
      } catch (const std::exception& e) {
        log("data port " + std::to_string(s->port) + ": rejected connection: " + e.what());
      }
    }
    s->listener.close();
    if (!conn) return;  // cancelled while waiting

    {
      std::lock_guard lock(s->mu);
      if (s->cancelled) return;
      s->state = RunState::Running;
      s->connection = &*conn;
    }

    net::TcpStream& c = *conn;
    wire::ReadFn read = [&c](std::byte* dst, std::size_t n) { return c.recv_some(dst, n); };
    ChunkAssembler assembler(*s->plan);
    std::deque<std::size_t> sizes;

    try {
      run_stream(
          *s->plan,
          [&]() -> std::optional<Chunk> {
            auto chunk = assembler.next(read);
            if (chunk) {
              sizes.push_back(chunk->streams.empty() ? 0 : chunk->streams.begin()->second.elements());
              ++s->chunks_in;
            }
            return chunk;
          },
          [&](Chunk&& out) {
            wire::Bytes buf;
            for (const auto& [name, b] : out.streams) {
              wire::append_data_frame(buf, name, out.index, static_cast<std::uint32_t>(b.elements()), b.bytes);
            }
            c.send_all(buf);
            s->work_items += sizes.front();
            sizes.pop_front();
            ++s->chunks_out;
          },
          pool);
      wire::Bytes ends;
      for (const auto& f : s->plan->free_outputs) {
        auto e = wire::encode_frame(wire::EndFrame{f.stream_name()});
        ends.insert(ends.end(), e.begin(), e.end());
      }
      c.send_all(ends);
      finish(*s, RunState::Done, "");
      log("run " + s->id + " done");
    } catch (const std::exception& e) {
      std::string msg = s->cancelled ? std::string("cancelled") : e.what();
      try {
        c.send_all(wire::encode_frame(wire::ErrorFrame{msg}));
      } catch (...) {
      }
      finish(*s, RunState::Failed, msg);
      log("run " + s->id + " failed: " + msg);
    }
    c.shutdown_write();
  }

  void prune_finished() {
    // Caller holds runs_mu.
    std::vector<std::shared_ptr<RunSession>> drop;
    for (auto it = runs.begin(); it != runs.end();) {
      if (!it->second->open() && std::find(finished_order.begin(), finished_order.end(), it->first) == finished_order.end()) {
        finished_order.push_back(it->first);
      }
      ++it;
    }
    while (finished_order.size() > config.finished_runs_kept) {
      auto it = runs.find(finished_order.front());
      finished_order.pop_front();
      if (it == runs.end()) continue;
      drop.push_back(it->second);
      runs.erase(it);
    }
    for (auto& s : drop) {
      if (s->thread.joinable()) s->thread.join();
    }
  }

  void shutdown_runs() {
    std::map<std::string, std::shared_ptr<RunSession>> all;
    {
      std::lock_guard lock(runs_mu);
      all.swap(runs);
    }
    for (auto& [_, s] : all) cancel(*s);
  }

  void cancel(RunSession& s) {
    {
      std::lock_guard lock(s.mu);
      s.cancelled = true;
      if (s.connection) s.connection->shutdown_both();
    }
    if (s.thread.joinable()) s.thread.join();
  }
};

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  impl_->load_store();
  auto& http = impl_->http;
  http.set_payload_max_length(std::size_t{256} << 20);

  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };

  http.Get("/v1/status", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_status()); });
  http.Post("/v1/programs", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_upload_program(req.body));
  });
  http.Get(R"(/v1/programs/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_get_program(req.matches[1]));
  });
  http.Post(R"(/v1/programs/([^/]+)/runs)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_create_run(req.matches[1], req.body));
  });
  http.Post(R"(/v1/programs/([^/]+)/runs:inline)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_inline_run(req.matches[1], req.body));
  });
  http.Get(R"(/v1/runs/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_run_status(req.matches[1]));
  });
  http.Delete(R"(/v1/runs/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_cancel_run(req.matches[1]));
  });
  // The browser editor talks to the server from another origin.
  http.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, HEAD, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  http.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
  });
  http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) res.set_content(json{{"error", httplib::status_message(res.status)}}.dump(), "application/json");
  });
  http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(json{{"error", msg}}.dump(), "application/json");
  });
}

Server::~Server() { stop(); }

unsigned Server::workers() const { return impl_->pool.workers(); }

std::size_t Server::stored_programs() const {
  std::shared_lock lock(impl_->store_mu);
  return impl_->store.size();
}

Reply Server::handle_status() {
  std::size_t active = 0;
  {
    std::lock_guard lock(impl_->runs_mu);
    for (const auto& [_, s] : impl_->runs) active += s->open() ? 1 : 0;
  }
  return json_reply(200, {{"version", kVersion},
                          {"workers", workers()},
                          {"hardware_threads", WorkerPool::hardware_threads()},
                          {"active_runs", active},
                          {"max_open_runs", impl_->config.max_open_runs},
                          {"stored_programs", stored_programs()}});
}

Reply Server::handle_upload_program(std::string_view document) {
  Program program;
  try {
    program = parse_program(document);
  } catch (const ParseError& e) {
    return json_reply(400, {{"valid", false}, {"violations", json::array({{{"kind", "parse_error"}, {"message", e.what()}}})}});
  }
  auto report = validate(program);
  if (!report.ok()) return json_reply(400, report.to_json());

  std::string id = program_id(program);
  json body = {{"program_id", id}};
  std::unique_lock lock(impl_->store_mu);
  if (impl_->store.count(id)) return json_reply(200, body);
  std::string canonical = serialize_program(program);
  if (!impl_->config.store_dir.empty()) {
    try {
      write_file_atomically(impl_->config.store_dir / (id + ".json"), canonical);
    } catch (const std::exception& e) {
      return error_reply(500, std::string("could not persist program: ") + e.what());
    }
  }
  impl_->store.emplace(id, Impl::Stored{std::move(program), std::move(canonical)});
  lock.unlock();
  impl_->log("stored program " + id);
  return json_reply(201, body);
}

Reply Server::handle_get_program(const std::string& id) {
  auto stored = impl_->find_program(id);
  if (!stored) return error_reply(404, "unknown program '" + id + "'");
  return {200, stored->document, "application/json"};
}

namespace {

std::optional<std::size_t> chunk_size_option(const json& opts, std::size_t fallback, std::size_t max, std::string& err) {
  if (!opts.contains("chunk_size") || opts["chunk_size"].is_null()) return fallback;
  const auto& v = opts["chunk_size"];
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0 || v.get<std::uint64_t>() > max) {
    err = "chunk_size must be an integer in [1, " + std::to_string(max) + "]";
    return std::nullopt;
  }
  return static_cast<std::size_t>(v.get<std::uint64_t>());
}

std::optional<json> parse_object(std::string_view body, std::string& err) {
  if (body.find_first_not_of(" \t\r\n") == std::string_view::npos) return json::object();
  try {
    json j = json::parse(body);
    if (!j.is_object()) {
      err = "request body must be a JSON object";
      return std::nullopt;
    }
    return j;
  } catch (const json::parse_error& e) {
    err = std::string("malformed JSON: ") + e.what();
    return std::nullopt;
  }
}

}  // namespace

Reply Server::handle_create_run(const std::string& program_id, std::string_view options) {
  auto stored = impl_->find_program(program_id);
  if (!stored) return error_reply(404, "unknown program '" + program_id + "'");
  std::string err;
  auto opts = parse_object(options, err);
  if (!opts) return error_reply(400, err);
  auto chunk = chunk_size_option(*opts, impl_->config.default_chunk_size, impl_->config.max_chunk_size, err);
  if (!chunk) return error_reply(400, err);

  auto session = std::make_shared<RunSession>();
  try {
    auto p = std::make_shared<ExecutionPlan>(plan(stored->program, *chunk));
    p->instruction_budget = impl_->config.instruction_budget;
    session->plan = std::move(p);
  } catch (const EngineError& e) {
    return error_reply(400, e.what());
  }
  session->program_id = program_id;

  std::lock_guard lock(impl_->runs_mu);
  impl_->prune_finished();
  std::size_t open = 0;
  for (const auto& [_, s] : impl_->runs) open += s->open() ? 1 : 0;
  if (open >= impl_->config.max_open_runs) {
    return error_reply(409, "too many open runs (limit " + std::to_string(impl_->config.max_open_runs) + ")");
  }
  try {
    session->listener = impl_->bind_data_port();
  } catch (const std::system_error& e) {
    return error_reply(409, e.what());
  }
  session->port = session->listener.port();
  session->id = impl_->new_run_id();
  impl_->runs.emplace(session->id, session);
  session->thread = std::thread([impl = impl_.get(), session] { impl->run_session(session); });
  impl_->log("run " + session->id + " waiting on port " + std::to_string(session->port));
  return json_reply(201, {{"run_id", session->id}, {"data_port", session->port}, {"chunk_size", *chunk}});
}

Reply Server::handle_run_status(const std::string& run_id) {
  std::lock_guard lock(impl_->runs_mu);
  auto it = impl_->runs.find(run_id);
  if (it == impl_->runs.end()) return error_reply(404, "unknown run '" + run_id + "'");
  return json_reply(200, it->second->snapshot());
}

Reply Server::handle_cancel_run(const std::string& run_id) {
  std::shared_ptr<RunSession> s;
  {
    std::lock_guard lock(impl_->runs_mu);
    auto it = impl_->runs.find(run_id);
    if (it == impl_->runs.end()) return error_reply(404, "unknown run '" + run_id + "'");
    s = it->second;
    impl_->runs.erase(it);
    std::erase(impl_->finished_order, run_id);
  }
  bool was_open = s->open();
  impl_->cancel(*s);
  return json_reply(200, {{"run_id", run_id}, {"cancelled", was_open}});
}

Reply Server::handle_inline_run(const std::string& program_id, std::string_view body) {
  auto stored = impl_->find_program(program_id);
  if (!stored) return error_reply(404, "unknown program '" + program_id + "'");
  std::string err;
  auto req = parse_object(body, err);
  if (!req) return error_reply(400, err);
  auto chunk = chunk_size_option(*req, impl_->config.default_chunk_size, impl_->config.max_chunk_size, err);
  if (!chunk) return error_reply(400, err);
  if (!req->contains("inputs") || !(*req)["inputs"].is_object()) return error_reply(400, "missing \"inputs\" object");

  std::map<std::string, Buffer> inputs;
  std::size_t total = 0;
  for (const auto& [name, item] : (*req)["inputs"].items()) {
    if (!item.is_object() || !item.contains("type") || !item.contains("data") || !item["type"].is_string() ||
        !item["data"].is_string()) {
      return error_reply(400, "input '" + name + "' must be {\"type\": string, \"data\": base64 string}");
    }
    auto type = parse_data_type(item["type"].get<std::string>());
    if (!type) return error_reply(400, "input '" + name + "' has unknown type");
    auto bytes = base64_decode(item["data"].get<std::string>());
    if (!bytes) return error_reply(400, "input '" + name + "' is not valid base64");
    total += bytes->size();
    if (total > impl_->config.max_inline_bytes) {
      return error_reply(413, "inline inputs exceed " + std::to_string(impl_->config.max_inline_bytes) + " bytes");
    }
    if (bytes->size() % type->byte_size() != 0) {
      return error_reply(400, "input '" + name + "' is not a whole number of elements");
    }
    inputs.emplace(name, Buffer(*type, std::move(*bytes)));
  }

  try {
    ExecutionPlan p = plan(stored->program, *chunk);
    p.instruction_budget = impl_->config.instruction_budget;
    std::vector<Chunk> outputs;
    run_stream(
        p, stream_reader(p, inputs), [&](Chunk&& c) { outputs.push_back(std::move(c)); }, impl_->pool);
    json out = json::object();
    for (const auto& [name, buf] : join_chunks(p, outputs)) {
      out[name] = {{"type", buf.type.name()}, {"elements", buf.elements()}, {"data", base64_encode(buf.bytes)}};
    }
    return json_reply(200, {{"outputs", out}});
  } catch (const EngineError& e) {
    return error_reply(422, e.what());
  }
}

std::uint16_t Server::start(std::uint16_t port) {
  auto& http = impl_->http;
  int bound = port == 0 ? http.bind_to_any_port(impl_->config.host) : (http.bind_to_port(impl_->config.host, port) ? port : -1);
  if (bound <= 0) throw Error("cannot bind control port " + std::to_string(port) + " on " + impl_->config.host);
  impl_->http_thread = std::thread([&http] { http.listen_after_bind(); });
  http.wait_until_ready();
  return static_cast<std::uint16_t>(bound);
}

void Server::serve(std::uint16_t port) {
  auto& http = impl_->http;
  if (!http.bind_to_port(impl_->config.host, port)) {
    throw Error("cannot bind control port " + std::to_string(port) + " on " + impl_->config.host);
  }
  http.listen_after_bind();
}

void Server::stop() {
  impl_->http.stop();
  if (impl_->http_thread.joinable()) impl_->http_thread.join();
  impl_->shutdown_runs();
}

}  // namespace dpp
