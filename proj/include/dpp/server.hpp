#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "dpp/engine.hpp"

namespace dpp {

inline constexpr std::string_view kVersion = "1.0.0";

struct ServerConfig {
  std::string host = "127.0.0.1";
  std::filesystem::path store_dir;  // empty: programs live in memory only
  unsigned workers = 0;             // 0: one per hardware thread
  std::size_t max_open_runs = 16;
  std::uint16_t data_port_min = 0;  // 0/0: ephemeral data ports
  std::uint16_t data_port_max = 0;
  std::size_t default_chunk_size = kDefaultChunkSize;
  std::size_t max_chunk_size = std::size_t{1} << 24;
  std::uint64_t instruction_budget = kernel::kDefaultInstructionBudget;
  std::size_t max_inline_bytes = std::size_t{4} << 20;
  std::size_t finished_runs_kept = 256;
  std::function<void(std::string_view)> log;  // optional diagnostics sink
};

/// Result of a control-plane handler.
struct Reply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// HTTP control plane plus one TCP data-plane listener per run.
///
/// The handle_* methods are the HTTP handlers without the transport, so they can be
/// driven directly. Routes:
///
///   GET    /v1/status
///   POST   /v1/programs
///   GET    /v1/programs/{id}          (HEAD works too)
///   POST   /v1/programs/{id}/runs
///   POST   /v1/programs/{id}/runs:inline
///   GET    /v1/runs/{id}
///   DELETE /v1/runs/{id}
class Server {
 public:
  explicit Server(ServerConfig config = {});
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  Reply handle_status();
  Reply handle_upload_program(std::string_view document);
  Reply handle_get_program(const std::string& id);
  Reply handle_create_run(const std::string& program_id, std::string_view options);
  Reply handle_run_status(const std::string& run_id);
  Reply handle_cancel_run(const std::string& run_id);
  /// Runs small streams given as base64 in the request body and returns the outputs
  /// the same way: {"chunk_size"?, "inputs": {stream: {"type", "data"}}}.
  Reply handle_inline_run(const std::string& program_id, std::string_view body);

  /// Starts serving HTTP on a background thread; returns the bound port (port 0
  /// picks one). Throws Error if the port cannot be bound.
  std::uint16_t start(std::uint16_t port);
  /// Serves HTTP on the calling thread until stop().
  void serve(std::uint16_t port);
  void stop();

  unsigned workers() const;
  std::size_t stored_programs() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dpp
