#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "dpp/buffer.hpp"
#include "dpp/engine.hpp"
#include "dpp/error.hpp"
#include "dpp/program.hpp"

namespace dpp {

/// Runs in this process on a local worker pool.
struct LocalBackend {
  unsigned parallelism = 0;  // 0: one per hardware thread
  std::size_t chunk_size = kDefaultChunkSize;
};

/// Runs on a server, e.g. "http://127.0.0.1:8080".
struct RemoteBackend {
  std::string base_url;
  std::size_t chunk_size = kDefaultChunkSize;
};

using Backend = std::variant<LocalBackend, RemoteBackend>;

/// The program does not validate.
class ValidationError : public Error {
 public:
  explicit ValidationError(ValidationReport report)
      : Error("program is not valid:\n" + report.to_string()), report_(std::move(report)) {}
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

/// The input streams do not match the program's free inputs.
class InputError : public Error {
 public:
  using Error::Error;
};

/// HTTP or TCP failure talking to a server. Retriable failures may succeed later
/// (server busy, connection refused); permanent ones will not.
class NetworkError : public Error {
 public:
  NetworkError(const std::string& message, bool retriable) : Error(message), retriable_(retriable) {}
  bool retriable() const { return retriable_; }

 private:
  bool retriable_;
};

/// The server accepted the run but reported a failure on the data plane.
class RemoteRunError : public Error {
 public:
  using Error::Error;
};

/// Checks that `inputs` covers exactly the free inputs of `program` with matching
/// types and equal lengths. Throws InputError.
void check_inputs(const Program& program, const std::map<std::string, Buffer>& inputs);

/// Runs `program` over whole input streams and returns the free output streams.
/// Both backends produce identical bytes.
std::map<std::string, Buffer> run(const Backend& backend, const Program& program,
                                  const std::map<std::string, Buffer>& inputs);

/// GET /v1/status.
nlohmann::json server_status(const std::string& base_url);

/// Uploads `program` unless the server already has it; returns its id.
std::string ensure_uploaded(const std::string& base_url, const Program& program);

}  // namespace dpp
