#pragma once

#include <stdexcept>
#include <string>

namespace dpp {

/// Base class for every error raised by the platform.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 1-based line/column inside a kernel body.
struct SourcePos {
  int line = 1;
  int column = 1;

  friend bool operator==(const SourcePos&, const SourcePos&) = default;
};

/// Malformed or inconsistent program document.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Lexing, syntax or type error in a kernel body.
class KernelError : public Error {
 public:
  KernelError(SourcePos pos, const std::string& message)
      : Error(std::to_string(pos.line) + ":" + std::to_string(pos.column) + ": " + message),
        pos_(pos),
        detail_(message) {}

  SourcePos pos() const { return pos_; }
  const std::string& detail() const { return detail_; }

 private:
  SourcePos pos_;
  std::string detail_;
};

/// Graph-level failure, e.g. ordering a cyclic program.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Runtime fault while evaluating a work-item (range or integer division).
class EvalError : public Error {
 public:
  using Error::Error;
};

/// Planning or execution failure in the engine.
class EngineError : public Error {
 public:
  using Error::Error;
};

/// Violation of the data-plane wire protocol.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written, or has the wrong format.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpp
