#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace dpp::net {

/// Connected TCP stream. Owns the descriptor.
class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(int fd) : fd_(fd) {}
  ~TcpStream();
  TcpStream(TcpStream&& other) noexcept;
  TcpStream& operator=(TcpStream&& other) noexcept;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  /// Throws std::system_error on failure.
  static TcpStream connect(const std::string& host, std::uint16_t port);

  bool is_open() const { return fd_ >= 0; }

  /// Sends every byte; throws std::system_error if the peer is gone.
  void send_all(std::span<const std::byte> data);
  /// Returns bytes read, 0 at end of stream. Throws std::system_error.
  std::size_t recv_some(std::byte* dst, std::size_t n);

  /// Half-close: the peer sees end of stream after buffered data.
  void shutdown_write();
  /// Wakes any thread blocked on this socket; safe to call from another thread.
  void shutdown_both();
  void close();

 private:
  int fd_ = -1;
};

/// Listening socket on host:port (port 0 picks an ephemeral port).
class TcpListener {
 public:
  TcpListener() = default;
  ~TcpListener();
  TcpListener(TcpListener&& other) noexcept;
  TcpListener& operator=(TcpListener&& other) noexcept;
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  /// Throws std::system_error, e.g. when the port is taken.
  static TcpListener bind(const std::string& host, std::uint16_t port);

  std::uint16_t port() const { return port_; }

  /// Waits up to `timeout` for a connection.
  std::optional<TcpStream> accept(std::chrono::milliseconds timeout);

  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace dpp::net
