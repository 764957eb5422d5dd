#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfmon/coordinator.hpp"
#include "tfmon/frame_codec.hpp"

// Local service endpoints for serve mode. One port answers queries as
// length-prefixed JSON (4-byte big-endian length, then the document); the
// other accepts the raw 23-byte telemetry frames. Single-threaded poll loop:
// ingestion is serialized and queries always observe a settled state.

namespace tfmon {

namespace detail {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close_fd();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close_fd(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

 private:
  void close_fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  int fd_ = -1;
};

inline Socket listen_on(const std::string& host, std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(Errc::IoError, "socket() failed");
  Socket sock(fd);
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw Error(Errc::InvalidConfig, "bad listen address: " + host);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    if (errno == EADDRINUSE)
      throw Error(Errc::AddressInUse, host + ":" + std::to_string(port));
    throw Error(Errc::IoError, "bind() failed: " + std::string(std::strerror(errno)));
  }
  if (::listen(fd, 8) != 0) throw Error(Errc::IoError, "listen() failed");
  return sock;
}

}  // namespace detail

struct ServeOptions {
  std::string host = "127.0.0.1";
  std::uint16_t query_port = 7600;
  std::uint16_t frame_port = 7601;
};

class QueryServer {
 public:
  QueryServer(Coordinator& coordinator, ServeOptions options)
      : coordinator_(coordinator),
        options_(options),
        query_listener_(detail::listen_on(options.host, options.query_port)),
        frame_listener_(detail::listen_on(options.host, options.frame_port)),
        started_(std::chrono::steady_clock::now()) {}

  // Timestamps are injected from one monotonic clock fixed at startup.
  std::uint64_t now_ms() const {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::steady_clock::now() - started_)
                                          .count());
  }

  // Feed a capture directly (same byte stream the frame port accepts).
  void ingest_stream(std::span<const std::uint8_t> bytes) {
    std::vector<std::uint8_t> buffer(bytes.begin(), bytes.end());
    consume_frames(buffer, now_ms());
  }

  // Runs until a shutdown query arrives. Returns the number of requests served.
  std::uint64_t run() {
    std::uint64_t requests = 0;
    while (!stop_) {
      std::vector<pollfd> fds;
      fds.push_back({query_listener_.fd(), POLLIN, 0});
      fds.push_back({frame_listener_.fd(), POLLIN, 0});
      for (const auto& [fd, conn] : conns_) {
        (void)conn;
        fds.push_back({fd, POLLIN, 0});
      }
      if (::poll(fds.data(), fds.size(), 50) < 0) {
        if (errno == EINTR) continue;
        throw Error(Errc::IoError, "poll() failed");
      }
      coordinator_.advance_to(now_ms());  // silence checks tick on wall time

      if (fds[0].revents & POLLIN) accept_conn(query_listener_, ConnKind::Query);
      if (fds[1].revents & POLLIN) accept_conn(frame_listener_, ConnKind::Frames);
      for (std::size_t i = 2; i < fds.size(); ++i) {
        if (fds[i].revents & (POLLIN | POLLHUP | POLLERR)) requests += service_conn(fds[i].fd);
      }
    }
    return requests;
  }

  void request_stop() { stop_ = true; }

 private:
  enum class ConnKind { Query, Frames };

  struct Conn {
    ConnKind kind;
    detail::Socket sock;
    std::vector<std::uint8_t> buffer;
  };

  void accept_conn(const detail::Socket& listener, ConnKind kind) {
    int fd = ::accept(listener.fd(), nullptr, nullptr);
    if (fd < 0) return;
    Conn conn{kind, detail::Socket(fd), {}};
    conns_.emplace(fd, std::move(conn));
  }

  std::uint64_t service_conn(int fd) {
    auto it = conns_.find(fd);
    if (it == conns_.end()) return 0;
    auto& conn = it->second;

    std::uint8_t chunk[4096];
    const ssize_t n = ::read(fd, chunk, sizeof(chunk));
    if (n <= 0) {
      conns_.erase(it);
      return 0;
    }
    conn.buffer.insert(conn.buffer.end(), chunk, chunk + n);

    if (conn.kind == ConnKind::Frames) {
      consume_frames(conn.buffer, now_ms());
      return 0;
    }
    std::uint64_t served = 0;
    while (serve_one_query(conn)) ++served;
    return served;
  }

  // Query framing: u32 big-endian length, then a JSON document.
  bool serve_one_query(Conn& conn) {
    auto& buf = conn.buffer;
    if (buf.size() < 4) return false;
    const std::uint32_t len = (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
                              (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
    if (len > kMaxQueryBytes) {
      respond(conn, error_response(Errc::MalformedQuery, "request too large"));
      conns_.erase(conn.sock.fd());
      return false;
    }
    if (buf.size() < 4 + len) return false;

    nlohmann::ordered_json response;
    try {
      const auto request =
          nlohmann::json::parse(std::string(buf.begin() + 4, buf.begin() + 4 + len));
      if (request.is_object() && request.value("kind", "") == "shutdown") {
        stop_ = true;
        response = {{"ok", true}, {"result", "shutting down"}};
      } else {
        response = {{"ok", true}, {"result", coordinator_.query(request)}};
      }
    } catch (const nlohmann::json::parse_error& e) {
      response = error_response(Errc::MalformedQuery, e.what());
    } catch (const Error& e) {
      response = error_response(e.code(), e.what());
    }
    buf.erase(buf.begin(), buf.begin() + 4 + len);
    respond(conn, response);
    return !buf.empty();
  }

  static nlohmann::ordered_json error_response(Errc code, const std::string& message) {
    return {{"ok", false}, {"error", std::string(to_string(code))}, {"message", message}};
  }

  void respond(Conn& conn, const nlohmann::ordered_json& body) {
    const std::string text = body.dump();
    std::uint8_t header[4] = {
        static_cast<std::uint8_t>(text.size() >> 24), static_cast<std::uint8_t>(text.size() >> 16),
        static_cast<std::uint8_t>(text.size() >> 8), static_cast<std::uint8_t>(text.size())};
    write_all(conn.sock.fd(), header, 4);
    write_all(conn.sock.fd(), reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  }

  static void write_all(int fd, const std::uint8_t* data, std::size_t size) {
    std::size_t off = 0;
    while (off < size) {
      const ssize_t n = ::write(fd, data + off, size - off);
      if (n <= 0) return;  // peer went away; nothing sensible left to do
      off += static_cast<std::size_t>(n);
    }
  }

  // Cuts delimiter-framed telemetry frames out of a byte stream. Garbage
  // before a delimiter goes through decode so it is counted, not ignored.
  void consume_frames(std::vector<std::uint8_t>& buf, std::uint64_t t_ms) {
    std::size_t pos = 0;
    while (pos < buf.size()) {
      if (buf[pos] != kFrameDelimiter) {
        std::size_t next = pos;
        while (next < buf.size() && buf[next] != kFrameDelimiter) ++next;
        coordinator_.ingest(std::span(buf.data() + pos, next - pos), t_ms, 0);
        pos = next;
        continue;
      }
      if (buf.size() - pos < 3) break;  // wait for the length field
      const std::size_t len = (std::size_t(buf[pos + 1]) << 8) | buf[pos + 2];
      const std::size_t total = 3 + len + 1;
      if (buf.size() - pos < total) break;  // wait for the rest
      coordinator_.ingest(std::span(buf.data() + pos, total), t_ms, 0);
      pos += total;
    }
    buf.erase(buf.begin(), buf.begin() + pos);
  }

  static constexpr std::uint32_t kMaxQueryBytes = 1 << 20;

  Coordinator& coordinator_;
  ServeOptions options_;
  detail::Socket query_listener_;
  detail::Socket frame_listener_;
  std::chrono::steady_clock::time_point started_;
  std::map<int, Conn> conns_;
  bool stop_ = false;
};

// Client-side helper for the query protocol, shared by the CLI and tests.
inline nlohmann::json query_service(const std::string& host, std::uint16_t port,
                                    const nlohmann::json& request) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(Errc::IoError, "socket() failed");
  detail::Socket sock(fd);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw Error(Errc::InvalidConfig, "bad address: " + host);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    throw Error(Errc::IoError, "connect() failed: " + std::string(std::strerror(errno)));

  const std::string text = request.dump();
  std::uint8_t header[4] = {
      static_cast<std::uint8_t>(text.size() >> 24), static_cast<std::uint8_t>(text.size() >> 16),
      static_cast<std::uint8_t>(text.size() >> 8), static_cast<std::uint8_t>(text.size())};
  if (::write(fd, header, 4) != 4) throw Error(Errc::IoError, "short write");
  std::size_t off = 0;
  while (off < text.size()) {
    const ssize_t n = ::write(fd, text.data() + off, text.size() - off);
    if (n <= 0) throw Error(Errc::IoError, "short write");
    off += static_cast<std::size_t>(n);
  }

  auto read_exact = [&](std::uint8_t* out, std::size_t size) {
    std::size_t got = 0;
    while (got < size) {
      const ssize_t n = ::read(fd, out + got, size - got);
      if (n <= 0) throw Error(Errc::IoError, "connection closed mid-response");
      got += static_cast<std::size_t>(n);
    }
  };
  std::uint8_t rhead[4];
  read_exact(rhead, 4);
  const std::uint32_t rlen = (std::uint32_t(rhead[0]) << 24) | (std::uint32_t(rhead[1]) << 16) |
                             (std::uint32_t(rhead[2]) << 8) | std::uint32_t(rhead[3]);
  std::vector<std::uint8_t> body(rlen);
  read_exact(body.data(), rlen);
  return nlohmann::json::parse(std::string(body.begin(), body.end()));
}

}  // namespace tfmon
