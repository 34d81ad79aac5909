#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <string>
#include <string_view>
#include <thread>

#include "advsim/config.hpp"
#include "advsim/error.hpp"
#include "advsim/planner.hpp"
#include "json.hpp"

/// Wire protocol v1: newline-delimited JSON over a child's stdio or a TCP socket.
///   harness -> {"type":"hello","version":1}      planner -> {"type":"ack","version":1}
///   harness -> {"type":"obs","step":n,...}       planner -> {"type":"plan","dt":0.5,"waypoints":[[x,y,h,v],...]}
///   harness -> {"type":"end","reason":"..."}
/// A planner may answer any request with {"type":"error","message":"..."}.
namespace advsim::protocol {

inline constexpr int kVersion = 1;

namespace detail {

inline void ignore_sigpipe() {
  static const bool once = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  [[nodiscard]] int get() const { return fd_; }

 private:
  int fd_ = -1;
};

}  // namespace detail

/// Bidirectional line channel over a pair of file descriptors (may be the same socket).
class LineChannel {
 public:
  LineChannel(detail::Fd read_fd, detail::Fd write_fd) : read_(std::move(read_fd)), write_(std::move(write_fd)) {}
  explicit LineChannel(detail::Fd socket) : read_(std::move(socket)) {}

  void send(std::string_view line) {
    std::string buf(line);
    buf.push_back('\n');
    const int fd = write_.get() >= 0 ? write_.get() : read_.get();
    std::size_t off = 0;
    while (off < buf.size()) {
      const ssize_t n = ::write(fd, buf.data() + off, buf.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("transport closed while sending: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  /// Next line without the trailing newline. Throws PlannerTimeout or ProtocolError on EOF.
  std::string receive(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (const auto pos = buffer_.find('\n'); pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw PlannerTimeout("planner did not respond within " + std::to_string(timeout.count()) + " ms");
      pollfd pfd{read_.get(), POLLIN, 0};
      const int r = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (r == 0) continue;
      char chunk[4096];
      const ssize_t n = ::read(read_.get(), chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw ProtocolError(std::string("transport read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw ProtocolError("transport closed by planner");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  detail::Fd read_;
  detail::Fd write_;
  std::string buffer_;
};

/// Child process started through /bin/sh with its stdin/stdout connected to a LineChannel.
/// The child's stderr is inherited.
class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command) {
    detail::ignore_sigpipe();
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw ProtocolError("pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw ProtocolError("pipe failed");
    }
    pid_ = ::fork();
    if (pid_ < 0) throw ProtocolError("fork failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    channel_ = std::make_unique<LineChannel>(detail::Fd(from_child[0]), detail::Fd(to_child[1]));
  }
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() { terminate(); }

  LineChannel& channel() { return *channel_; }

  /// Closes the pipes, waits briefly for a clean exit, then kills.
  void terminate() {
    if (pid_ <= 0) return;
    channel_.reset();
    for (int i = 0; i < 50; ++i) {
      int status = 0;
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }

 private:
  pid_t pid_ = -1;
  std::unique_ptr<LineChannel> channel_;
};

inline LineChannel connect_tcp(const std::string& host, int port, std::chrono::milliseconds timeout) {
  detail::ignore_sigpipe();
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || res == nullptr)
    throw ProtocolError("cannot resolve " + host);
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    detail::Fd sock(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
    if (sock.get() < 0) throw ProtocolError("socket failed");
    if (::connect(sock.get(), res->ai_addr, res->ai_addrlen) == 0) return LineChannel(std::move(sock));
    if (std::chrono::steady_clock::now() >= deadline)
      throw PlannerTimeout("cannot connect to " + host + ":" + std::to_string(port));
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

/// Performs the version handshake. Throws ProtocolError on mismatch or malformed reply.
inline void handshake(LineChannel& ch, std::chrono::milliseconds timeout) {
  ch.send(nlohmann::json{{"type", "hello"}, {"version", kVersion}}.dump());
  const std::string line = ch.receive(timeout);
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw ProtocolError("handshake: malformed reply");
  }
  if (!reply.is_object() || !reply.contains("type")) throw ProtocolError("handshake: malformed reply");
  if (reply.at("type") == "error") throw ProtocolError("handshake: planner reported error: " + reply.value("message", std::string()));
  if (reply.at("type") != "ack" && reply.at("type") != "hello") throw ProtocolError("handshake: expected ack");
  const int version = reply.contains("version") && reply.at("version").is_number_integer() ? reply.at("version").get<int>() : -1;
  if (version != kVersion)
    throw ProtocolError("handshake: version mismatch (harness " + std::to_string(kVersion) + ", planner " + std::to_string(version) + ")");
}

/// One request/response round trip; validates the returned plan.
inline Trajectory external_planner_tick(LineChannel& ch, const Observation& obs, std::chrono::milliseconds timeout) {
  ch.send(observation_to_json(obs).dump());
  const std::string line = ch.receive(timeout);
  nlohmann::json msg;
  try {
    msg = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw ProtocolError("plan: malformed JSON");
  }
  return plan_from_json(msg, obs);
}

/// Planner living in another process, reached over stdio or TCP. One session per episode.
class ExternalPlanner final : public Planner {
 public:
  explicit ExternalPlanner(ProtocolConfig cfg) : cfg_(std::move(cfg)) {}

  void begin_episode(const Scenario& /*scenario*/) override {
    const auto timeout = timeout_ms();
    if (cfg_.transport == Transport::stdio) {
      if (cfg_.command.empty()) throw InvalidArgument("external planner: protocol.command is empty");
      child_ = std::make_unique<ChildProcess>(cfg_.command);
      channel_ = &child_->channel();
    } else {
      socket_ = std::make_unique<LineChannel>(connect_tcp(cfg_.host, cfg_.port, timeout));
      channel_ = socket_.get();
    }
    handshake(*channel_, timeout);
  }

  Trajectory plan(const Observation& obs) override {
    if (channel_ == nullptr) throw ProtocolError("external planner: no session");
    return external_planner_tick(*channel_, obs, timeout_ms());
  }

  void end_episode(std::string_view reason) override {
    if (channel_ != nullptr) {
      try {
        channel_->send(nlohmann::json{{"type", "end"}, {"reason", reason}}.dump());
      } catch (const ProtocolError&) {
        // Planner already gone.
      }
    }
    channel_ = nullptr;
    child_.reset();
    socket_.reset();
  }

  [[nodiscard]] bool deterministic() const override { return false; }

  ~ExternalPlanner() override { end_episode("aborted"); }

 private:
  [[nodiscard]] std::chrono::milliseconds timeout_ms() const {
    return std::chrono::milliseconds(static_cast<long long>(cfg_.timeout_s * 1000.0));
  }

  ProtocolConfig cfg_;
  std::unique_ptr<ChildProcess> child_;
  std::unique_ptr<LineChannel> socket_;
  LineChannel* channel_ = nullptr;
};

}  // namespace advsim::protocol
