#include "nfclab/relay_server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "nfclab/pcapng.hpp"

namespace nfclab::relay {

namespace {

std::int64_t steady_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

class ConnWriter {
 public:
  explicit ConnWriter(int fd) : fd_(fd) {}

  bool send(const WireMessage& msg) {
    Bytes frame = encode_message(msg);
    std::lock_guard lock(mutex_);
    std::size_t off = 0;
    while (off < frame.size()) {
      ssize_t n = ::send(fd_, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
      if (n <= 0) return false;
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

 private:
  int fd_;
  std::mutex mutex_;
};

}  // namespace

RelayServer::RelayServer(Options opts)
    : opts_(std::move(opts)),
      hub_(SessionHub::Options{opts_.pipeline, opts_.crash_policy, steady_ns}) {}

RelayServer::~RelayServer() { stop(); }

void RelayServer::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(opts_.port);
  if (::inet_pton(AF_INET, opts_.host.c_str(), &addr.sin_addr) != 1)
    throw Error("bad listen address " + opts_.host);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error("bind failed on " + opts_.host + ":" + std::to_string(opts_.port));
  }
  if (::listen(listen_fd_, 16) != 0) throw Error("listen failed");

  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);

  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void RelayServer::stop() {
  if (!running_.exchange(false)) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  {
    std::lock_guard lock(conn_mutex_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(conn_mutex_);
    threads.swap(conn_threads_);
  }
  for (auto& t : threads)
    if (t.joinable()) t.join();
  dump_logs();
}

void RelayServer::accept_loop() {
  while (running_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(conn_mutex_);
    conn_fds_.push_back(fd);
    conn_threads_.emplace_back([this, fd] { connection_loop(fd); });
  }
}

void RelayServer::connection_loop(int fd) {
  auto writer = std::make_shared<ConnWriter>(fd);
  int member = -1;
  Bytes buffer;
  std::uint8_t chunk[4096];
  auto last_activity = std::chrono::steady_clock::now();
  auto last_ping = last_activity;

  auto fail = [&](const std::string& reason) {
    writer->send(WireMessage::error(reason));
  };

  while (running_) {
    pollfd pfd{fd, POLLIN, 0};
    int pr = ::poll(&pfd, 1, 1000);
    auto now = std::chrono::steady_clock::now();
    if (pr == 0) {
      if (now - last_activity > std::chrono::seconds(opts_.idle_timeout_s)) break;
      if (now - last_ping > std::chrono::seconds(opts_.ping_interval_s)) {
        writer->send(WireMessage::ping());
        last_ping = now;
      }
      continue;
    }
    if (pr < 0) {
      if (errno == EINTR) continue;
      break;
    }
    ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n <= 0) break;
    last_activity = now;
    buffer.insert(buffer.end(), chunk, chunk + n);

    bool closing = false;
    try {
      while (true) {
        auto decoded = decode_message(buffer);
        if (!decoded) break;
        auto [msg, consumed] = std::move(*decoded);
        buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(consumed));

        switch (msg.type) {
          case MsgType::Join:
            if (member >= 0) {
              fail("duplicate Join");
              closing = true;
              break;
            }
            member = hub_.join(msg.join_session(), msg.join_role(),
                               [writer](const WireMessage& m) { writer->send(m); });
            break;
          case MsgType::InitialData:
            if (member < 0) {
              fail("InitialData before Join");
              closing = true;
              break;
            }
            hub_.post_initial(member, msg.payload);
            break;
          case MsgType::ApduData:
            if (member < 0) {
              fail("ApduData before Join");
              closing = true;
              break;
            }
            hub_.post_apdu(member, msg.apdu_direction(), msg.apdu_payload());
            break;
          case MsgType::Ping:
            break;
          case MsgType::Leave:
            closing = true;
            break;
          case MsgType::Error:
            closing = true;
            break;
        }
        if (closing) break;
      }
    } catch (const std::exception& e) {
      fail(e.what());
      closing = true;
    }
    if (closing) break;
  }

  if (member >= 0) hub_.leave(member);
  ::close(fd);
}

void RelayServer::dump_logs() {
  if (opts_.log_dir.empty()) return;
  std::filesystem::create_directories(opts_.log_dir);
  for (std::uint8_t sid : hub_.active_sessions()) {
    SessionLog log = hub_.session_log(sid);
    Bytes file = pcapng::export_log(log);
    auto path = std::filesystem::path(opts_.log_dir) /
                ("session-" + std::to_string(sid) + ".pcapng");
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
  }
}

}  // namespace nfclab::relay
