#include "nfclab/tcp_port.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>

namespace nfclab::endpoint {

namespace {

std::int64_t steady_now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

TcpClientPort::TcpClientPort(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw Error("bad server address " + host);
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error("cannot connect to " + host + ":" + std::to_string(port));
  }
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpClientPort::~TcpClientPort() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpClientPort::join(std::uint8_t session, relay::Role role) {
  send(relay::WireMessage::join(session, role));
}

void TcpClientPort::set_handler(std::function<void(const relay::WireMessage&)> handler) {
  handler_ = std::move(handler);
}

void TcpClientPort::send(const relay::WireMessage& msg) {
  Bytes frame = relay::encode_message(msg);
  std::size_t off = 0;
  while (off < frame.size()) {
    ssize_t n = ::send(fd_, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
    if (n <= 0) throw Error("server connection lost while sending");
    off += static_cast<std::size_t>(n);
  }
}

std::int64_t TcpClientPort::now_ns() const { return steady_now_ns(); }

std::uint64_t TcpClientPort::set_timer(std::int64_t delay_ns, std::function<void()> fn) {
  std::uint64_t id = next_timer_++;
  timers_[id] = {steady_now_ns() + delay_ns, std::move(fn)};
  return id;
}

void TcpClientPort::cancel_timer(std::uint64_t id) { timers_.erase(id); }

void TcpClientPort::fire_due_timers() {
  std::int64_t now = steady_now_ns();
  while (true) {
    std::uint64_t due_id = 0;
    std::int64_t best = now;
    for (const auto& [id, t] : timers_) {
      if (t.first <= best) {
        best = t.first;
        due_id = id;
      }
    }
    if (due_id == 0) return;
    auto fn = std::move(timers_[due_id].second);
    timers_.erase(due_id);
    fn();
  }
}

void TcpClientPort::run(const std::function<bool()>& done, int max_idle_ms) {
  auto last_progress = std::chrono::steady_clock::now();
  while (!done()) {
    fire_due_timers();
    if (done()) return;

    int timeout_ms = 50;
    std::int64_t now = steady_now_ns();
    for (const auto& [id, t] : timers_) {
      int until = static_cast<int>((t.first - now) / 1'000'000);
      timeout_ms = std::max(0, std::min(timeout_ms, until));
    }

    pollfd pfd{fd_, POLLIN, 0};
    int pr = ::poll(&pfd, 1, timeout_ms);
    if (pr < 0) {
      if (errno == EINTR) continue;
      throw Error("poll failed on server connection");
    }
    if (pr > 0) {
      std::uint8_t chunk[4096];
      ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n <= 0) return;  // peer closed
      buffer_.insert(buffer_.end(), chunk, chunk + n);
      last_progress = std::chrono::steady_clock::now();
      while (auto decoded = relay::decode_message(buffer_)) {
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(decoded->second));
        if (decoded->first.type == relay::MsgType::Ping) continue;
        if (handler_) handler_(decoded->first);
        if (done()) return;
      }
    }
    if (std::chrono::steady_clock::now() - last_progress > std::chrono::milliseconds(max_idle_ms))
      return;
  }
}

}  // namespace nfclab::endpoint
