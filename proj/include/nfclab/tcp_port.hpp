#pragma once

#include <map>

#include "nfclab/endpoint.hpp"

namespace nfclab::endpoint {

/// Blocking TCP-backed ServerPort. The owning thread drives everything
/// through run(), which multiplexes socket input and due timers, keeping the
/// endpoint state machine single-threaded.
class TcpClientPort : public ServerPort {
 public:
  TcpClientPort(const std::string& host, std::uint16_t port);
  ~TcpClientPort() override;
  TcpClientPort(const TcpClientPort&) = delete;
  TcpClientPort& operator=(const TcpClientPort&) = delete;

  void join(std::uint8_t session, relay::Role role);
  void set_handler(std::function<void(const relay::WireMessage&)> handler);

  /// Pumps messages and timers until `done` returns true, the peer
  /// disconnects, or `max_idle_ms` passes without any progress.
  void run(const std::function<bool()>& done, int max_idle_ms = 30'000);

  void send(const relay::WireMessage& msg) override;
  std::int64_t now_ns() const override;
  std::uint64_t set_timer(std::int64_t delay_ns, std::function<void()> fn) override;
  void cancel_timer(std::uint64_t id) override;

 private:
  void fire_due_timers();
  int fd_ = -1;
  Bytes buffer_;
  std::function<void(const relay::WireMessage&)> handler_;
  std::map<std::uint64_t, std::pair<std::int64_t, std::function<void()>>> timers_;
  std::uint64_t next_timer_ = 1;
};

}  // namespace nfclab::endpoint
