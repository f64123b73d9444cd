#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "nfclab/session_hub.hpp"

namespace nfclab::relay {

/// TCP front end for the SessionHub. One thread per connection; frames use
/// the 4-byte length-prefixed wire format. The first frame on a connection
/// must be Join; protocol violations get an Error frame and a close.
class RelayServer {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;  // 0: ephemeral
    std::vector<plugin::Plugin*> pipeline;
    plugin::CrashPolicy crash_policy = plugin::CrashPolicy::FailClosed;
    std::string log_dir;  // per-session pcapng dumps on stop; empty disables
    int ping_interval_s = 10;
    int idle_timeout_s = 30;
  };

  explicit RelayServer(Options opts);
  ~RelayServer();
  RelayServer(const RelayServer&) = delete;
  RelayServer& operator=(const RelayServer&) = delete;

  void start();  // throws on bind failure
  void stop();

  std::uint16_t port() const { return port_; }
  SessionHub& hub() { return hub_; }

 private:
  void accept_loop();
  void connection_loop(int fd);
  void dump_logs();

  Options opts_;
  SessionHub hub_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex conn_mutex_;
  std::vector<std::thread> conn_threads_;
  std::vector<int> conn_fds_;
};

}  // namespace nfclab::relay
