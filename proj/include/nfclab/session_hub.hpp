#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>

#include "nfclab/plugin.hpp"
#include "nfclab/wire.hpp"

namespace nfclab::relay {

/// Session-scoped message broker: every message posted by a member is run
/// through the plugin pipeline and the result is delivered to all other
/// members of the same session, never back to the sender. Pipeline execution
/// and broadcast are serialized per session, so receivers observe each
/// sender's messages in send order.
class SessionHub {
 public:
  struct Options {
    std::vector<plugin::Plugin*> pipeline;
    plugin::CrashPolicy crash_policy = plugin::CrashPolicy::FailClosed;
    std::function<std::int64_t()> clock;  // ns; defaults to a monotonic counter
  };

  using Deliver = std::function<void(const WireMessage&)>;

  SessionHub();
  explicit SessionHub(Options opts);

  /// Adds a connection to a session; returns the member id.
  int join(std::uint8_t session, Role role, Deliver deliver);

  /// Removes a member and notifies the rest of its session.
  void leave(int member_id);

  void post_initial(int member_id, const Bytes& tlv);
  void post_apdu(int member_id, Direction dir, const Bytes& apdu);

  std::size_t member_count(std::uint8_t session) const;

  /// Server-side capture of the (post-pipeline) session traffic.
  SessionLog session_log(std::uint8_t session) const;
  std::size_t dropped_count(std::uint8_t session) const;

  std::vector<std::uint8_t> active_sessions() const;

 private:
  struct Member {
    std::uint8_t session;
    Role role;
    Deliver deliver;
  };
  struct SessionState {
    SessionLog log{LogMode::Relay, 0};
    std::size_t dropped = 0;
  };

  void dispatch(int member_id, plugin::MessageKind kind, Direction dir, const Bytes& payload);
  Member& member_or_throw(int member_id);

  Options opts_;
  mutable std::mutex mutex_;
  std::map<int, Member> members_;
  std::map<std::uint8_t, SessionState> sessions_;
  int next_id_ = 1;
  std::int64_t fallback_clock_ = 0;
};

}  // namespace nfclab::relay
