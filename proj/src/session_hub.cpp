#include "nfclab/session_hub.hpp"

#include "nfclab/nci.hpp"

namespace nfclab::relay {

namespace {

class HubContext : public plugin::Context {
 public:
  HubContext(std::uint8_t session, int sender, std::int64_t now) : session_(session), sender_(sender), now_(now) {}
  std::uint8_t session_id() const override { return session_; }
  int sender_id() const override { return sender_; }
  std::int64_t now_ns() const override { return now_; }
  void reply_to_sender(plugin::MessageKind kind, Direction dir, const Bytes& payload) override {
    replies.push_back({kind, dir, payload});
  }
  struct Reply {
    plugin::MessageKind kind;
    Direction dir;
    Bytes payload;
  };
  std::vector<Reply> replies;

 private:
  std::uint8_t session_;
  int sender_;
  std::int64_t now_;
};

}  // namespace

SessionHub::SessionHub() : SessionHub(Options()) {}

SessionHub::SessionHub(Options opts) : opts_(std::move(opts)) {}

int SessionHub::join(std::uint8_t session, Role role, Deliver deliver) {
  std::lock_guard lock(mutex_);
  int id = next_id_++;
  members_[id] = Member{session, role, std::move(deliver)};
  sessions_.try_emplace(session);
  return id;
}

void SessionHub::leave(int member_id) {
  std::unique_lock lock(mutex_);
  auto it = members_.find(member_id);
  if (it == members_.end()) return;
  std::uint8_t session = it->second.session;
  members_.erase(it);
  std::vector<Deliver> peers;
  for (auto& [id, m] : members_)
    if (m.session == session) peers.push_back(m.deliver);
  lock.unlock();
  for (auto& d : peers) d(WireMessage::leave());
}

SessionHub::Member& SessionHub::member_or_throw(int member_id) {
  auto it = members_.find(member_id);
  if (it == members_.end()) throw ProtocolError("unknown hub member " + std::to_string(member_id));
  return it->second;
}

void SessionHub::post_initial(int member_id, const Bytes& tlv) {
  dispatch(member_id, plugin::MessageKind::Initial, Direction::PiccToPcd, tlv);
}

void SessionHub::post_apdu(int member_id, Direction dir, const Bytes& apdu) {
  if (apdu.empty()) throw ProtocolError("empty APDU payload");
  dispatch(member_id, plugin::MessageKind::Apdu, dir, apdu);
}

void SessionHub::dispatch(int member_id, plugin::MessageKind kind, Direction dir, const Bytes& payload) {
  std::unique_lock lock(mutex_);
  Member& sender = member_or_throw(member_id);
  std::uint8_t session = sender.session;
  Deliver sender_deliver = sender.deliver;
  std::int64_t now = opts_.clock ? opts_.clock() : ++fallback_clock_;

  HubContext ctx(session, member_id, now);
  plugin::Verdict verdict =
      plugin::run_pipeline(std::span<plugin::Plugin* const>(opts_.pipeline), ctx, kind, dir,
                           payload, opts_.crash_policy);

  std::vector<Bytes> outputs;
  if (verdict.kind == plugin::Verdict::Kind::Pass) outputs.push_back(verdict.payload);
  else if (verdict.kind == plugin::Verdict::Kind::Replace) outputs = verdict.replacements;

  SessionState& st = sessions_[session];
  if (outputs.empty()) {
    ++st.dropped;
  } else {
    for (const Bytes& out : outputs) {
      if (kind == plugin::MessageKind::Initial) {
        try {
          st.log.set_initial(nci::decode_static_tag(out));
        } catch (const std::exception&) {
          // Mutated initial data may no longer parse; the broadcast still happens.
        }
      } else {
        st.log.append({out, dir, now});
      }
    }
  }

  std::vector<Deliver> peers;
  for (auto& [id, m] : members_)
    if (id != member_id && m.session == session) peers.push_back(m.deliver);
  lock.unlock();

  for (const Bytes& out : outputs) {
    WireMessage msg = kind == plugin::MessageKind::Initial ? WireMessage::initial_data(out)
                                                           : WireMessage::apdu_data(dir, out);
    for (auto& d : peers) d(msg);
  }
  for (const auto& reply : ctx.replies) {
    WireMessage msg = reply.kind == plugin::MessageKind::Initial
                          ? WireMessage::initial_data(reply.payload)
                          : WireMessage::apdu_data(reply.dir, reply.payload);
    sender_deliver(msg);
  }
}

std::size_t SessionHub::member_count(std::uint8_t session) const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [id, m] : members_)
    if (m.session == session) ++n;
  return n;
}

SessionLog SessionHub::session_log(std::uint8_t session) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session);
  if (it == sessions_.end()) return SessionLog(LogMode::Relay, 0);
  return it->second.log;
}

std::size_t SessionHub::dropped_count(std::uint8_t session) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session);
  return it == sessions_.end() ? 0 : it->second.dropped;
}

std::vector<std::uint8_t> SessionHub::active_sessions() const {
  std::lock_guard lock(mutex_);
  std::vector<std::uint8_t> out;
  for (const auto& [sid, st] : sessions_)
    if (!st.log.empty() || st.log.initial()) out.push_back(sid);
  return out;
}

}  // namespace nfclab::relay
