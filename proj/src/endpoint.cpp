#include "nfclab/endpoint.hpp"

#include <algorithm>

namespace nfclab::endpoint {

// --- ScriptedCard ---

ScriptedCard::ScriptedCard(std::vector<std::pair<Bytes, Bytes>> table) {
  for (auto& [req, resp] : table) add(std::move(req), std::move(resp));
}

void ScriptedCard::add(Bytes request, Bytes response) {
  for (const auto& [req, resp] : table_)
    if (req == request) throw ValidationError("duplicate scripted request");
  table_.emplace_back(std::move(request), std::move(response));
}

std::optional<Bytes> ScriptedCard::respond(const Bytes& request) {
  for (const auto& [req, resp] : table_) {
    if (req == request) {
      unknown_ = false;
      return resp;
    }
  }
  unknown_ = true;
  return std::nullopt;
}

// --- ReplayEngine ---

ReplayEngine::ReplayEngine(SessionLog log, ReplaySelector sel)
    : ReplayEngine(std::move(log), sel, Options()) {}

ReplayEngine::ReplayEngine(SessionLog log, ReplaySelector sel, Options opts)
    : log_(std::move(log)), sel_(sel), opts_(opts) {
  if (log_.empty()) throw ValidationError("replay log is empty");
  if (sel_.cursor > log_.size()) throw RangeError("replay cursor out of bounds");
}

std::optional<std::size_t> ReplayEngine::next_side_entry(std::size_t from) const {
  for (std::size_t i = from; i < log_.size(); ++i)
    if (log_.entries()[i].direction == sel_.side) return i;
  return std::nullopt;
}

std::optional<Bytes> ReplayEngine::respond(const Bytes& request, std::int64_t now_ns) {
  last_ns_ = std::max(last_ns_, now_ns);
  recording_.append({request, opposite(sel_.side), last_ns_});

  std::optional<std::size_t> pick;
  if (sel_.mode == ReplayMode::IndexBased) {
    pick = next_side_entry(sel_.cursor);
    if (pick) {
      // Positional replay answers regardless of the request; note a
      // divergence when the live request differs from the logged one.
      std::optional<std::size_t> logged_req;
      for (std::size_t j = *pick; j-- > 0;) {
        if (log_.entries()[j].direction == opposite(sel_.side)) {
          logged_req = j;
          break;
        }
      }
      if (logged_req && log_.entries()[*logged_req].payload != request) ++divergences_;
      sel_.cursor = *pick + 1;
    }
  } else {
    for (std::size_t i = 0; i < log_.size(); ++i) {
      if (log_.entries()[i].direction == opposite(sel_.side) &&
          log_.entries()[i].payload == request) {
        pick = next_side_entry(i + 1);
        break;
      }
    }
    if (!pick && opts_.index_fallback_on_miss) {
      pick = next_side_entry(sel_.cursor);
      if (pick) {
        ++divergences_;
        sel_.cursor = *pick + 1;
      }
    } else if (pick) {
      sel_.cursor = std::max(sel_.cursor, *pick + 1);
    }
  }

  if (!pick) return std::nullopt;
  Bytes payload = log_.entries()[*pick].payload;
  recording_.append({payload, sel_.side, last_ns_});
  return payload;
}

// --- TimeoutPolicy ---

TimeoutPolicy TimeoutPolicy::fwt_retransmit(FwtIndex i, int attempts) {
  return {Kind::FwtRetransmit, fwt_seconds(i), attempts};
}

TimeoutPolicy TimeoutPolicy::mandatory(double deadline_s) {
  return {Kind::MandatoryTimeout, deadline_s, 1};
}

// --- ReaderEndpoint ---

ReaderEndpoint::ReaderEndpoint(ServerPort& port, CardModel& card)
    : ReaderEndpoint(port, card, Options()) {}

ReaderEndpoint::ReaderEndpoint(ServerPort& port, CardModel& card, Options opts)
    : port_(port), card_(card), opts_(std::move(opts)) {}

void ReaderEndpoint::start() {
  std::optional<StaticTagData> initial = opts_.preset_initial ? opts_.preset_initial : card_.initial();
  if (initial) {
    log_.set_initial(*initial);
    port_.send(relay::WireMessage::initial_data(nci::encode_static_tag(*initial)));
  }
}

void ReaderEndpoint::on_message(const relay::WireMessage& msg) {
  if (errored_ || msg.type != relay::MsgType::ApduData) return;
  if (msg.apdu_direction() != Direction::PcdToPicc) return;
  Bytes request = msg.apdu_payload();
  log_.append({request, Direction::PcdToPicc, port_.now_ns()});

  std::optional<Bytes> response = card_.respond(request);
  if (!response) {
    if (card_.unknown_request()) {
      errored_ = true;
      port_.send(relay::WireMessage::error("card cannot serve request " + to_hex(request)));
    }
    return;  // silent card: the requester's timeout policy deals with it
  }
  Bytes payload = *response;
  port_.set_timer(card_.processing_ns(), [this, payload] {
    log_.append({payload, Direction::PiccToPcd, port_.now_ns()});
    port_.send(relay::WireMessage::apdu_data(Direction::PiccToPcd, payload));
  });
}

// --- TagEndpoint ---

TagEndpoint::TagEndpoint(ServerPort& port, PcdDevice& device)
    : TagEndpoint(port, device, Options()) {}

TagEndpoint::TagEndpoint(ServerPort& port, PcdDevice& device, Options opts)
    : port_(port), device_(device), opts_(std::move(opts)) {}

void TagEndpoint::start() {
  if (opts_.preset_initial) activate(*opts_.preset_initial);
}

void TagEndpoint::activate(const StaticTagData& data) {
  if (activated_) return;
  activated_ = true;
  emulated_ = data;
  identity_ = nci::profile_from_tag(data);
  log_.set_initial(data);
  started_at_ = port_.now_ns();
  std::optional<Bytes> first = device_.begin();
  if (first) issue(*first);
  else finish();
}

void TagEndpoint::issue(const Bytes& command) {
  ++exchange_seq_;
  attempts_ = 1;
  first_sent_ns_ = port_.now_ns();
  exchange_post_index_ = posted_count_++;
  awaiting_ = true;
  log_.append({command, Direction::PcdToPicc, port_.now_ns()});
  port_.send(relay::WireMessage::apdu_data(Direction::PcdToPicc, command));

  // Endpoint-level reply deadline: records a timeout event for latency
  // analysis without interfering with the device's own policy.
  std::uint64_t seq = exchange_seq_;
  std::int64_t sent = first_sent_ns_;
  std::int64_t deadline = opts_.response_deadline_ns;
  port_.set_timer(deadline, [this, seq, sent, deadline] {
    if (awaiting_ && exchange_seq_ == seq) timeouts_.push_back({sent, deadline});
  });
  arm_policy_timer();
}

void TagEndpoint::arm_policy_timer() {
  TimeoutPolicy policy = device_.policy();
  if (policy.kind == TimeoutPolicy::Kind::None) return;
  std::uint64_t seq = exchange_seq_;
  int attempt = attempts_;
  port_.set_timer(sim::seconds_to_ns(policy.window_s), [this, seq, attempt] {
    if (!awaiting_ || exchange_seq_ != seq || attempts_ != attempt) return;
    handle_policy_expiry(seq);
  });
}

void TagEndpoint::handle_policy_expiry(std::uint64_t exchange) {
  if (!awaiting_ || exchange_seq_ != exchange) return;
  TimeoutPolicy policy = device_.policy();
  if (policy.kind == TimeoutPolicy::Kind::FwtRetransmit && attempts_ < policy.max_attempts) {
    // The reader retransmits over the local RF leg; the emulated tag absorbs
    // the duplicate and keeps waiting for the in-flight relayed answer, so
    // every retransmission just opens another listening window.
    ++attempts_;
    arm_policy_timer();
    return;
  }
  awaiting_ = false;
  std::optional<Bytes> next = device_.on_exchange_failed();
  if (next) {
    Bytes cmd = *next;
    port_.set_timer(device_.processing_ns(), [this, cmd] { issue(cmd); });
  } else {
    finish();
  }
}

void TagEndpoint::handle_reply(const Bytes& payload) {
  log_.append({payload, Direction::PiccToPcd, port_.now_ns()});
  // The reader is synchronous: the n-th arriving answer belongs to the n-th
  // posted command. Answers to commands the policy already abandoned are
  // rejected as stale (links deliver in order here).
  std::uint64_t reply_index = replies_seen_++;
  if (!awaiting_) return;
  if (opts_.strict_reply_pairing && reply_index != exchange_post_index_) return;
  awaiting_ = false;
  std::int64_t latency = port_.now_ns() - first_sent_ns_;
  std::optional<Bytes> next = device_.on_response(payload, latency);
  if (next) {
    Bytes cmd = *next;
    port_.set_timer(device_.processing_ns(), [this, cmd] { issue(cmd); });
  } else {
    finish();
  }
}

void TagEndpoint::finish() {
  if (finished_) return;
  finished_ = true;
  finished_at_ = port_.now_ns();
}

void TagEndpoint::on_message(const relay::WireMessage& msg) {
  switch (msg.type) {
    case relay::MsgType::InitialData:
      if (!activated_) activate(nci::decode_static_tag(msg.payload));
      break;
    case relay::MsgType::ApduData:
      if (activated_ && !finished_ && msg.apdu_direction() == Direction::PiccToPcd)
        handle_reply(msg.apdu_payload());
      break;
    default:
      break;
  }
}

// --- CloneSession ---

CloneSession::CloneSession(StaticTagData data)
    : data_(std::move(data)), identity_(nci::profile_from_tag(data_)) {}

nci::ConfigStream CloneSession::apply_system_config(const nci::ConfigStream& incoming) {
  if (closed_) throw Error("clone session is closed");
  auto [forwarded, rejected] = nci::merge_protect(identity_, incoming);
  if (!rejected.empty()) rejected_batches_.push_back(rejected);
  return forwarded;
}

void CloneSession::on_apdu(Bytes payload, std::int64_t t_ns) {
  // Clone mode has no APDU logic; traffic is recorded unanswered.
  unanswered_.append({std::move(payload), Direction::PcdToPicc, t_ns});
}

nci::ConfigStream CloneSession::close() {
  closed_ = true;
  return nci::restore_snapshot(rejected_batches_);
}

// --- virtual-clock harness ---

SimEnv::SimEnv(std::vector<plugin::Plugin*> pipeline, std::uint64_t seed,
               plugin::CrashPolicy policy)
    : rng(seed),
      hub(relay::SessionHub::Options{std::move(pipeline), policy,
                                     [this] { return scheduler.now_ns(); }}) {}

SimPort::SimPort(SimEnv& env, std::uint8_t session, relay::Role role, sim::DelayModel up,
                 sim::DelayModel down)
    : env_(env), session_(session), role_(role), up_(std::move(up)), down_(std::move(down)) {}

void SimPort::connect(std::function<void(const relay::WireMessage&)> on_message) {
  handler_ = std::move(on_message);
  member_ = env_.hub.join(session_, role_, [this](const relay::WireMessage& msg) {
    env_.scheduler.after(down_.sample_ns(env_.rng), [this, msg] {
      if (handler_) handler_(msg);
    });
  });
}

void SimPort::send(const relay::WireMessage& msg) {
  if (member_ < 0) throw Error("SimPort not connected");
  env_.scheduler.after(up_.sample_ns(env_.rng), [this, msg] {
    switch (msg.type) {
      case relay::MsgType::InitialData:
        env_.hub.post_initial(member_, msg.payload);
        break;
      case relay::MsgType::ApduData:
        env_.hub.post_apdu(member_, msg.apdu_direction(), msg.apdu_payload());
        break;
      case relay::MsgType::Leave:
        env_.hub.leave(member_);
        break;
      default:
        break;
    }
  });
}

std::uint64_t SimPort::set_timer(std::int64_t delay_ns, std::function<void()> fn) {
  std::uint64_t id = next_timer_++;
  env_.scheduler.after(delay_ns, [this, id, fn = std::move(fn)] {
    if (cancelled_.erase(id) == 0) fn();
  });
  return id;
}

void SimPort::cancel_timer(std::uint64_t id) { cancelled_.insert(id); }

SimRelayResult run_sim_relay(CardModel& card, PcdDevice& device, const SimRelayOptions& opts) {
  SimEnv env(opts.pipeline, opts.seed, opts.crash_policy);

  SimPort tag_port(env, opts.session, relay::Role::Tag, opts.tag_hop, opts.tag_hop);
  SimPort reader_port(env, opts.session, relay::Role::Reader, opts.reader_hop, opts.reader_hop);

  TagEndpoint tag(tag_port, device,
                  {opts.tag_preset_initial, opts.endpoint_deadline_ns, opts.strict_reply_pairing});
  ReaderEndpoint reader(reader_port, card, {});

  tag_port.connect([&tag](const relay::WireMessage& m) { tag.on_message(m); });
  reader_port.connect([&reader](const relay::WireMessage& m) { reader.on_message(m); });

  tag.start();
  reader.start();
  env.scheduler.run();

  SimRelayResult result;
  result.server_log = env.hub.session_log(opts.session);
  result.reader_log = reader.log();
  result.tag_log = tag.log();
  result.tag_timeouts = tag.timeout_events();
  result.emulated_identity = tag.emulated_identity();
  result.procedure_ns = tag.finished() ? tag.finished_at_ns() - tag.started_at_ns()
                                       : env.scheduler.now_ns() - tag.started_at_ns();
  result.reader_errored = reader.errored();
  return result;
}

}  // namespace nfclab::endpoint
