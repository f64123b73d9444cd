#pragma once

#include <deque>
#include <functional>

#include "nfclab/lock.hpp"
#include "nfclab/nci.hpp"
#include "nfclab/session_hub.hpp"
#include "nfclab/sim.hpp"

namespace nfclab::endpoint {

// --- card models (stand-ins for physical PICC hardware) ---

class CardModel {
 public:
  virtual ~CardModel() = default;
  virtual std::optional<StaticTagData> initial() const { return std::nullopt; }
  /// Returns the card's answer, or nullopt when the card stays silent.
  virtual std::optional<Bytes> respond(const Bytes& request) = 0;
  /// True when the last respond() hit a request the model cannot serve at
  /// all (treated as a card fault by the endpoint).
  virtual bool unknown_request() const { return false; }
  virtual std::int64_t processing_ns() const { return processing_ns_; }
  void set_processing_ns(std::int64_t ns) { processing_ns_ = ns; }

 private:
  std::int64_t processing_ns_ = 0;
};

class LockTransponderCard : public CardModel {
 public:
  explicit LockTransponderCard(lock::LockPicc picc) : picc_(std::move(picc)) {}
  std::optional<StaticTagData> initial() const override { return picc_.initial_data(); }
  std::optional<Bytes> respond(const Bytes& request) override { return picc_.respond(request); }
  lock::LockPicc& picc() { return picc_; }

 private:
  lock::LockPicc picc_;
};

class ScriptedCard : public CardModel {
 public:
  ScriptedCard() = default;
  explicit ScriptedCard(std::vector<std::pair<Bytes, Bytes>> table);
  void add(Bytes request, Bytes response);
  void set_initial(StaticTagData data) { initial_ = std::move(data); }
  std::optional<StaticTagData> initial() const override { return initial_; }
  std::optional<Bytes> respond(const Bytes& request) override;
  bool unknown_request() const override { return unknown_; }

 private:
  std::vector<std::pair<Bytes, Bytes>> table_;
  std::optional<StaticTagData> initial_;
  bool unknown_ = false;
};

// --- replay engine ---

enum class ReplayMode { IndexBased, DataBased };

struct ReplaySelector {
  ReplayMode mode = ReplayMode::IndexBased;
  Direction side = Direction::PiccToPcd;  // which side of the log to replay
  std::size_t cursor = 0;
};

/// Answers live requests from a recorded log. Index-based replay walks the
/// selected side positionally and flags (but answers) diverging requests;
/// data-based replay picks the side entry following the first log entry whose
/// payload equals the request. All traffic is recorded into a fresh log.
class ReplayEngine {
 public:
  struct Options {
    /// Data-based only: when the live request matches nothing in the log,
    /// fall back to the next side entry in log order and flag a divergence
    /// instead of staying silent.
    bool index_fallback_on_miss = false;
  };

  ReplayEngine(SessionLog log, ReplaySelector sel);
  ReplayEngine(SessionLog log, ReplaySelector sel, Options opts);

  std::optional<Bytes> respond(const Bytes& request, std::int64_t now_ns = 0);

  const SessionLog& recording() const { return recording_; }
  const ReplaySelector& selector() const { return sel_; }
  std::size_t divergences() const { return divergences_; }
  const SessionLog& source() const { return log_; }

 private:
  std::optional<std::size_t> next_side_entry(std::size_t from) const;
  SessionLog log_;
  ReplaySelector sel_;
  Options opts_;
  SessionLog recording_{LogMode::Replay, 0};
  std::size_t divergences_ = 0;
  std::int64_t last_ns_ = 0;
};

class ReplayCard : public CardModel {
 public:
  ReplayCard(SessionLog log, ReplaySelector sel)
      : engine_(std::move(log), sel) {}
  ReplayCard(SessionLog log, ReplaySelector sel, ReplayEngine::Options opts)
      : engine_(std::move(log), sel, opts) {}
  std::optional<StaticTagData> initial() const override { return engine_.source().initial(); }
  std::optional<Bytes> respond(const Bytes& request) override { return engine_.respond(request); }
  ReplayEngine& engine() { return engine_; }

 private:
  ReplayEngine engine_;
};

// --- reader-side device models (stand-ins for physical PCD hardware) ---

struct TimeoutPolicy {
  enum class Kind { None, FwtRetransmit, MandatoryTimeout };
  Kind kind = Kind::None;
  double window_s = 0.0;
  int max_attempts = 3;  // FwtRetransmit: total transmissions

  static TimeoutPolicy none() { return {}; }
  static TimeoutPolicy fwt_retransmit(FwtIndex i, int attempts = 3);
  static TimeoutPolicy mandatory(double deadline_s);
};

class PcdDevice {
 public:
  virtual ~PcdDevice() = default;
  virtual std::optional<Bytes> begin() = 0;
  virtual std::optional<Bytes> on_response(const Bytes& response, std::int64_t latency_ns) = 0;
  /// Called when the active policy gives up on an exchange; returns the next
  /// command, or nullopt to stop.
  virtual std::optional<Bytes> on_exchange_failed() = 0;
  virtual TimeoutPolicy policy() const { return {}; }
  virtual std::int64_t processing_ns() const { return 0; }
};

/// Cylinder adapter: per-response mandatory deadline (the lock's unlock
/// budget), aborting on expiry.
class LockPcdDevice : public PcdDevice {
 public:
  static constexpr double kUnlockBudgetS = 1.8;

  LockPcdDevice(lock::LockPcd pcd, double response_budget_s = kUnlockBudgetS)
      : pcd_(std::move(pcd)), budget_s_(response_budget_s) {}

  std::optional<Bytes> begin() override { return pcd_.begin(); }
  std::optional<Bytes> on_response(const Bytes& response, std::int64_t) override {
    return pcd_.step(response);
  }
  std::optional<Bytes> on_exchange_failed() override {
    pcd_.abort_no_response("response budget exceeded");
    return std::nullopt;
  }
  TimeoutPolicy policy() const override { return TimeoutPolicy::mandatory(budget_s_); }
  lock::LockPcd& pcd() { return pcd_; }

 private:
  lock::LockPcd pcd_;
  double budget_s_;
};

// --- endpoint state machines ---

/// Endpoint-side view of a server connection plus a timer facility; backed
/// by the virtual-clock harness or by a real TCP client.
class ServerPort {
 public:
  virtual ~ServerPort() = default;
  virtual void send(const relay::WireMessage& msg) = 0;
  virtual std::int64_t now_ns() const = 0;
  virtual std::uint64_t set_timer(std::int64_t delay_ns, std::function<void()> fn) = 0;
  virtual void cancel_timer(std::uint64_t id) = 0;
};

/// Reader-mode device: reads a (modeled) card and serves APDU requests that
/// arrive from the session.
class ReaderEndpoint {
 public:
  struct Options {
    std::optional<StaticTagData> preset_initial;
  };

  ReaderEndpoint(ServerPort& port, CardModel& card);
  ReaderEndpoint(ServerPort& port, CardModel& card, Options opts);

  void start();
  void on_message(const relay::WireMessage& msg);

  const SessionLog& log() const { return log_; }
  bool errored() const { return errored_; }

 private:
  ServerPort& port_;
  CardModel& card_;
  Options opts_;
  SessionLog log_{LogMode::Relay, 0};
  bool errored_ = false;
};

struct TimeoutEvent {
  std::int64_t sent_at_ns;
  std::int64_t deadline_ns;
};

/// Tag-mode device: presents an emulated identity to a local reader device
/// and relays its commands into the session.
class TagEndpoint {
 public:
  struct Options {
    std::optional<StaticTagData> preset_initial;
    std::int64_t response_deadline_ns = 3'600 * sim::kNsPerSecond;
    /// Pair the n-th arriving answer with the n-th posted command and discard
    /// answers to abandoned exchanges. Disable when session plugins may
    /// swallow requests entirely (pairing then ignores arrival order).
    bool strict_reply_pairing = true;
  };

  TagEndpoint(ServerPort& port, PcdDevice& device);
  TagEndpoint(ServerPort& port, PcdDevice& device, Options opts);

  void start();
  void on_message(const relay::WireMessage& msg);

  bool activated() const { return activated_; }
  bool finished() const { return finished_; }
  const nci::ConfigStream& emulated_identity() const { return identity_; }
  const std::optional<StaticTagData>& emulated_data() const { return emulated_; }
  const std::vector<TimeoutEvent>& timeout_events() const { return timeouts_; }
  const SessionLog& log() const { return log_; }
  std::int64_t started_at_ns() const { return started_at_; }
  std::int64_t finished_at_ns() const { return finished_at_; }

 private:
  void activate(const StaticTagData& data);
  void issue(const Bytes& command);
  void arm_policy_timer();
  void handle_reply(const Bytes& payload);
  void handle_policy_expiry(std::uint64_t exchange);
  void finish();

  ServerPort& port_;
  PcdDevice& device_;
  Options opts_;
  nci::ConfigStream identity_;
  std::optional<StaticTagData> emulated_;
  SessionLog log_{LogMode::Relay, 0};
  std::vector<TimeoutEvent> timeouts_;

  bool activated_ = false;
  bool finished_ = false;
  bool awaiting_ = false;
  std::uint64_t exchange_seq_ = 0;
  std::uint64_t posted_count_ = 0;
  std::uint64_t replies_seen_ = 0;
  std::uint64_t exchange_post_index_ = 0;
  int attempts_ = 0;
  std::int64_t first_sent_ns_ = 0;
  std::int64_t started_at_ = 0;
  std::int64_t finished_at_ = 0;
};

// --- clone mode ---

/// Static-identity emulation: builds the clone profile, shields it from
/// system configuration writes, records (and never answers) incoming APDUs,
/// and emits the restore stream on close.
class CloneSession {
 public:
  explicit CloneSession(StaticTagData data);

  const StaticTagData& data() const { return data_; }
  const nci::ConfigStream& identity() const { return identity_; }

  /// Simulated NFC_SetConfig interception; returns the forwarded stream.
  nci::ConfigStream apply_system_config(const nci::ConfigStream& incoming);

  void on_apdu(Bytes payload, std::int64_t t_ns = 0);
  const SessionLog& unanswered() const { return unanswered_; }

  nci::ConfigStream close();
  bool closed() const { return closed_; }

 private:
  StaticTagData data_;
  nci::ConfigStream identity_;
  std::vector<nci::ConfigStream> rejected_batches_;
  SessionLog unanswered_{LogMode::Clone, 0};
  bool closed_ = false;
};

// --- virtual-clock relay harness ---

struct SimEnv {
  explicit SimEnv(std::vector<plugin::Plugin*> pipeline = {}, std::uint64_t seed = 1,
                  plugin::CrashPolicy policy = plugin::CrashPolicy::FailClosed);
  sim::Scheduler scheduler;
  sim::Rng rng;
  relay::SessionHub hub;
};

class SimPort : public ServerPort {
 public:
  SimPort(SimEnv& env, std::uint8_t session, relay::Role role, sim::DelayModel up,
          sim::DelayModel down);

  void connect(std::function<void(const relay::WireMessage&)> on_message);

  void send(const relay::WireMessage& msg) override;
  std::int64_t now_ns() const override { return env_.scheduler.now_ns(); }
  std::uint64_t set_timer(std::int64_t delay_ns, std::function<void()> fn) override;
  void cancel_timer(std::uint64_t id) override;

 private:
  SimEnv& env_;
  std::uint8_t session_;
  relay::Role role_;
  sim::DelayModel up_, down_;
  int member_ = -1;
  std::function<void(const relay::WireMessage&)> handler_;
  std::uint64_t next_timer_ = 1;
  std::set<std::uint64_t> cancelled_;
};

struct SimRelayOptions {
  sim::DelayModel reader_hop = sim::DelayModel::zero();  // reader endpoint <-> server
  sim::DelayModel tag_hop = sim::DelayModel::zero();     // tag endpoint <-> server
  std::vector<plugin::Plugin*> pipeline;
  plugin::CrashPolicy crash_policy = plugin::CrashPolicy::FailClosed;
  std::int64_t endpoint_deadline_ns = 3'600 * sim::kNsPerSecond;
  bool strict_reply_pairing = true;
  std::uint64_t seed = 1;
  std::uint8_t session = 1;
  std::optional<StaticTagData> tag_preset_initial;
};

struct SimRelayResult {
  SessionLog server_log;
  SessionLog reader_log;
  SessionLog tag_log;
  std::vector<TimeoutEvent> tag_timeouts;
  nci::ConfigStream emulated_identity;
  std::int64_t procedure_ns = 0;  // first command until device completion
  bool reader_errored = false;
};

/// Wires card <-> reader endpoint <-> hub <-> tag endpoint <-> device on the
/// virtual clock and runs to quiescence.
SimRelayResult run_sim_relay(CardModel& card, PcdDevice& device, const SimRelayOptions& opts);

}  // namespace nfclab::endpoint
