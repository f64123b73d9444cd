#include <random>

#include "doctest.h"
#include "nfclab/attacks.hpp"
#include "nfclab/endpoint.hpp"

using namespace nfclab;
using namespace nfclab::endpoint;

namespace {

const Bytes kUid = from_hex("04AABBCCDDEE01");

SessionLog pair_log() {
  // [req a / resp b, req c / resp d]
  SessionLog log(LogMode::Relay, 0);
  log.append({from_hex("A0"), Direction::PcdToPicc, 0});
  log.append({from_hex("B0B1"), Direction::PiccToPcd, 1});
  log.append({from_hex("C0"), Direction::PcdToPicc, 2});
  log.append({from_hex("D0D1"), Direction::PiccToPcd, 3});
  return log;
}

/// Test reader device: issues a fixed command list, records replies.
class ScriptDevice : public PcdDevice {
 public:
  explicit ScriptDevice(std::vector<Bytes> commands, TimeoutPolicy policy = {})
      : commands_(std::move(commands)), policy_(policy) {}

  std::optional<Bytes> begin() override { return next(); }
  std::optional<Bytes> on_response(const Bytes& response, std::int64_t latency_ns) override {
    replies.push_back(response);
    latencies_ns.push_back(latency_ns);
    return next();
  }
  std::optional<Bytes> on_exchange_failed() override {
    ++failures;
    return next();
  }
  TimeoutPolicy policy() const override { return policy_; }

  std::vector<Bytes> replies;
  std::vector<std::int64_t> latencies_ns;
  int failures = 0;

 private:
  std::optional<Bytes> next() {
    if (cursor_ >= commands_.size()) return std::nullopt;
    return commands_[cursor_++];
  }
  std::vector<Bytes> commands_;
  TimeoutPolicy policy_;
  std::size_t cursor_ = 0;
};

}  // namespace

TEST_CASE("index-based replay answers positionally") {
  ReplayEngine engine(pair_log(), {ReplayMode::IndexBased, Direction::PiccToPcd, 0});
  CHECK(engine.respond(from_hex("A0")) == from_hex("B0B1"));
  CHECK(engine.respond(from_hex("C0")) == from_hex("D0D1"));
  CHECK(!engine.respond(from_hex("E0")).has_value());  // exhausted
  CHECK(engine.divergences() == 0);
  CHECK(engine.recording().size() == 5);  // 3 requests + 2 responses
  CHECK(engine.recording().mode() == LogMode::Replay);
}

TEST_CASE("index-based replay flags diverging requests but answers anyway") {
  ReplayEngine engine(pair_log(), {ReplayMode::IndexBased, Direction::PiccToPcd, 0});
  CHECK(engine.respond(from_hex("FF")) == from_hex("B0B1"));
  CHECK(engine.divergences() == 1);
}

TEST_CASE("data-based replay matches on request contents") {
  // Answer for c is found regardless of call order.
  ReplayEngine engine(pair_log(), {ReplayMode::DataBased, Direction::PiccToPcd, 0});
  CHECK(engine.respond(from_hex("C0")) == from_hex("D0D1"));
  CHECK(engine.respond(from_hex("A0")) == from_hex("B0B1"));
  CHECK(!engine.respond(from_hex("EE")).has_value());
  CHECK(engine.divergences() == 0);
}

TEST_CASE("replay is deterministic over a fixed request sequence") {
  std::vector<Bytes> requests = {from_hex("A0"), from_hex("C0"), from_hex("A0")};
  for (ReplayMode mode : {ReplayMode::IndexBased, ReplayMode::DataBased}) {
    std::vector<std::optional<Bytes>> first, second;
    for (int round = 0; round < 2; ++round) {
      ReplayEngine engine(pair_log(), {mode, Direction::PiccToPcd, 0});
      auto& out = round == 0 ? first : second;
      for (const Bytes& r : requests) out.push_back(engine.respond(r));
    }
    CHECK(first == second);
  }
}

TEST_CASE("reader endpoint serves scripted responses over the relay") {
  ScriptedCard card;
  card.add(from_hex("01"), from_hex("F1"));
  StaticTagData init;
  init.tech = TagTech::NfcA;
  init.set("NFCID1", from_hex("04010203"));
  card.set_initial(init);

  ScriptDevice device({from_hex("01")});
  SimRelayOptions opts;
  SimRelayResult result = run_sim_relay(card, device, opts);

  REQUIRE(device.replies.size() == 1);
  CHECK(device.replies[0] == from_hex("F1"));
  CHECK(!result.reader_errored);
  // Both endpoint logs saw the exchange.
  CHECK(result.reader_log.size() == 2);
  CHECK(result.tag_log.size() == 2);
  // The tag endpoint emulates the card's identity.
  REQUIRE(result.emulated_identity.size() == 1);
  CHECK(result.emulated_identity.entries()[0].id.symbol == "LA_NFCID1");
}

TEST_CASE("unknown scripted request posts an error") {
  ScriptedCard card;
  card.add(from_hex("01"), from_hex("F1"));
  StaticTagData init;
  init.tech = TagTech::NfcA;
  init.set("NFCID1", from_hex("04010203"));
  card.set_initial(init);

  ScriptDevice device({from_hex("99")}, TimeoutPolicy::mandatory(0.5));
  SimRelayOptions opts;
  SimRelayResult result = run_sim_relay(card, device, opts);
  CHECK(result.reader_errored);
  CHECK(device.replies.empty());
  CHECK(device.failures == 1);
}

TEST_CASE("relay transparency: remote lock run equals the direct transcript") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    lock::Deployment deployment;
    deployment.key = lock::default_key();
    deployment.authorized = {kUid};
    lock::Cylinder cylinder(deployment, lock::Variant::FlawedLock);

    // Direct run.
    sim::Rng pcd_rng(seed);
    sim::Rng picc_rng(seed + 1000);
    lock::LockPcd direct_pcd(cylinder.session_config(), pcd_rng);
    lock::LockPicc direct_picc({deployment.key, kUid, std::nullopt, std::nullopt}, picc_rng);
    lock::DirectRunResult direct = lock::run_direct(direct_pcd, direct_picc);
    REQUIRE(direct.outcome.unlocked);

    // Relayed run with identical nonce streams.
    sim::Rng pcd_rng2(seed);
    sim::Rng picc_rng2(seed + 1000);
    LockTransponderCard card(lock::LockPicc({deployment.key, kUid, std::nullopt, std::nullopt},
                                            picc_rng2));
    LockPcdDevice device(lock::LockPcd(cylinder.session_config(), pcd_rng2));
    SimRelayOptions opts;
    opts.seed = seed;
    SimRelayResult relayed = run_sim_relay(card, device, opts);

    REQUIRE(device.pcd().outcome().unlocked);
    REQUIRE(relayed.tag_log.size() == direct.transcript.size());
    for (std::size_t k = 0; k < direct.transcript.size(); ++k) {
      CHECK(relayed.tag_log.entries()[k].payload == direct.transcript.entries()[k].payload);
      CHECK(relayed.tag_log.entries()[k].direction == direct.transcript.entries()[k].direction);
    }
    // The server saw the same traffic.
    CHECK(relayed.server_log.same_traffic(relayed.tag_log));
  }
}

TEST_CASE("endpoint response deadline records a timeout event per request") {
  ScriptedCard card;
  for (int i = 0; i < 4; ++i) card.add({static_cast<std::uint8_t>(i)}, {0xF0, static_cast<std::uint8_t>(i)});
  StaticTagData init;
  init.tech = TagTech::NfcA;
  init.set("NFCID1", from_hex("04010203"));
  card.set_initial(init);

  std::vector<Bytes> commands;
  for (int i = 0; i < 4; ++i) commands.push_back({static_cast<std::uint8_t>(i)});
  ScriptDevice device(commands);

  SimRelayOptions opts;
  opts.reader_hop = sim::DelayModel::constant(0.005);  // 10 ms one way in total
  opts.tag_hop = sim::DelayModel::constant(0.005);
  opts.endpoint_deadline_ns = sim::ms_to_ns(1.0);
  SimRelayResult result = run_sim_relay(card, device, opts);

  CHECK(result.tag_timeouts.size() == 4);   // every request blew the 1 ms deadline
  CHECK(device.replies.size() == 4);        // late replies still completed the run
}

TEST_CASE("preset initial data overrides the remote record") {
  ScriptedCard card;
  card.add(from_hex("01"), from_hex("F1"));

  StaticTagData preset;
  preset.tech = TagTech::NfcA;
  preset.set("NFCID1", from_hex("04112233445566"));

  ScriptDevice device({from_hex("01")});
  SimRelayOptions opts;
  opts.tag_preset_initial = preset;
  SimRelayResult result = run_sim_relay(card, device, opts);

  REQUIRE(result.emulated_identity.size() == 1);
  CHECK(result.emulated_identity.entries()[0].value == from_hex("04112233445566"));
}

TEST_CASE("clone session emulates static data and answers nothing") {
  StaticTagData data;
  data.tech = TagTech::NfcA;
  data.set("NFCID1", from_hex("04AABBCCDDEEFF"));
  CloneSession clone(data);

  REQUIRE(clone.identity().size() == 1);
  CHECK(clone.identity().entries()[0].id.symbol == "LA_NFCID1");
  CHECK(clone.identity().entries()[0].value == from_hex("04AABBCCDDEEFF"));

  clone.on_apdu(from_hex("00A40400"), 10);
  clone.on_apdu(from_hex("00B0"), 20);
  CHECK(clone.unanswered().size() == 2);
  CHECK(clone.unanswered().mode() == LogMode::Clone);
}

TEST_CASE("clone session shields its configuration and restores on close") {
  StaticTagData data;
  data.tech = TagTech::NfcA;
  data.set("NFCID1", from_hex("04AABBCCDDEEFF"));
  CloneSession clone(data);

  nci::ConfigStream system1;
  system1.add({nci::ParamId::named("LA_NFCID1"), from_hex("08999999")});
  system1.add({nci::ParamId::named("LA_SEL_INFO"), {0x60}});
  nci::ConfigStream forwarded = clone.apply_system_config(system1);
  REQUIRE(forwarded.size() == 1);
  CHECK(forwarded.entries()[0].id.symbol == "LA_SEL_INFO");

  nci::ConfigStream system2;
  system2.add({nci::ParamId::named("LA_NFCID1"), from_hex("08AAAAAA")});
  clone.apply_system_config(system2);

  nci::ConfigStream restore = clone.close();
  REQUIRE(restore.size() == 1);
  CHECK(restore.entries()[0].id.symbol == "LA_NFCID1");
  CHECK(restore.entries()[0].value == from_hex("08AAAAAA"));  // latest rejected value
  CHECK_THROWS(clone.apply_system_config(system1));
}

TEST_CASE("advanced replay over the relay equals local replay with an identity pipeline") {
  SessionLog recorded = pair_log();

  // Local replay.
  ReplayEngine local(recorded, {ReplayMode::DataBased, Direction::PiccToPcd, 0});
  std::vector<Bytes> local_out;
  for (const Bytes& req : {from_hex("A0"), from_hex("C0")})
    local_out.push_back(*local.respond(req));

  // Advanced replay: the replay source sits behind the relay server.
  ReplayCard card(recorded, {ReplayMode::DataBased, Direction::PiccToPcd, 0});
  StaticTagData init;
  init.tech = TagTech::NfcA;
  init.set("NFCID1", from_hex("04010203"));

  ScriptDevice device({from_hex("A0"), from_hex("C0")});
  SimRelayOptions opts;
  opts.tag_preset_initial = init;
  SimRelayResult result = run_sim_relay(card, device, opts);

  REQUIRE(device.replies.size() == 2);
  CHECK(device.replies == local_out);
}

namespace {

/// Substitutes one recorded response on its way back through the server.
class ResponseRewritePlugin : public plugin::Plugin {
 public:
  std::string_view name() const override { return "rewrite"; }
  plugin::Verdict on_message(plugin::Context&, plugin::MessageKind, Direction dir,
                             const Bytes& payload) override {
    if (dir == Direction::PiccToPcd && payload == from_hex("B0B1"))
      return plugin::Verdict::pass(from_hex("B0B2"));
    return plugin::Verdict::pass(payload);
  }
};

}  // namespace

TEST_CASE("advanced replay pipeline can substitute the replayed response") {
  SessionLog recorded = pair_log();
  ReplayCard card(recorded, {ReplayMode::DataBased, Direction::PiccToPcd, 0});
  StaticTagData init;
  init.tech = TagTech::NfcA;
  init.set("NFCID1", from_hex("04010203"));

  ResponseRewritePlugin rewrite;
  ScriptDevice device({from_hex("A0")});
  SimRelayOptions opts;
  opts.tag_preset_initial = init;
  opts.pipeline = {&rewrite};
  SimRelayResult result = run_sim_relay(card, device, opts);

  REQUIRE(device.replies.size() == 1);
  CHECK(device.replies[0] == from_hex("B0B2"));
  (void)result;
}

TEST_CASE("a dropping pipeline starves the requester into its timeout") {
  SessionLog recorded = pair_log();
  ReplayCard card(recorded, {ReplayMode::DataBased, Direction::PiccToPcd, 0});
  StaticTagData init;
  init.tech = TagTech::NfcA;
  init.set("NFCID1", from_hex("04010203"));

  plugin::DropAllPlugin drop;
  ScriptDevice device({from_hex("A0")}, TimeoutPolicy::mandatory(0.1));
  SimRelayOptions opts;
  opts.tag_preset_initial = init;
  opts.pipeline = {&drop};
  SimRelayResult result = run_sim_relay(card, device, opts);

  CHECK(device.replies.empty());
  CHECK(device.failures == 1);
  (void)result;
}

TEST_CASE("local replay is faster than any relayed exchange with link delay") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    double hop_delay = 0.001 + static_cast<double>(rng() % 50) / 1000.0;

    // Local replay cost: engine answer with zero processing time.
    ReplayEngine local(pair_log(), {ReplayMode::DataBased, Direction::PiccToPcd, 0});
    sim::Scheduler clock;
    std::int64_t t0 = clock.now_ns();
    local.respond(from_hex("A0"));
    std::int64_t local_ns = clock.now_ns() - t0;  // instantaneous on the virtual clock

    ScriptedCard card;
    card.add(from_hex("A0"), from_hex("B0B1"));
    StaticTagData init;
    init.tech = TagTech::NfcA;
    init.set("NFCID1", from_hex("04010203"));
    card.set_initial(init);
    ScriptDevice device({from_hex("A0")});
    SimRelayOptions opts;
    opts.reader_hop = sim::DelayModel::constant(hop_delay);
    opts.tag_hop = sim::DelayModel::constant(hop_delay);
    run_sim_relay(card, device, opts);
    REQUIRE(device.latencies_ns.size() == 1);
    CHECK(local_ns < device.latencies_ns[0]);
  }
}
