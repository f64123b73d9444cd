#include <cstdlib>
#include <random>

#include "doctest.h"
#include "nfclab/lock_plugins.hpp"
#include "nfclab/pcapng.hpp"
#include "nfclab/nci.hpp"
#include "nfclab/endpoint.hpp"
#include "nfclab/plugin.hpp"

using namespace nfclab;
using namespace nfclab::plugin;

namespace {

std::string oop_plugin_path() {
  const char* p = std::getenv("NFCLAB_OOP_PLUGIN");
  REQUIRE(p != nullptr);
  return p;
}

Verdict run(std::vector<Plugin*> plugins, const Bytes& payload,
            CrashPolicy policy = CrashPolicy::FailClosed) {
  NullContext ctx;
  return run_pipeline(plugins, ctx, MessageKind::Apdu, Direction::PcdToPicc, payload, policy);
}

class ThrowingPlugin : public Plugin {
 public:
  std::string_view name() const override { return "throwing"; }
  Verdict on_message(Context&, MessageKind, Direction, const Bytes&) override {
    throw Error("deliberate crash");
  }
};

class SuffixPlugin : public Plugin {
 public:
  explicit SuffixPlugin(std::uint8_t b) : b_(b) {}
  std::string_view name() const override { return "suffix"; }
  Verdict on_message(Context&, MessageKind, Direction, const Bytes& payload) override {
    Bytes out = payload;
    out.push_back(b_);
    return Verdict::pass(out);
  }

 private:
  std::uint8_t b_;
};

class SplitPlugin : public Plugin {
 public:
  std::string_view name() const override { return "split"; }
  Verdict on_message(Context&, MessageKind, Direction, const Bytes& payload) override {
    Bytes a = payload, b = payload;
    a.push_back(0xA1);
    b.push_back(0xB2);
    return Verdict::replace({a, b});
  }
};

}  // namespace

TEST_CASE("empty pipeline is the identity") {
  Bytes x = from_hex("00A4040001");
  Verdict v = run({}, x);
  CHECK(v.kind == Verdict::Kind::Pass);
  CHECK(v.payload == x);
}

TEST_CASE("drop-all plugin short-circuits") {
  DropAllPlugin drop;
  IdentityPlugin id;
  CHECK(run({&drop}, from_hex("AA")).kind == Verdict::Kind::Drop);
  CHECK(run({&id, &drop, &id}, from_hex("AA")).kind == Verdict::Kind::Drop);
}

TEST_CASE("xor twice composes to the identity") {
  XorPlugin x1, x2;
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Bytes payload(1 + rng() % 32);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
    Verdict v = run({&x1, &x2}, payload);
    CHECK(v.kind == Verdict::Kind::Pass);
    CHECK(v.payload == payload);
  }
}

TEST_CASE("replace feeds every replacement through the remaining plugins") {
  SplitPlugin split;
  SuffixPlugin suffix(0xEE);
  Verdict v = run({&split, &suffix}, from_hex("01"));
  REQUIRE(v.kind == Verdict::Kind::Replace);
  REQUIRE(v.replacements.size() == 2);
  CHECK(v.replacements[0] == from_hex("01A1EE"));
  CHECK(v.replacements[1] == from_hex("01B2EE"));
}

TEST_CASE("pipeline composition is associative") {
  SuffixPlugin p1(0x11), p2(0x22);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Bytes payload(1 + rng() % 16);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
    Verdict combined = run({&p1, &p2}, payload);
    Verdict staged = run({&p2}, run({&p1}, payload).payload);
    CHECK(combined == staged);
  }
}

TEST_CASE("crash policy governs plugin failures") {
  ThrowingPlugin crash;
  IdentityPlugin id;
  Bytes x = from_hex("C0FFEE");
  CHECK(run({&id, &crash}, x, CrashPolicy::FailClosed).kind == Verdict::Kind::Drop);
  Verdict open = run({&id, &crash}, x, CrashPolicy::FailOpen);
  CHECK(open.kind == Verdict::Kind::Pass);
  CHECK(open.payload == x);  // the pipeline's original input
}

TEST_CASE("log plugin records every message and the initial record") {
  LogPlugin log;
  NullContext ctx;
  StaticTagData tag;
  tag.tech = TagTech::NfcA;
  tag.set("NFCID1", from_hex("04A1B2C3"));
  run_pipeline(std::vector<Plugin*>{&log}, ctx, MessageKind::Initial, Direction::PiccToPcd,
               nci::encode_static_tag(tag));
  for (int i = 0; i < 1000; ++i)
    run_pipeline(std::vector<Plugin*>{&log}, ctx, MessageKind::Apdu, Direction::PcdToPicc,
                 Bytes{0x5A, static_cast<std::uint8_t>(i)});
  CHECK(log.total_rows() == 1001);
  const SessionLog& session = log.session_log(0);
  CHECK(session.size() == 1000);
  REQUIRE(session.initial().has_value());
  CHECK(session.initial()->find("NFCID1") != nullptr);

  // The initial record round-trips into the USER_0 side of a pcapng export.
  SessionLog reloaded = nfclab::pcapng::import_log(nfclab::pcapng::export_log(session));
  REQUIRE(reloaded.initial().has_value());
  CHECK(*reloaded.initial()->find("NFCID1") == from_hex("04A1B2C3"));
}

TEST_CASE("out-of-process echo matches the in-process identity") {
  OopPlugin echo(oop_plugin_path(), {{"echo"}, 2000});
  IdentityPlugin id;
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10'000; ++trial) {
    Bytes payload(1 + rng() % 48);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
    Verdict a = run({&echo}, payload);
    Verdict b = run({&id}, payload);
    CHECK(a == b);
  }
}

TEST_CASE("out-of-process verdicts") {
  OopPlugin drop(oop_plugin_path(), {{"drop"}, 2000});
  CHECK(run({&drop}, from_hex("AA")).kind == Verdict::Kind::Drop);

  OopPlugin replace2(oop_plugin_path(), {{"replace2"}, 2000});
  Verdict v = run({&replace2}, from_hex("AA"));
  REQUIRE(v.kind == Verdict::Kind::Replace);
  REQUIRE(v.replacements.size() == 2);
  CHECK(v.replacements[0] == from_hex("AA01"));
  CHECK(v.replacements[1] == from_hex("AA02"));

  OopPlugin xorp(oop_plugin_path(), {{"xor"}, 2000});
  Verdict x = run({&xorp}, from_hex("00FF"));
  CHECK(x.payload == from_hex("FF00"));
}

TEST_CASE("out-of-process timeout and garbage follow the crash policy") {
  {
    OopPlugin slow(oop_plugin_path(), {{"slow"}, 200});
    Bytes x = from_hex("AB");
    CHECK(run({&slow}, x, CrashPolicy::FailClosed).kind == Verdict::Kind::Drop);
  }
  {
    OopPlugin garbage(oop_plugin_path(), {{"garbage"}, 500});
    Bytes x = from_hex("AB");
    Verdict v = run({&garbage}, x, CrashPolicy::FailOpen);
    CHECK(v.kind == Verdict::Kind::Pass);
    CHECK(v.payload == x);
  }
  {
    OopPlugin mute(oop_plugin_path(), {{"mute"}, 200});
    CHECK(run({&mute}, from_hex("AB")).kind == Verdict::Kind::Drop);
  }
}

TEST_CASE("walk-by reader plugin extracts the UID from posted card traffic") {
  crypto::Block key = lock::default_key();
  Bytes uid = from_hex("04C1C2C3C4C5C6");

  WalkbyPcdPlugin walkby(key, 42);
  sim::Rng picc_rng(43);
  lock::LockPicc picc({key, uid, std::nullopt, std::nullopt}, picc_rng);

  // Drive the plugin the way a session would: the endpoint posts the card's
  // initial data, then each card response; the plugin replies with commands.
  NullContext ctx;
  std::vector<Plugin*> chain{&walkby};
  run_pipeline(chain, ctx, MessageKind::Initial, Direction::PiccToPcd,
               nci::encode_static_tag(picc.initial_data()));
  std::size_t guard = 0;
  while (!ctx.replies.empty() && guard++ < 16) {
    Bytes command = ctx.replies.front().payload;
    ctx.replies.clear();
    std::optional<Bytes> response = picc.respond(command);
    REQUIRE(response.has_value());
    run_pipeline(chain, ctx, MessageKind::Apdu, Direction::PiccToPcd, *response);
  }
  REQUIRE(walkby.extracted_credentials().size() == 1);
  CHECK(walkby.extracted_credentials()[0] == uid);
  CHECK(walkby.failures() == 0);
}

TEST_CASE("walk-by plugin reports a failure under the wrong key") {
  crypto::Block wrong{};
  wrong.fill(0x13);
  WalkbyPcdPlugin walkby(wrong, 1);
  sim::Rng picc_rng(2);
  lock::LockPicc picc({lock::default_key(), from_hex("04C1C2C3C4C5C6"), std::nullopt,
                       std::nullopt},
                      picc_rng);

  NullContext ctx;
  std::vector<Plugin*> chain{&walkby};
  run_pipeline(chain, ctx, MessageKind::Initial, Direction::PiccToPcd,
               nci::encode_static_tag(picc.initial_data()));
  std::size_t guard = 0;
  while (!ctx.replies.empty() && guard++ < 16) {
    Bytes command = ctx.replies.front().payload;
    ctx.replies.clear();
    std::optional<Bytes> response = picc.respond(command);
    if (!response) break;
    run_pipeline(chain, ctx, MessageKind::Apdu, Direction::PiccToPcd, *response);
  }
  CHECK(walkby.extracted_credentials().empty());
  CHECK(walkby.failures() == 1);
}

TEST_CASE("walk-by plugin reads two sequential transponders") {
  crypto::Block key = lock::default_key();
  WalkbyPcdPlugin walkby(key, 9);
  std::vector<Plugin*> chain{&walkby};

  for (Bytes uid : {from_hex("04010101010101"), from_hex("04020202020202")}) {
    sim::Rng rng(lock::serial_from_uid(uid));
    lock::LockPicc picc({key, uid, std::nullopt, std::nullopt}, rng);
    NullContext ctx;
    run_pipeline(chain, ctx, MessageKind::Initial, Direction::PiccToPcd,
                 nci::encode_static_tag(picc.initial_data()));
    std::size_t guard = 0;
    while (!ctx.replies.empty() && guard++ < 16) {
      Bytes command = ctx.replies.front().payload;
      ctx.replies.clear();
      auto response = picc.respond(command);
      REQUIRE(response.has_value());
      run_pipeline(chain, ctx, MessageKind::Apdu, Direction::PiccToPcd, *response);
    }
  }
  REQUIRE(walkby.extracted_credentials().size() == 2);
  CHECK(walkby.extracted_credentials()[0] == from_hex("04010101010101"));
  CHECK(walkby.extracted_credentials()[1] == from_hex("04020202020202"));
}

namespace {

/// Cylinder that re-polls after a failed or silent unlock attempt.
class RepollingCylinder : public nfclab::endpoint::PcdDevice {
 public:
  RepollingCylinder(lock::Cylinder cylinder, sim::Rng& rng, int max_polls)
      : cylinder_(std::move(cylinder)), rng_(rng), max_polls_(max_polls) {}

  std::optional<Bytes> begin() override {
    pcd_.emplace(cylinder_.session_config(), rng_);
    ++polls_;
    return pcd_->begin();
  }
  std::optional<Bytes> on_response(const Bytes& response, std::int64_t) override {
    std::optional<Bytes> next = pcd_->step(response);
    if (next) return next;
    if (pcd_->outcome().unlocked) {
      unlocked_ = true;
      return std::nullopt;
    }
    return repoll();
  }
  std::optional<Bytes> on_exchange_failed() override {
    pcd_->abort_no_response("no answer before re-poll");
    return repoll();
  }
  nfclab::endpoint::TimeoutPolicy policy() const override {
    return nfclab::endpoint::TimeoutPolicy::mandatory(0.25);
  }
  std::int64_t processing_ns() const override { return sim::ms_to_ns(10.0); }

  bool unlocked() const { return unlocked_; }
  int polls() const { return polls_; }

 private:
  std::optional<Bytes> repoll() {
    if (polls_ >= max_polls_) return std::nullopt;
    pcd_.emplace(cylinder_.session_config(), rng_);
    ++polls_;
    return pcd_->begin();
  }
  lock::Cylinder cylinder_;
  sim::Rng& rng_;
  int max_polls_;
  int polls_ = 0;
  std::optional<lock::LockPcd> pcd_;
  bool unlocked_ = false;
};

}  // namespace

TEST_CASE("bruteforce plugin guesses UIDs against a re-polling cylinder") {
  crypto::Block key = lock::default_key();
  std::uint64_t start_serial = 40'000;
  Bytes target = lock::uid_from_serial(start_serial + 5);

  lock::Deployment d;
  d.key = key;
  d.authorized = {target};

  BruteforcePlugin::Config cfg;
  cfg.key = key;
  cfg.start_uid = lock::uid_from_serial(start_serial);
  cfg.stride = 1;
  cfg.rate_per_s = 3.0;
  BruteforcePlugin brute(cfg);

  sim::Rng pcd_rng(5);
  RepollingCylinder device(lock::Cylinder(d, lock::Variant::FlawedLock), pcd_rng, 200);
  nfclab::endpoint::ScriptedCard dummy;  // unused; the plugin answers everything

  StaticTagData preset;
  preset.tech = TagTech::NfcA;
  preset.set("NFCID1", from_hex("04000000000000"));

  nfclab::endpoint::SimRelayOptions opts;
  opts.pipeline = {&brute};
  opts.tag_preset_initial = preset;
  opts.strict_reply_pairing = false;  // rate limiting swallows early polls
  nfclab::endpoint::run_sim_relay(dummy, device, opts);

  CHECK(device.unlocked());
  CHECK(brute.attempts() == 5);
  CHECK(brute.current_guess() == target);

  // The plugin engages at most three fresh attempts per simulated second.
  const auto& times = brute.attempt_times_ns();
  REQUIRE(times.size() == 5);
  for (std::size_t i = 1; i < times.size(); ++i)
    CHECK(times[i] - times[i - 1] >= sim::seconds_to_ns(1.0 / 3.0));
}

TEST_CASE("bruteforce plugin reports exhaustion when nothing matches") {
  crypto::Block key = lock::default_key();
  lock::Deployment d;
  d.key = key;
  d.authorized = {lock::uid_from_serial(999'999)};  // unreachable

  BruteforcePlugin::Config cfg;
  cfg.key = key;
  cfg.start_uid = lock::uid_from_serial(1'000);
  BruteforcePlugin brute(cfg);

  sim::Rng pcd_rng(6);
  RepollingCylinder device(lock::Cylinder(d, lock::Variant::FlawedLock), pcd_rng, 20);
  nfclab::endpoint::ScriptedCard dummy;

  StaticTagData preset;
  preset.tech = TagTech::NfcA;
  preset.set("NFCID1", from_hex("04000000000000"));

  nfclab::endpoint::SimRelayOptions opts;
  opts.pipeline = {&brute};
  opts.tag_preset_initial = preset;
  opts.strict_reply_pairing = false;
  nfclab::endpoint::run_sim_relay(dummy, device, opts);

  CHECK(!device.unlocked());
  CHECK(device.polls() == 20);
  CHECK(brute.attempts() > 0);
  CHECK(brute.attempts() < 20);  // throttling kept it below one per poll
}
