#include "doctest.h"
#include "nfclab/attacks.hpp"

using namespace nfclab;
using namespace nfclab::lock;

namespace {

const Bytes kUid = from_hex("04AABBCCDDEE01");

Deployment base_deployment() {
  Deployment d;
  d.key = default_key();
  d.authorized = {kUid};
  return d;
}

SessionLog record_honest_flawed(const Deployment& d, std::uint64_t seed) {
  sim::Rng pcd_rng(seed * 7 + 1);
  sim::Rng picc_rng(seed * 7 + 2);
  Cylinder cylinder(d, Variant::FlawedLock);
  LockPcd pcd(cylinder.session_config(), pcd_rng);
  LockPicc picc({d.key, kUid, std::nullopt, std::nullopt}, picc_rng);
  DirectRunResult run = run_direct(pcd, picc);
  REQUIRE(run.outcome.unlocked);
  return run.transcript;
}

}  // namespace

TEST_CASE("relay attack unlocks within budget on fast links") {
  Deployment d = base_deployment();
  RelayAttackOutcome zero = attack_relay(d, kUid, Variant::FlawedLock, 0.0, 1);
  CHECK(zero.unlocked);
  CHECK(zero.elapsed_s < 0.1);

  // Around-the-globe one-way latency still fits the cylinder's budget.
  RelayAttackOutcome globe = attack_relay(d, kUid, Variant::FlawedLock, 0.360, 2);
  CHECK(globe.unlocked);

  RelayAttackOutcome slow = attack_relay(d, kUid, Variant::FlawedLock, 2.5, 3);
  CHECK(!slow.unlocked);
}

TEST_CASE("relay attack is variant-agnostic") {
  Deployment d = base_deployment();
  CHECK(attack_relay(d, kUid, Variant::CorrectDesfire, 0.360, 4).unlocked);
}

TEST_CASE("replay attack succeeds against the flawed lock with identical bytes") {
  Deployment d = base_deployment();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SessionLog recorded = record_honest_flawed(d, seed);
    ReplayAttackOutcome replay = attack_replay(recorded, d, Variant::FlawedLock, seed);
    CHECK(replay.unlocked);
    CHECK(replay.divergences == 0);

    // m4..m7 as replayed are byte-identical to the recording.
    CHECK(replay.pcd_state.m4 == Bytes(recorded.entries()[3].payload.begin() + 1,
                                       recorded.entries()[3].payload.end()));
    CHECK(replay.pcd_state.m5 == Bytes(recorded.entries()[4].payload.begin() + 1,
                                       recorded.entries()[4].payload.end()));
    CHECK(replay.pcd_state.m6 == Bytes(recorded.entries()[5].payload.begin() + 1,
                                       recorded.entries()[5].payload.end()));
    CHECK(replay.pcd_state.m7 == Bytes(recorded.entries()[7].payload.begin() + 1,
                                       recorded.entries()[7].payload.end()));
  }
}

TEST_CASE("replay attack fails against the correct protocol at the m6 check") {
  Deployment d = base_deployment();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SessionLog recorded = record_honest_flawed(d, seed);
    ReplayAttackOutcome replay = attack_replay(recorded, d, Variant::CorrectDesfire, seed);
    CHECK(!replay.unlocked);
    CHECK(replay.abort_stage == Stage::M6Exchange);
    CHECK(replay.divergences > 0);  // the fresh m5 is not in the log
  }
}

TEST_CASE("replay with a corrupted byte aborts") {
  Deployment d = base_deployment();
  SessionLog recorded = record_honest_flawed(d, 5);
  SessionLog corrupted(recorded.mode(), recorded.created_us());
  corrupted.set_initial(*recorded.initial());
  for (std::size_t k = 0; k < recorded.size(); ++k) {
    Apdu a = recorded.entries()[k];
    if (k == 3) a.payload[4] ^= 0x40;  // inside m4
    corrupted.append(a);
  }
  ReplayAttackOutcome replay = attack_replay(corrupted, d, Variant::FlawedLock, 5);
  CHECK(!replay.unlocked);
}

TEST_CASE("walk-by extracts the UID without a cylinder") {
  Deployment d = base_deployment();
  sim::Rng rng(77);
  LockPicc transponder({d.key, kUid, std::nullopt, std::nullopt}, rng);
  WalkbyOutcome out = attack_walkby(d.key, transponder, 3);
  CHECK(out.succeeded);
  CHECK(out.credential == kUid);
}

TEST_CASE("walk-by credential replayed through the attack chain unlocks") {
  Deployment d = base_deployment();
  sim::Rng rng(78);
  LockPicc transponder({d.key, kUid, std::nullopt, std::nullopt}, rng);
  WalkbyOutcome walkby = attack_walkby(d.key, transponder, 4);
  REQUIRE(walkby.succeeded);

  // Impersonate the transponder with the extracted credential.
  sim::Rng rng2(79);
  sim::Rng rng3(80);
  Cylinder cylinder(d, Variant::FlawedLock);
  LockPcd pcd(cylinder.session_config(), rng2);
  LockPicc clone({d.key, from_hex("04000000000099"), walkby.credential, std::nullopt}, rng3);
  DirectRunResult run = run_direct(pcd, clone);
  CHECK(run.outcome.unlocked);
}

TEST_CASE("walk-by with the wrong key fails during authentication") {
  Deployment d = base_deployment();
  sim::Rng rng(81);
  LockPicc transponder({d.key, kUid, std::nullopt, std::nullopt}, rng);
  crypto::Block wrong{};
  wrong.fill(0x42);
  WalkbyOutcome out = attack_walkby(wrong, transponder, 5);
  CHECK(!out.succeeded);
  CHECK((out.failure_stage == Stage::M5Exchange || out.failure_stage == Stage::M6Exchange));
}

TEST_CASE("brute force finds the neighboring UID and matches the timing math") {
  Deployment d = base_deployment();
  std::uint64_t known_serial = 100'000;
  Bytes target = uid_from_serial(known_serial + 3596);
  d.authorized = {target};
  Cylinder cylinder(d, Variant::FlawedLock);

  BruteforceParams params;
  params.known_uid = uid_from_serial(known_serial);
  params.stride = 1;
  params.rate_per_s = 3.0;
  params.adversary_key = d.key;
  params.seed = 11;
  BruteforceOutcome out = attack_bruteforce(cylinder, params);

  REQUIRE(out.found_uid.has_value());
  CHECK(*out.found_uid == target);
  CHECK(out.attempts == 3596);
  CHECK(out.simulated_elapsed_s == doctest::Approx(3596.0 / 3.0).epsilon(1e-9));
  // ... which is the published "around 20 minutes".
  CHECK(std::abs(out.simulated_elapsed_s - 1198.7) <= 1.0);
}

TEST_CASE("brute force exhausts a toy space when no UID is known") {
  Deployment d = base_deployment();
  Bytes target = uid_from_serial(1234);
  d.authorized = {target};
  Cylinder cylinder(d, Variant::FlawedLock);

  BruteforceParams params;
  params.rate_per_s = 3.0;
  params.adversary_key = d.key;
  params.max_attempts = 1 << 16;
  BruteforceOutcome out = attack_bruteforce(cylinder, params);
  REQUIRE(out.found_uid.has_value());
  CHECK(*out.found_uid == target);
  CHECK(out.attempts == 1234);  // linear scan from the manufacturer prefix

  // No match within the budget reports exhaustion.
  Deployment far = base_deployment();
  far.authorized = {uid_from_serial(1 << 20)};
  Cylinder cyl2(far, Variant::FlawedLock);
  BruteforceParams p2 = params;
  p2.max_attempts = 100;
  BruteforceOutcome none = attack_bruteforce(cyl2, p2);
  CHECK(!none.found_uid.has_value());
  CHECK(none.attempts == 100);
}

TEST_CASE("mitigation matrix: each switch defeats exactly its attack") {
  auto deployment_with = [&](auto mutate) {
    Deployment d = base_deployment();
    mutate(d);
    return d;
  };

  // random r_A defeats replay, leaves relay/walk-by/brute force intact.
  {
    Deployment d = deployment_with([](Deployment& d) { d.mitigations.random_ra = true; });
    SessionLog recorded = record_honest_flawed(d, 21);
    CHECK(!attack_replay(recorded, d, Variant::FlawedLock, 21).unlocked);
    CHECK(attack_relay(d, kUid, Variant::FlawedLock, 0.1, 21).unlocked);

    sim::Rng rng(21);
    LockPicc t({d.key, kUid, std::nullopt, std::nullopt}, rng);
    CHECK(attack_walkby(d.key, t, 21).succeeded);

    Deployment bf = d;
    bf.authorized = {uid_from_serial(50)};
    Cylinder cyl(bf, Variant::FlawedLock);
    BruteforceParams params;
    params.adversary_key = bf.key;
    params.max_attempts = 100;
    CHECK(attack_bruteforce(cyl, params).found_uid.has_value());
  }

  // Per-deployment keys defeat the walk-by (which only knows the global key);
  // an in-system adversary can still brute-force their own deployment.
  {
    Deployment d = deployment_with([](Deployment& d) {
      d.mitigations.per_deployment_key = true;
      d.key = crypto::to_block(from_hex("5511AA22BB33CC44DD55EE66FF778899"));
    });
    sim::Rng rng(22);
    LockPicc t({d.key, kUid, std::nullopt, std::nullopt}, rng);
    CHECK(!attack_walkby(default_key(), t, 22).succeeded);  // global key useless

    SessionLog recorded = record_honest_flawed(d, 22);
    CHECK(attack_replay(recorded, d, Variant::FlawedLock, 22).unlocked);
    CHECK(attack_relay(d, kUid, Variant::FlawedLock, 0.1, 22).unlocked);

    Deployment bf = d;
    bf.authorized = {uid_from_serial(50)};
    Cylinder cyl(bf, Variant::FlawedLock);
    BruteforceParams params;
    params.adversary_key = bf.key;  // insider knows their own deployment key
    params.max_attempts = 100;
    CHECK(attack_bruteforce(cyl, params).found_uid.has_value());
  }

  // Random authorization tokens defeat UID guessing; the walk-by still clones
  // (it reads whatever credential the tag carries).
  {
    Bytes token = from_hex("91A2B3C4D5E6F7");
    Deployment d = deployment_with([&](Deployment& d) {
      d.mitigations.random_token = true;
      d.authorized = {token};
    });
    sim::Rng rng(23);
    LockPicc t({d.key, kUid, token, std::nullopt}, rng);
    WalkbyOutcome walkby = attack_walkby(d.key, t, 23);
    CHECK(walkby.succeeded);
    CHECK(walkby.credential == token);

    Cylinder cyl(d, Variant::FlawedLock);
    BruteforceParams params;
    params.adversary_key = d.key;
    params.max_attempts = 2000;
    CHECK(!attack_bruteforce(cyl, params).found_uid.has_value());  // UIDs never authorize

    SessionLog recorded;
    {
      sim::Rng a(24), b(25);
      Cylinder c2(d, Variant::FlawedLock);
      LockPcd pcd(c2.session_config(), a);
      LockPicc picc({d.key, kUid, token, std::nullopt}, b);
      auto run = run_direct(pcd, picc);
      REQUIRE(run.outcome.unlocked);
      recorded = run.transcript;
    }
    CHECK(attack_replay(recorded, d, Variant::FlawedLock, 26).unlocked);
  }

  // Try limiting locks the brute force out; single-shot attacks are untouched.
  {
    Deployment d = deployment_with([](Deployment& d) {
      d.mitigations.try_limit = true;
      d.mitigations.max_tries = 10;
      d.mitigations.try_window_s = 3600.0;
      d.authorized = {uid_from_serial(500)};
    });
    Cylinder cyl(d, Variant::FlawedLock);
    BruteforceParams params;
    params.adversary_key = d.key;
    params.max_attempts = 1000;
    BruteforceOutcome out = attack_bruteforce(cyl, params);
    CHECK(out.locked_out);
    CHECK(!out.found_uid.has_value());
    CHECK(out.attempts == 10);

    Deployment single = d;
    single.authorized = {kUid};
    SessionLog recorded = record_honest_flawed(single, 27);
    CHECK(attack_replay(recorded, single, Variant::FlawedLock, 27).unlocked);
    CHECK(attack_relay(single, kUid, Variant::FlawedLock, 0.1, 27).unlocked);
  }
}
