#pragma once

#include "nfclab/endpoint.hpp"
#include "nfclab/lock.hpp"

namespace nfclab::lock {

struct RelayAttackOutcome {
  bool unlocked = false;
  double elapsed_s = 0.0;  // full procedure duration seen by the tag endpoint
  std::string detail;
  SessionLog transcript;  // tag-endpoint view
};

/// Full relay chain (reader endpoint <-> server <-> tag endpoint) on the
/// virtual clock. `one_way_delay_s` is the endpoint-to-endpoint latency per
/// direction, split evenly over the two hops. The cylinder enforces its
/// unlock budget as a per-response deadline.
RelayAttackOutcome attack_relay(const Deployment& deployment, const Bytes& uid, Variant variant,
                                double one_way_delay_s, std::uint64_t seed,
                                std::vector<plugin::Plugin*> pipeline = {},
                                double budget_s = endpoint::LockPcdDevice::kUnlockBudgetS);

struct ReplayAttackOutcome {
  bool unlocked = false;
  Stage abort_stage = Stage::Done;
  std::string detail;
  AuthState pcd_state;     // fresh reader's view (m4..m7 as replayed)
  std::size_t divergences = 0;
  SessionLog replay_log;   // the replay engine's own recording
};

/// Replays the tag side of a recorded honest run against a fresh cylinder
/// session (data-based selection; diverging requests are answered positionally
/// and flagged).
ReplayAttackOutcome attack_replay(const SessionLog& recorded, const Deployment& deployment,
                                  Variant variant, std::uint64_t seed);

struct WalkbyOutcome {
  bool succeeded = false;
  Bytes credential;  // extracted UID / authorization token
  Stage failure_stage = Stage::Done;
  std::string detail;
};

/// Runs the reader role under `key` directly against a transponder and
/// extracts its credential, no cylinder involved.
WalkbyOutcome attack_walkby(const crypto::Block& key, LockPicc& transponder,
                            std::uint64_t seed = 1);

struct BruteforceOutcome {
  std::optional<Bytes> found_uid;
  std::uint64_t attempts = 0;
  double simulated_elapsed_s = 0.0;
  bool locked_out = false;
};

struct BruteforceParams {
  std::optional<Bytes> known_uid;  // enumeration starts one stride above it
  std::uint64_t stride = 1;
  double rate_per_s = 3.0;  // full unlock attempts per second of simulated time
  std::uint64_t max_attempts = 1 << 20;
  crypto::Block adversary_key{};  // key used to impersonate transponders
  std::uint64_t seed = 1;
};

/// Enumerates candidate UIDs against a cylinder, one full unlock attempt per
/// candidate, paced on a simulated clock.
BruteforceOutcome attack_bruteforce(Cylinder& target, const BruteforceParams& params);

}  // namespace nfclab::lock
