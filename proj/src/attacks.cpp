#include "nfclab/attacks.hpp"

namespace nfclab::lock {

RelayAttackOutcome attack_relay(const Deployment& deployment, const Bytes& uid, Variant variant,
                                double one_way_delay_s, std::uint64_t seed,
                                std::vector<plugin::Plugin*> pipeline, double budget_s) {
  sim::Rng picc_rng(seed * 2 + 1);
  sim::Rng pcd_rng(seed * 2 + 2);

  endpoint::LockTransponderCard card(LockPicc({deployment.key, uid, std::nullopt, std::nullopt},
                                              picc_rng));
  Cylinder cylinder(deployment, variant);
  endpoint::LockPcdDevice device(LockPcd(cylinder.session_config(), pcd_rng), budget_s);

  endpoint::SimRelayOptions opts;
  opts.reader_hop = sim::DelayModel::constant(one_way_delay_s / 2.0);
  opts.tag_hop = sim::DelayModel::constant(one_way_delay_s / 2.0);
  opts.pipeline = std::move(pipeline);
  opts.seed = seed;
  endpoint::SimRelayResult sim = endpoint::run_sim_relay(card, device, opts);

  RelayAttackOutcome outcome;
  outcome.unlocked = device.pcd().outcome().unlocked;
  outcome.elapsed_s = static_cast<double>(sim.procedure_ns) / 1e9;
  outcome.detail = device.pcd().outcome().unlocked
                       ? "unlocked"
                       : stage_name(device.pcd().outcome().abort_stage) + ": " +
                             device.pcd().outcome().reason;
  outcome.transcript = sim.tag_log;
  return outcome;
}

ReplayAttackOutcome attack_replay(const SessionLog& recorded, const Deployment& deployment,
                                  Variant variant, std::uint64_t seed) {
  sim::Rng rng(seed);
  Cylinder cylinder(deployment, variant);
  LockPcd pcd(cylinder.session_config(), rng);
  endpoint::ReplayEngine engine(recorded,
                                {endpoint::ReplayMode::DataBased, Direction::PiccToPcd, 0},
                                {.index_fallback_on_miss = true});

  std::optional<Bytes> cmd = pcd.begin();
  while (cmd && !pcd.finished()) {
    std::optional<Bytes> resp = engine.respond(*cmd);
    if (!resp) {
      pcd.abort_no_response("replay source exhausted");
      break;
    }
    cmd = pcd.step(*resp);
  }

  ReplayAttackOutcome outcome;
  outcome.unlocked = pcd.outcome().unlocked;
  outcome.abort_stage = pcd.outcome().unlocked ? Stage::Done : pcd.outcome().abort_stage;
  outcome.detail = pcd.outcome().reason;
  outcome.pcd_state = pcd.state();
  outcome.divergences = engine.divergences();
  outcome.replay_log = engine.recording();
  return outcome;
}

WalkbyOutcome attack_walkby(const crypto::Block& key, LockPicc& transponder, std::uint64_t seed) {
  sim::Rng rng(seed);
  LockPcd::Config cfg;
  cfg.key = key;
  cfg.variant = Variant::CorrectDesfire;  // the adversary has no reason to repeat the flaw
  cfg.accept_any_credential = true;
  LockPcd adversary(cfg, rng);
  DirectRunResult run = run_direct(adversary, transponder);

  WalkbyOutcome outcome;
  outcome.succeeded = run.outcome.completed;
  outcome.credential = run.outcome.received_credential;
  if (!run.outcome.completed) {
    outcome.failure_stage = run.outcome.abort_stage;
    outcome.detail = run.outcome.reason;
  }
  return outcome;
}

BruteforceOutcome attack_bruteforce(Cylinder& target, const BruteforceParams& params) {
  if (params.rate_per_s <= 0.0) throw RangeError("attempt rate must be positive");
  sim::Rng rng(params.seed);
  BruteforceOutcome outcome;

  std::uint64_t serial = params.known_uid ? serial_from_uid(*params.known_uid) : 0;
  double attempt_cost_s = 1.0 / params.rate_per_s;

  for (std::uint64_t k = 1; k <= params.max_attempts; ++k) {
    double now_s = static_cast<double>(k) * attempt_cost_s;
    if (target.locked_out(now_s)) {
      outcome.locked_out = true;
      outcome.attempts = k - 1;
      outcome.simulated_elapsed_s = static_cast<double>(k - 1) * attempt_cost_s;
      return outcome;
    }
    serial += params.stride;
    Bytes guess = uid_from_serial(serial);

    LockPicc picc({params.adversary_key, guess, std::nullopt, std::nullopt}, rng);
    LockPcd pcd(target.session_config(), rng);
    DirectRunResult run = run_direct(pcd, picc);
    target.record_result(now_s, run.outcome.unlocked);

    if (run.outcome.unlocked) {
      outcome.found_uid = guess;
      outcome.attempts = k;
      outcome.simulated_elapsed_s = now_s;
      return outcome;
    }
  }
  outcome.attempts = params.max_attempts;
  outcome.simulated_elapsed_s = static_cast<double>(params.max_attempts) * attempt_cost_s;
  return outcome;
}

}  // namespace nfclab::lock
