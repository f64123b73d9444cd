#include "nfclab/lock_plugins.hpp"

namespace nfclab::plugin {

WalkbyPcdPlugin::WalkbyPcdPlugin(crypto::Block key, std::uint64_t seed)
    : key_(key), rng_(seed) {}

void WalkbyPcdPlugin::begin_run(Context& ctx) {
  lock::LockPcd::Config cfg;
  cfg.key = key_;
  cfg.variant = lock::Variant::CorrectDesfire;
  cfg.accept_any_credential = true;
  auto run = std::make_unique<lock::LockPcd>(cfg, rng_);
  ctx.reply_to_sender(MessageKind::Apdu, Direction::PcdToPicc, run->begin());
  runs_[ctx.session_id()] = std::move(run);
}

Verdict WalkbyPcdPlugin::on_message(Context& ctx, MessageKind kind, Direction dir,
                                    const Bytes& payload) {
  if (kind == MessageKind::Initial) {
    // A transponder appeared; start reading it.
    begin_run(ctx);
    return Verdict::pass(payload);
  }
  if (dir == Direction::PiccToPcd) {
    auto it = runs_.find(ctx.session_id());
    if (it != runs_.end() && it->second && !it->second->finished()) {
      std::optional<Bytes> next = it->second->step(payload);
      if (next) {
        ctx.reply_to_sender(MessageKind::Apdu, Direction::PcdToPicc, *next);
      } else {
        const lock::PcdOutcome& out = it->second->outcome();
        if (out.completed) extracted_.push_back(out.received_credential);
        else ++failures_;
        runs_.erase(it);
      }
    }
  }
  return Verdict::pass(payload);
}

BruteforcePlugin::BruteforcePlugin(Config config)
    : config_(std::move(config)),
      rng_(config_.seed),
      serial_(config_.start_uid ? lock::serial_from_uid(*config_.start_uid) : 0) {}

Bytes BruteforcePlugin::current_guess() const {
  return lock::uid_from_serial(serial_);
}

Verdict BruteforcePlugin::on_message(Context& ctx, MessageKind kind, Direction dir,
                                     const Bytes& payload) {
  if (kind != MessageKind::Apdu || dir != Direction::PcdToPicc || payload.empty())
    return Verdict::pass(payload);

  if (payload[0] == lock::kCmdSelectApplication) {
    // A fresh poll starts the next attempt, throttled to the configured rate.
    std::int64_t min_gap_ns = sim::seconds_to_ns(1.0 / config_.rate_per_s);
    if (last_attempt_ns_ && ctx.now_ns() - *last_attempt_ns_ < min_gap_ns)
      return Verdict::drop();  // stay silent; the cylinder will re-poll
    last_attempt_ns_ = ctx.now_ns();
    attempt_times_.push_back(ctx.now_ns());
    serial_ += config_.stride;
    ++attempts_;
    picc_.emplace(lock::LockPicc::Config{config_.key, lock::uid_from_serial(serial_),
                                         std::nullopt, std::nullopt},
                  rng_);
  }
  if (picc_) {
    std::optional<Bytes> resp = picc_->respond(payload);
    if (resp) ctx.reply_to_sender(MessageKind::Apdu, Direction::PiccToPcd, *resp);
  }
  return Verdict::pass(payload);
}

}  // namespace nfclab::plugin
