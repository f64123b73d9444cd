#pragma once

#include <map>

#include "nfclab/lock.hpp"
#include "nfclab/plugin.hpp"

namespace nfclab::plugin {

/// Server-side reader role for the lock protocol: answers any endpoint that
/// posts transponder traffic into its session and extracts the credential,
/// without any cylinder in the loop.
class WalkbyPcdPlugin : public Plugin {
 public:
  explicit WalkbyPcdPlugin(crypto::Block key, std::uint64_t seed = 1);

  std::string_view name() const override { return "walkby-pcd"; }
  Verdict on_message(Context& ctx, MessageKind kind, Direction dir, const Bytes& payload) override;

  const std::vector<Bytes>& extracted_credentials() const { return extracted_; }
  std::size_t failures() const { return failures_; }

 private:
  void begin_run(Context& ctx);
  crypto::Block key_;
  sim::Rng rng_;
  std::map<std::uint8_t, std::unique_ptr<lock::LockPcd>> runs_;
  std::vector<Bytes> extracted_;
  std::size_t failures_ = 0;
};

/// Server-side tag role that answers a cylinder's unlocking attempts with
/// guessed UIDs, advancing the guess whenever the cylinder re-polls. Engages
/// at most `rate_per_s` fresh attempts per second of session time by staying
/// silent on early re-polls.
class BruteforcePlugin : public Plugin {
 public:
  struct Config {
    crypto::Block key{};
    std::optional<Bytes> start_uid;  // first guess is one stride above
    std::uint64_t stride = 1;
    double rate_per_s = 3.0;
    std::uint64_t seed = 1;
  };

  explicit BruteforcePlugin(Config config);

  std::string_view name() const override { return "bruteforce"; }
  Verdict on_message(Context& ctx, MessageKind kind, Direction dir, const Bytes& payload) override;

  std::uint64_t attempts() const { return attempts_; }
  Bytes current_guess() const;
  const std::vector<std::int64_t>& attempt_times_ns() const { return attempt_times_; }

 private:
  Config config_;
  sim::Rng rng_;
  std::uint64_t serial_;
  std::uint64_t attempts_ = 0;
  std::optional<lock::LockPicc> picc_;
  std::optional<std::int64_t> last_attempt_ns_;
  std::vector<std::int64_t> attempt_times_;
};

}  // namespace nfclab::plugin
