#pragma once

#include <optional>
#include <set>

#include "nfclab/core.hpp"
#include "nfclab/crypto.hpp"
#include "nfclab/sim.hpp"

namespace nfclab::lock {

using crypto::Block;

// DESFire-native framing: one command byte plus parameters; responses carry a
// status byte. Codes are centralized here; the authenticate command and the
// static reader nonce are fixtures.
constexpr std::uint8_t kCmdSelectApplication = 0x5A;
constexpr std::uint8_t kCmdAuthenticateAes = 0xAA;
constexpr std::uint8_t kCmdGetCardUid = 0x51;
constexpr std::uint8_t kStatusOk = 0x00;
constexpr std::uint8_t kStatusAdditionalFrame = 0xAF;
constexpr std::uint8_t kStatusAuthError = 0xAE;
constexpr std::uint8_t kStatusIllegalCommand = 0x1C;
constexpr std::uint8_t kStatusAppNotFound = 0xA0;

// Application number 1, AID bytes least-significant first.
inline const Bytes kApplicationId = {0x01, 0x00, 0x00};

constexpr std::size_t kUidLen = 7;
constexpr std::uint8_t kNxpManufacturerByte = 0x04;

/// Reader behavior during authentication. The flawed variant keeps the
/// reader nonce static and encrypts with a stale IV; the correct variant is
/// the stock DESFire AES authentication.
enum class Variant { FlawedLock, CorrectDesfire };

enum class Stage : std::uint8_t {
  SelectApplication,
  Authenticate,
  M5Exchange,      // PICC checks rot(r_B)
  M6Exchange,      // PCD checks rot(r_A')
  GetUid,          // secure channel transfer
  Authorization,   // credential lookup
  Done,
};

std::string stage_name(Stage s);

struct Mitigations {
  bool random_ra = false;        // reader nonce drawn fresh per session
  bool per_deployment_key = false;
  bool random_token = false;     // authorization via random token instead of UID
  bool try_limit = false;
  int max_tries = 5;
  double try_window_s = 60.0;
};

/// Protocol-visible state of one side, kept for inspection by tests and
/// attack tooling.
struct AuthState {
  Variant variant = Variant::FlawedLock;
  Block r_a{};
  Block r_b{};
  Block r_a_prime{};
  Block iv_a{};
  Block iv_b{};
  Bytes m4, m5, m6, m7;
  std::optional<Block> session_key;
  Stage stage = Stage::SelectApplication;
  bool aborted = false;
  std::string abort_reason;
};

struct PcdOutcome {
  bool unlocked = false;
  bool completed = false;  // protocol ran to the end (authorization may still fail)
  Stage abort_stage = Stage::SelectApplication;
  std::string reason;
  Bytes received_credential;
};

/// Keys, credentials and policy switches shared by the cylinders and
/// transponders of one installation.
struct Deployment {
  Block key{};
  std::vector<Bytes> authorized;  // accepted credentials (UIDs, or tokens)
  Mitigations mitigations;

  bool is_authorized(const Bytes& credential) const;
};

/// Well-known all-deployments key fixture.
Block default_key();

Bytes uid_from_serial(std::uint64_t serial);
std::uint64_t serial_from_uid(const Bytes& uid);

/// Reader side (cylinder) of the unlocking procedure, one protocol run.
class LockPcd {
 public:
  struct Config {
    Block key{};
    Variant variant = Variant::FlawedLock;
    Block static_ra{};             // flawed-variant fixture, default all-zero
    bool random_ra = false;        // mitigation: fresh r_A even in flawed variant
    std::vector<Bytes> authorized;
    bool accept_any_credential = false;  // adversarial reader (walk-by)
  };

  LockPcd(Config config, sim::Rng& rng);

  /// First command of the procedure.
  Bytes begin();

  /// Feeds a response; returns the next command, or nullopt when the run is
  /// over (see outcome()).
  std::optional<Bytes> step(const Bytes& response);

  void abort_no_response(const std::string& reason);

  bool finished() const { return finished_; }
  const PcdOutcome& outcome() const { return outcome_; }
  const AuthState& state() const { return state_; }

 private:
  std::optional<Bytes> fail(Stage stage, const std::string& reason);
  Config config_;
  AuthState state_;
  PcdOutcome outcome_;
  crypto::SecureChannel channel_;
  bool finished_ = false;
  bool started_ = false;
};

/// Tag side (transponder). Follows stock DESFire behavior in both variants;
/// the flaw lives in the reader. A Select Application command restarts the
/// state machine, as a field re-poll would.
class LockPicc {
 public:
  struct Config {
    Block key{};
    Bytes uid;                     // 7 bytes
    std::optional<Bytes> credential;  // defaults to uid
    std::optional<Block> forced_rb;   // pin the nonce (tests / determinism checks)
  };

  LockPicc(Config config, sim::Rng& rng);

  /// Handles one reader command; nullopt means the card aborted and stays
  /// silent.
  std::optional<Bytes> respond(const Bytes& command);

  const AuthState& state() const { return state_; }
  const Bytes& uid() const { return config_.uid; }
  const Bytes& credential() const { return credential_; }
  StaticTagData initial_data() const;

 private:
  std::optional<Bytes> fail(Stage stage, const std::string& reason,
                            std::optional<std::uint8_t> status = std::nullopt);
  void reset();
  Config config_;
  Bytes credential_;
  sim::Rng* rng_;
  AuthState state_;
  crypto::SecureChannel channel_;
};

/// Cylinder with cross-run state (authorization try limiting).
class Cylinder {
 public:
  Cylinder(Deployment deployment, Variant variant);

  LockPcd::Config session_config() const;
  bool locked_out(double now_s) const;
  void record_result(double now_s, bool unlocked);
  const Deployment& deployment() const { return deployment_; }
  Variant variant() const { return variant_; }

 private:
  Deployment deployment_;
  Variant variant_;
  std::vector<double> recent_failures_;
};

struct DirectRunResult {
  PcdOutcome outcome;
  SessionLog transcript;
  AuthState pcd_state;
  AuthState picc_state;
};

/// Drives a full unlocking procedure with the two parties wired directly
/// (no relay). Transcript timestamps advance by `step_ns` per message.
DirectRunResult run_direct(LockPcd& pcd, LockPicc& picc, std::int64_t step_ns = 1'000'000);

}  // namespace nfclab::lock
