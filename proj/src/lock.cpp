#include "nfclab/lock.hpp"

#include <algorithm>

namespace nfclab::lock {

using crypto::cbc_decrypt;
using crypto::cbc_encrypt;
using crypto::derive_session_key;
using crypto::last_block;
using crypto::rotate_left;
using crypto::to_block;

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::SelectApplication: return "select-application";
    case Stage::Authenticate: return "authenticate";
    case Stage::M5Exchange: return "m5-rot-check";
    case Stage::M6Exchange: return "m6-rot-check";
    case Stage::GetUid: return "get-uid";
    case Stage::Authorization: return "authorization";
    default: return "done";
  }
}

bool Deployment::is_authorized(const Bytes& credential) const {
  return std::find(authorized.begin(), authorized.end(), credential) != authorized.end();
}

Block default_key() {
  return to_block(from_hex("00112233445566778899AABBCCDDEEFF"));
}

Bytes uid_from_serial(std::uint64_t serial) {
  if (serial >= (1ull << 48)) throw RangeError("serial exceeds 6 bytes");
  Bytes uid(kUidLen);
  uid[0] = kNxpManufacturerByte;
  for (int i = 0; i < 6; ++i) uid[1 + i] = static_cast<std::uint8_t>(serial >> (8 * (5 - i)));
  return uid;
}

std::uint64_t serial_from_uid(const Bytes& uid) {
  if (uid.size() != kUidLen) throw RangeError("UID must be 7 bytes");
  std::uint64_t serial = 0;
  for (int i = 0; i < 6; ++i) serial = (serial << 8) | uid[1 + i];
  return serial;
}

namespace {

Block random_block(sim::Rng& rng) {
  Block b{};
  for (auto& byte : b) byte = static_cast<std::uint8_t>(rng());
  return b;
}

Bytes with_status(std::uint8_t status, ByteView body = {}) {
  Bytes out{status};
  append(out, body);
  return out;
}

}  // namespace

// --- LockPcd ---

LockPcd::LockPcd(Config config, sim::Rng& rng) : config_(std::move(config)) {
  state_.variant = config_.variant;
  bool fresh_ra = config_.variant == Variant::CorrectDesfire || config_.random_ra;
  state_.r_a = fresh_ra ? random_block(rng) : config_.static_ra;
  state_.iv_a = Block{};
  state_.stage = Stage::SelectApplication;
}

Bytes LockPcd::begin() {
  if (started_) throw Error("protocol run already started");
  started_ = true;
  state_.stage = Stage::SelectApplication;
  Bytes cmd{kCmdSelectApplication};
  append(cmd, kApplicationId);
  return cmd;
}

std::optional<Bytes> LockPcd::fail(Stage stage, const std::string& reason) {
  state_.aborted = true;
  state_.abort_reason = reason;
  finished_ = true;
  outcome_.unlocked = false;
  outcome_.completed = false;
  outcome_.abort_stage = stage;
  outcome_.reason = reason;
  return std::nullopt;
}

void LockPcd::abort_no_response(const std::string& reason) {
  fail(state_.stage, reason);
}

std::optional<Bytes> LockPcd::step(const Bytes& response) {
  if (finished_) return std::nullopt;
  if (response.empty()) return fail(state_.stage, "empty response");

  switch (state_.stage) {
    case Stage::SelectApplication: {
      if (response != Bytes{kStatusOk})
        return fail(Stage::SelectApplication, "application selection refused");
      state_.stage = Stage::Authenticate;
      return Bytes{kCmdAuthenticateAes, 0x00};  // key 0
    }
    case Stage::Authenticate: {
      if (response[0] != kStatusAdditionalFrame || response.size() != 1 + crypto::kBlockSize)
        return fail(Stage::Authenticate, "unexpected authenticate reply");
      state_.m4 = Bytes(response.begin() + 1, response.end());
      Block m4 = to_block(state_.m4);
      // r_B arrives encrypted under the pre-shared key with a zero IV.
      state_.r_b = to_block(cbc_decrypt(ByteView(config_.key), state_.iv_a, state_.m4));
      if (config_.variant == Variant::CorrectDesfire) {
        state_.iv_a = m4;  // proper CBC chaining across messages
      }
      // Flawed variant: iv_a stays zero for the next encryption.
      Block rb_star = rotate_left(state_.r_b);
      Bytes plain = concat(ByteView(state_.r_a), ByteView(rb_star));
      state_.m5 = cbc_encrypt(ByteView(config_.key), state_.iv_a, plain);
      state_.iv_a = last_block(state_.m5);
      state_.stage = Stage::M6Exchange;
      return with_status(kStatusAdditionalFrame, state_.m5);
    }
    case Stage::M6Exchange: {
      if (response[0] != kStatusOk || response.size() != 1 + crypto::kBlockSize)
        return fail(Stage::M6Exchange, "unexpected m6 reply");
      state_.m6 = Bytes(response.begin() + 1, response.end());
      Block received = to_block(cbc_decrypt(ByteView(config_.key), state_.iv_a, state_.m6));
      state_.iv_a = to_block(state_.m6);
      if (config_.variant == Variant::FlawedLock) {
        // The card decrypted m5.1 against IV = m4, so reconcile before the check.
        state_.r_a_prime = to_block(xor_bytes(ByteView(state_.r_a), ByteView(state_.m4)));
      } else {
        state_.r_a_prime = state_.r_a;
      }
      if (rotate_left(state_.r_a_prime) != received)
        return fail(Stage::M6Exchange, "reader nonce rotation check failed");
      state_.session_key = derive_session_key(ByteView(state_.r_a_prime), ByteView(state_.r_b));
      channel_ = crypto::SecureChannel(*state_.session_key);
      state_.stage = Stage::GetUid;
      return Bytes{kCmdGetCardUid};
    }
    case Stage::GetUid: {
      if (response[0] != kStatusOk || response.size() < 1 + crypto::kBlockSize)
        return fail(Stage::GetUid, "unexpected UID reply");
      state_.m7 = Bytes(response.begin() + 1, response.end());
      Bytes credential;
      try {
        credential = channel_.open(state_.m7);
      } catch (const std::exception& e) {
        return fail(Stage::GetUid, std::string("secure channel: ") + e.what());
      }
      outcome_.received_credential = credential;
      outcome_.completed = true;
      state_.stage = Stage::Done;
      finished_ = true;
      bool authorized = config_.accept_any_credential ||
                        std::find(config_.authorized.begin(), config_.authorized.end(),
                                  credential) != config_.authorized.end();
      outcome_.unlocked = authorized;
      if (!authorized) {
        outcome_.abort_stage = Stage::Authorization;
        outcome_.reason = "credential not authorized";
      }
      return std::nullopt;
    }
    default:
      return fail(state_.stage, "response after completion");
  }
}

// --- LockPicc ---

LockPicc::LockPicc(Config config, sim::Rng& rng) : config_(std::move(config)), rng_(&rng) {
  if (config_.uid.size() != kUidLen) throw RangeError("UID must be 7 bytes");
  credential_ = config_.credential.value_or(config_.uid);
  reset();
}

void LockPicc::reset() {
  Variant variant = state_.variant;
  state_ = AuthState{};
  state_.variant = variant;
  state_.iv_b = Block{};
  state_.stage = Stage::SelectApplication;
}

std::optional<Bytes> LockPicc::fail(Stage stage, const std::string& reason,
                                    std::optional<std::uint8_t> status) {
  state_.aborted = true;
  state_.abort_reason = reason;
  state_.stage = stage;
  if (status) return Bytes{*status};
  return std::nullopt;
}

StaticTagData LockPicc::initial_data() const {
  StaticTagData data;
  data.tech = TagTech::NfcA;
  data.set("NFCID1", config_.uid);
  data.set("SEL_INFO", {0x20});  // ISO-DEP capable
  return data;
}

std::optional<Bytes> LockPicc::respond(const Bytes& command) {
  if (command.empty()) return fail(state_.stage, "empty command");

  // Field re-poll: a select restarts the conversation at any point.
  if (command[0] == kCmdSelectApplication) {
    reset();
    if (command.size() != 1 + kApplicationId.size() ||
        !std::equal(kApplicationId.begin(), kApplicationId.end(), command.begin() + 1))
      return fail(Stage::SelectApplication, "unknown application", kStatusAppNotFound);
    state_.stage = Stage::Authenticate;
    return Bytes{kStatusOk};
  }

  switch (state_.stage) {
    case Stage::Authenticate: {
      if (command[0] != kCmdAuthenticateAes || command.size() != 2)
        return fail(Stage::Authenticate, "expected authenticate command", kStatusIllegalCommand);
      state_.r_b = config_.forced_rb ? *config_.forced_rb : random_block(*rng_);
      state_.iv_b = Block{};
      state_.m4 = cbc_encrypt(ByteView(config_.key), state_.iv_b, ByteView(state_.r_b));
      state_.iv_b = last_block(state_.m4);  // stock DESFire chaining
      state_.stage = Stage::M5Exchange;
      return with_status(kStatusAdditionalFrame, state_.m4);
    }
    case Stage::M5Exchange: {
      if (command[0] != kStatusAdditionalFrame || command.size() != 1 + 2 * crypto::kBlockSize)
        return fail(Stage::M5Exchange, "expected 32-byte authentication frame", kStatusIllegalCommand);
      state_.m5 = Bytes(command.begin() + 1, command.end());
      Bytes plain = cbc_decrypt(ByteView(config_.key), state_.iv_b, state_.m5);
      state_.r_a_prime = to_block(ByteView(plain).subspan(0, crypto::kBlockSize));
      Block rb_star = to_block(ByteView(plain).subspan(crypto::kBlockSize));
      if (rotate_left(state_.r_b) != rb_star)
        return fail(Stage::M5Exchange, "card nonce rotation check failed", kStatusAuthError);
      state_.iv_b = last_block(state_.m5);
      state_.m6 = cbc_encrypt(ByteView(config_.key), state_.iv_b,
                              ByteView(rotate_left(state_.r_a_prime)));
      state_.iv_b = last_block(state_.m6);
      state_.session_key = derive_session_key(ByteView(state_.r_a_prime), ByteView(state_.r_b));
      channel_ = crypto::SecureChannel(*state_.session_key);
      state_.stage = Stage::GetUid;
      return with_status(kStatusOk, state_.m6);
    }
    case Stage::GetUid: {
      if (command != Bytes{kCmdGetCardUid})
        return fail(Stage::GetUid, "expected UID request", kStatusIllegalCommand);
      state_.m7 = channel_.seal(credential_);
      state_.stage = Stage::Done;
      return with_status(kStatusOk, state_.m7);
    }
    default:
      return fail(state_.stage, "command in unexpected state", kStatusIllegalCommand);
  }
}

// --- Cylinder ---

Cylinder::Cylinder(Deployment deployment, Variant variant)
    : deployment_(std::move(deployment)), variant_(variant) {}

LockPcd::Config Cylinder::session_config() const {
  LockPcd::Config cfg;
  cfg.key = deployment_.key;
  cfg.variant = variant_;
  cfg.random_ra = deployment_.mitigations.random_ra;
  cfg.authorized = deployment_.authorized;
  return cfg;
}

bool Cylinder::locked_out(double now_s) const {
  if (!deployment_.mitigations.try_limit) return false;
  int recent = 0;
  for (double t : recent_failures_)
    if (now_s - t <= deployment_.mitigations.try_window_s) ++recent;
  return recent >= deployment_.mitigations.max_tries;
}

void Cylinder::record_result(double now_s, bool unlocked) {
  if (!deployment_.mitigations.try_limit) return;
  if (unlocked) {
    recent_failures_.clear();
    return;
  }
  recent_failures_.push_back(now_s);
  // Forget entries that already fell out of every possible window.
  std::erase_if(recent_failures_, [&](double t) {
    return now_s - t > deployment_.mitigations.try_window_s;
  });
}

DirectRunResult run_direct(LockPcd& pcd, LockPicc& picc, std::int64_t step_ns) {
  DirectRunResult result;
  result.transcript = SessionLog(LogMode::Relay, 0);
  result.transcript.set_initial(picc.initial_data());
  std::int64_t t = 0;
  std::optional<Bytes> cmd = pcd.begin();
  while (cmd) {
    result.transcript.append({*cmd, Direction::PcdToPicc, t});
    t += step_ns;
    std::optional<Bytes> resp = picc.respond(*cmd);
    if (!resp) {
      pcd.abort_no_response("card silent: " + picc.state().abort_reason);
      break;
    }
    result.transcript.append({*resp, Direction::PiccToPcd, t});
    t += step_ns;
    cmd = pcd.step(*resp);
  }
  result.outcome = pcd.outcome();
  result.pcd_state = pcd.state();
  result.picc_state = picc.state();
  return result;
}

}  // namespace nfclab::lock
