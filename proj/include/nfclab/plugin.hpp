#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>

#include "nfclab/core.hpp"

namespace nfclab::plugin {

enum class MessageKind : std::uint8_t {
  Initial = 0x01,  // static tag data (USER_0 TLV)
  Apdu = 0x02,
};

/// Outcome of one plugin (or of a whole pipeline run): forward a payload,
/// suppress the message, or substitute one or more payloads.
struct Verdict {
  enum class Kind { Pass, Drop, Replace };
  Kind kind = Kind::Pass;
  Bytes payload;                    // Pass
  std::vector<Bytes> replacements;  // Replace, non-empty

  static Verdict pass(Bytes p) { return {Kind::Pass, std::move(p), {}}; }
  static Verdict drop() { return {Kind::Drop, {}, {}}; }
  static Verdict replace(std::vector<Bytes> rs);

  bool operator==(const Verdict&) const = default;
};

/// Per-invocation services supplied by the host (relay session).
class Context {
 public:
  virtual ~Context() = default;
  virtual std::uint8_t session_id() const = 0;
  virtual int sender_id() const = 0;
  virtual std::int64_t now_ns() const = 0;
  /// Queues a server-originated message for the sending endpoint (used by
  /// plugins that play a protocol role themselves).
  virtual void reply_to_sender(MessageKind kind, Direction dir, const Bytes& payload) = 0;
};

/// Context with no host; replies are collected for inspection.
class NullContext : public Context {
 public:
  std::uint8_t session_id() const override { return 0; }
  int sender_id() const override { return 0; }
  std::int64_t now_ns() const override { return 0; }
  void reply_to_sender(MessageKind kind, Direction dir, const Bytes& payload) override {
    replies.push_back({kind, dir, payload});
  }
  struct Reply {
    MessageKind kind;
    Direction dir;
    Bytes payload;
  };
  std::vector<Reply> replies;
};

class Plugin {
 public:
  virtual ~Plugin() = default;
  virtual std::string_view name() const = 0;
  virtual Verdict on_message(Context& ctx, MessageKind kind, Direction dir, const Bytes& payload) = 0;
};

enum class CrashPolicy { FailClosed, FailOpen };

/// Applies plugins left to right. Drop short-circuits; every Replace payload
/// continues through the remaining plugins. A throwing plugin triggers the
/// crash policy: FailClosed drops the message, FailOpen forwards the
/// pipeline's original input.
Verdict run_pipeline(std::span<Plugin* const> plugins, Context& ctx, MessageKind kind,
                     Direction dir, const Bytes& payload,
                     CrashPolicy policy = CrashPolicy::FailClosed);

// --- stock plugins ---

class IdentityPlugin : public Plugin {
 public:
  std::string_view name() const override { return "identity"; }
  Verdict on_message(Context&, MessageKind, Direction, const Bytes& payload) override {
    return Verdict::pass(payload);
  }
};

class DropAllPlugin : public Plugin {
 public:
  std::string_view name() const override { return "drop-all"; }
  Verdict on_message(Context&, MessageKind, Direction, const Bytes&) override {
    return Verdict::drop();
  }
};

class XorPlugin : public Plugin {
 public:
  explicit XorPlugin(std::uint8_t mask = 0xFF) : mask_(mask) {}
  std::string_view name() const override { return "xor"; }
  Verdict on_message(Context&, MessageKind, Direction, const Bytes& payload) override {
    Bytes out = payload;
    for (auto& b : out) b ^= mask_;
    return Verdict::pass(std::move(out));
  }

 private:
  std::uint8_t mask_;
};

/// Pass-through that records traffic per session; Initial records become the
/// log's static tag data, everything else appends as APDUs.
class LogPlugin : public Plugin {
 public:
  std::string_view name() const override { return "log"; }
  Verdict on_message(Context& ctx, MessageKind kind, Direction dir, const Bytes& payload) override;

  const SessionLog& session_log(std::uint8_t session) const;
  std::size_t total_rows() const { return rows_; }

 private:
  std::map<std::uint8_t, SessionLog> logs_;
  std::size_t rows_ = 0;
};

/// Bridge to an external executable speaking the framed verdict protocol on
/// its standard streams. Crashes, timeouts and malformed replies surface as
/// exceptions, which the pipeline maps through the crash policy.
class OopPlugin : public Plugin {
 public:
  struct Options {
    std::vector<std::string> args;
    std::int64_t timeout_ms = 2000;
  };

  explicit OopPlugin(std::string executable);
  OopPlugin(std::string executable, Options opts);
  ~OopPlugin() override;
  OopPlugin(const OopPlugin&) = delete;
  OopPlugin& operator=(const OopPlugin&) = delete;

  std::string_view name() const override { return name_; }
  Verdict on_message(Context&, MessageKind kind, Direction dir, const Bytes& payload) override;

 private:
  void start();
  void shutdown();
  std::string exe_;
  std::string name_;
  Options opts_;
  int to_child_ = -1;
  int from_child_ = -1;
  long pid_ = -1;
  bool broken_ = false;
};

}  // namespace nfclab::plugin
