#include "nfclab/plugin.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "nfclab/nci.hpp"

namespace nfclab::plugin {

Verdict Verdict::replace(std::vector<Bytes> rs) {
  if (rs.empty()) throw ValidationError("Replace verdict needs at least one payload");
  return {Kind::Replace, {}, std::move(rs)};
}

namespace {

// Runs `payload` through plugins[index..]; returns surviving payloads.
std::vector<Bytes> run_from(std::span<Plugin* const> plugins, std::size_t index, Context& ctx,
                            MessageKind kind, Direction dir, const Bytes& payload) {
  if (index >= plugins.size()) return {payload};
  Verdict v = plugins[index]->on_message(ctx, kind, dir, payload);
  switch (v.kind) {
    case Verdict::Kind::Pass:
      return run_from(plugins, index + 1, ctx, kind, dir, v.payload);
    case Verdict::Kind::Drop:
      return {};
    case Verdict::Kind::Replace: {
      std::vector<Bytes> out;
      for (const Bytes& r : v.replacements) {
        auto sub = run_from(plugins, index + 1, ctx, kind, dir, r);
        out.insert(out.end(), sub.begin(), sub.end());
      }
      return out;
    }
  }
  return {};
}

}  // namespace

Verdict run_pipeline(std::span<Plugin* const> plugins, Context& ctx, MessageKind kind,
                     Direction dir, const Bytes& payload, CrashPolicy policy) {
  std::vector<Bytes> outputs;
  try {
    outputs = run_from(plugins, 0, ctx, kind, dir, payload);
  } catch (const std::exception&) {
    if (policy == CrashPolicy::FailOpen) return Verdict::pass(payload);
    return Verdict::drop();
  }
  if (outputs.empty()) return Verdict::drop();
  if (outputs.size() == 1) return Verdict::pass(std::move(outputs.front()));
  return Verdict::replace(std::move(outputs));
}

Verdict LogPlugin::on_message(Context& ctx, MessageKind kind, Direction dir, const Bytes& payload) {
  auto [it, inserted] = logs_.try_emplace(ctx.session_id(), LogMode::Relay, 0);
  SessionLog& log = it->second;
  if (kind == MessageKind::Initial) {
    log.set_initial(nci::decode_static_tag(payload));
  } else {
    log.append({payload, dir, ctx.now_ns()});
  }
  ++rows_;
  return Verdict::pass(payload);
}

const SessionLog& LogPlugin::session_log(std::uint8_t session) const {
  auto it = logs_.find(session);
  if (it == logs_.end()) throw Error("no log for session " + std::to_string(session));
  return it->second;
}

// --- out-of-process plugin ---

namespace {

constexpr char kHandshake[5] = {'N', 'F', 'C', 'P', 0x01};
constexpr std::uint32_t kMaxReply = 1 << 20;

void write_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::write(fd, data, len);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("plugin pipe write failed: ") + std::strerror(errno));
    }
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

void read_exact(int fd, std::uint8_t* data, std::size_t len, std::int64_t deadline_ms) {
  while (len > 0) {
    pollfd pfd{fd, POLLIN, 0};
    int timeout = static_cast<int>(deadline_ms);
    int pr = ::poll(&pfd, 1, timeout);
    if (pr == 0) throw Error("plugin reply timeout");
    if (pr < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("plugin pipe poll failed: ") + std::strerror(errno));
    }
    ssize_t n = ::read(fd, data, len);
    if (n == 0) throw Error("plugin closed its output stream");
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("plugin pipe read failed: ") + std::strerror(errno));
    }
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

}  // namespace

OopPlugin::OopPlugin(std::string executable) : OopPlugin(std::move(executable), Options()) {}

OopPlugin::OopPlugin(std::string executable, Options opts)
    : exe_(std::move(executable)), opts_(std::move(opts)) {
  auto slash = exe_.find_last_of('/');
  name_ = "oop:" + (slash == std::string::npos ? exe_ : exe_.substr(slash + 1));
  start();
}

OopPlugin::~OopPlugin() { shutdown(); }

void OopPlugin::start() {
  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
    throw Error("pipe() failed for plugin process");
  pid_t pid = ::fork();
  if (pid < 0) throw Error("fork() failed for plugin process");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    std::vector<char*> argv;
    argv.push_back(exe_.data());
    for (auto& a : opts_.args) argv.push_back(a.data());
    argv.push_back(nullptr);
    ::execv(exe_.c_str(), argv.data());
    _exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  to_child_ = to_child[1];
  from_child_ = from_child[0];
  pid_ = pid;

  std::uint8_t hello[5];
  try {
    read_exact(from_child_, hello, sizeof hello, opts_.timeout_ms);
  } catch (const std::exception& e) {
    shutdown();
    throw Error(std::string("plugin handshake failed: ") + e.what());
  }
  if (std::memcmp(hello, kHandshake, sizeof kHandshake) != 0) {
    shutdown();
    throw Error("plugin handshake magic mismatch");
  }
}

void OopPlugin::shutdown() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    ::kill(static_cast<pid_t>(pid_), SIGKILL);
    int status = 0;
    ::waitpid(static_cast<pid_t>(pid_), &status, 0);
    pid_ = -1;
  }
}

Verdict OopPlugin::on_message(Context&, MessageKind kind, Direction dir, const Bytes& payload) {
  if (broken_) throw Error("plugin process is down");
  Bytes req;
  put_u32_be(req, static_cast<std::uint32_t>(2 + payload.size()));
  req.push_back(static_cast<std::uint8_t>(kind));
  req.push_back(direction_code(dir));
  append(req, payload);
  try {
    write_all(to_child_, req.data(), req.size());

    std::uint8_t lenbuf[4];
    read_exact(from_child_, lenbuf, 4, opts_.timeout_ms);
    std::uint32_t len = get_u32_be(ByteView(lenbuf, 4), 0);
    if (len == 0 || len > kMaxReply) throw Error("plugin reply has bad length");
    Bytes reply(len);
    read_exact(from_child_, reply.data(), len, opts_.timeout_ms);

    std::uint8_t verdict = reply[0];
    std::size_t off = 1;
    std::vector<Bytes> payloads;
    while (off < reply.size()) {
      if (off + 4 > reply.size()) throw Error("plugin reply truncated");
      std::uint32_t plen = get_u32_be(reply, off);
      off += 4;
      if (off + plen > reply.size()) throw Error("plugin reply truncated");
      payloads.emplace_back(reply.begin() + off, reply.begin() + off + plen);
      off += plen;
    }
    switch (verdict) {
      case 0:
        if (payloads.size() != 1) throw Error("Pass reply must carry exactly one payload");
        return Verdict::pass(std::move(payloads.front()));
      case 1:
        if (!payloads.empty()) throw Error("Drop reply must carry no payload");
        return Verdict::drop();
      case 2:
        return Verdict::replace(std::move(payloads));
      default:
        throw Error("unknown plugin verdict " + std::to_string(verdict));
    }
  } catch (const std::exception&) {
    broken_ = true;
    shutdown();
    throw;
  }
}

}  // namespace nfclab::plugin
