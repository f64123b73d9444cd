// nfclab: a hardware-free NFC relay/replay/clone laboratory.

#include <csignal>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nfclab/attacks.hpp"
#include "nfclab/bench.hpp"
#include "nfclab/lock_plugins.hpp"
#include "nfclab/pcapng.hpp"
#include "nfclab/relay_server.hpp"
#include "nfclab/tcp_port.hpp"

using json = nlohmann::json;
using namespace nfclab;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;

// Parameter-id registry in effect (see --registry).
nci::Registry g_registry_storage = nci::Registry::defaults();
const nci::Registry& active_registry() { return g_registry_storage; }

void handle_sigint(int) { g_interrupted = 1; }

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, ByteView data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

// --- JSON log store ---

json static_tag_to_json(const StaticTagData& data) {
  json fields = json::array();
  for (const auto& [name, value] : data.fields) fields.push_back({name, to_hex(value)});
  return {{"tech", tech_name(data.tech)}, {"fields", fields}};
}

StaticTagData static_tag_from_json(const json& j) {
  StaticTagData data;
  std::string tech = j.at("tech");
  data.tech = tech == "A" ? TagTech::NfcA : tech == "B" ? TagTech::NfcB : TagTech::NfcF;
  for (const auto& f : j.at("fields")) data.set(f.at(0), from_hex(f.at(1)));
  return data;
}

json log_to_json(const SessionLog& log) {
  json j;
  j["mode"] = log_mode_name(log.mode());
  j["created_us"] = log.created_us();
  j["initial"] = log.initial() ? static_tag_to_json(*log.initial()) : json(nullptr);
  json entries = json::array();
  for (const Apdu& a : log.entries())
    entries.push_back({{"t_ns", a.timestamp_ns},
                       {"dir", direction_name(a.direction)},
                       {"data", to_hex(a.payload)}});
  j["entries"] = entries;
  return j;
}

SessionLog log_from_json(const json& j) {
  LogMode mode = LogMode::Imported;
  std::string m = j.value("mode", "imported");
  if (m == "relay") mode = LogMode::Relay;
  else if (m == "replay") mode = LogMode::Replay;
  else if (m == "clone") mode = LogMode::Clone;
  SessionLog log(mode, j.value("created_us", 0LL));
  if (j.contains("initial") && !j.at("initial").is_null())
    log.set_initial(static_tag_from_json(j.at("initial")));
  for (const auto& e : j.at("entries")) {
    std::string dir = e.at("dir");
    log.append({from_hex(e.at("data")),
                dir == "pcd>picc" ? Direction::PcdToPicc : Direction::PiccToPcd,
                e.at("t_ns").get<std::int64_t>()});
  }
  return log;
}

/// Accepts either a pcapng capture or the JSON log format.
SessionLog load_log(const std::string& path) {
  Bytes data = read_file(path);
  if (data.size() >= 4 && get_u32_be(data, 0) == 0x0A0D0D0A)
    return pcapng::import_log(data, active_registry());
  return log_from_json(json::parse(std::string(data.begin(), data.end())));
}

// --- plugin construction ---

struct PluginSet {
  std::vector<std::unique_ptr<plugin::Plugin>> owned;
  std::vector<plugin::Plugin*> pipeline;
  plugin::LogPlugin* log = nullptr;
  plugin::WalkbyPcdPlugin* walkby = nullptr;
  plugin::BruteforcePlugin* bruteforce = nullptr;
};

std::string plugin_opt(const std::map<std::string, std::string>& opts, const std::string& plugin,
                       const std::string& key, const std::string& fallback) {
  auto it = opts.find(plugin + "." + key);
  return it == opts.end() ? fallback : it->second;
}

PluginSet build_plugins(const std::vector<std::string>& names,
                        const std::map<std::string, std::string>& opts) {
  PluginSet set;
  for (const std::string& name : names) {
    std::unique_ptr<plugin::Plugin> p;
    if (name == "log") {
      auto lp = std::make_unique<plugin::LogPlugin>();
      set.log = lp.get();
      p = std::move(lp);
    } else if (name == "identity") {
      p = std::make_unique<plugin::IdentityPlugin>();
    } else if (name == "drop-all") {
      p = std::make_unique<plugin::DropAllPlugin>();
    } else if (name == "xor") {
      auto mask = static_cast<std::uint8_t>(
          std::stoul(plugin_opt(opts, "xor", "mask", "ff"), nullptr, 16));
      p = std::make_unique<plugin::XorPlugin>(mask);
    } else if (name == "walkby-pcd") {
      crypto::Block key = crypto::to_block(
          from_hex(plugin_opt(opts, "walkby-pcd", "key", to_hex(lock::default_key()))));
      auto wp = std::make_unique<plugin::WalkbyPcdPlugin>(key);
      set.walkby = wp.get();
      p = std::move(wp);
    } else if (name == "bruteforce") {
      plugin::BruteforcePlugin::Config cfg;
      cfg.key = crypto::to_block(
          from_hex(plugin_opt(opts, "bruteforce", "key", to_hex(lock::default_key()))));
      std::string start = plugin_opt(opts, "bruteforce", "start_uid", "");
      if (!start.empty()) cfg.start_uid = from_hex(start);
      cfg.stride = std::stoull(plugin_opt(opts, "bruteforce", "stride", "1"));
      cfg.rate_per_s = std::stod(plugin_opt(opts, "bruteforce", "rate", "3"));
      auto bp = std::make_unique<plugin::BruteforcePlugin>(cfg);
      set.bruteforce = bp.get();
      p = std::move(bp);
    } else if (name.starts_with("oop:")) {
      p = std::make_unique<plugin::OopPlugin>(name.substr(4));
    } else {
      throw Error("unknown plugin '" + name + "'");
    }
    set.pipeline.push_back(p.get());
    set.owned.push_back(std::move(p));
  }
  return set;
}

std::pair<std::string, std::uint16_t> split_host_port(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw Error("expected host:port, got " + addr);
  return {addr.substr(0, colon),
          static_cast<std::uint16_t>(std::stoul(addr.substr(colon + 1)))};
}

std::uint64_t default_seed() {
  const char* env = std::getenv("NFCLAB_SEED");
  return env ? std::stoull(env) : 1;
}

// --- subcommands ---

int cmd_server(const std::string& listen, const std::vector<std::string>& plugin_names,
               const std::map<std::string, std::string>& plugin_opts, const std::string& log_dir,
               const std::string& crash_policy) {
  PluginSet plugins = build_plugins(plugin_names, plugin_opts);
  auto [host, port] = split_host_port(listen);
  relay::RelayServer::Options opts;
  opts.host = host;
  opts.port = port;
  opts.pipeline = plugins.pipeline;
  opts.crash_policy = crash_policy == "open" ? plugin::CrashPolicy::FailOpen
                                             : plugin::CrashPolicy::FailClosed;
  opts.log_dir = log_dir;
  relay::RelayServer server(opts);
  server.start();
  std::cout << "listening on " << host << ":" << server.port() << std::endl;

  std::signal(SIGINT, handle_sigint);
  std::signal(SIGTERM, handle_sigint);
  while (!g_interrupted) {
    struct timespec ts{0, 100'000'000};
    nanosleep(&ts, nullptr);
  }
  server.stop();
  if (plugins.walkby)
    for (const Bytes& uid : plugins.walkby->extracted_credentials())
      std::cout << "walkby extracted credential " << to_hex(uid) << std::endl;
  if (plugins.bruteforce)
    std::cout << "bruteforce attempts " << plugins.bruteforce->attempts() << ", last guess "
              << to_hex(plugins.bruteforce->current_guess()) << std::endl;
  return 0;
}

std::unique_ptr<endpoint::CardModel> build_card(const std::string& spec, const Bytes& uid,
                                                const crypto::Block& key, std::uint64_t seed) {
  static sim::Rng rng(seed);
  if (spec == "lock")
    return std::make_unique<endpoint::LockTransponderCard>(
        lock::LockPicc({key, uid, std::nullopt, std::nullopt}, rng));
  if (spec.starts_with("scripted:")) {
    json j = json::parse(std::string(read_file(spec.substr(9)).begin(),
                                     read_file(spec.substr(9)).end()));
    auto card = std::make_unique<endpoint::ScriptedCard>();
    if (j.contains("initial") && !j.at("initial").is_null())
      card->set_initial(static_tag_from_json(j.at("initial")));
    for (const auto& row : j.at("table"))
      card->add(from_hex(row.at("request")), from_hex(row.at("response")));
    return card;
  }
  if (spec.starts_with("log:")) {
    SessionLog log = load_log(spec.substr(4));
    return std::make_unique<endpoint::ReplayCard>(
        log, endpoint::ReplaySelector{endpoint::ReplayMode::DataBased, Direction::PiccToPcd, 0});
  }
  throw Error("unknown card spec '" + spec + "'");
}

int cmd_endpoint(const std::string& role, const std::string& server_addr, int session,
                 const std::string& card_spec, const std::string& uid_hex,
                 const std::string& key_hex, const std::string& variant, double deadline_ms,
                 const std::string& record_path, std::uint64_t seed) {
  auto [host, port] = split_host_port(server_addr);
  endpoint::TcpClientPort tcp(host, port);
  crypto::Block key = crypto::to_block(from_hex(key_hex));
  Bytes uid = from_hex(uid_hex);

  if (role == "reader") {
    auto card = build_card(card_spec, uid, key, seed);
    endpoint::ReaderEndpoint reader(tcp, *card);
    tcp.set_handler([&](const relay::WireMessage& m) { reader.on_message(m); });
    tcp.join(static_cast<std::uint8_t>(session), relay::Role::Reader);
    reader.start();
    std::signal(SIGINT, handle_sigint);
    std::signal(SIGTERM, handle_sigint);
    tcp.run([&] { return g_interrupted != 0 || reader.errored(); });
    if (!record_path.empty()) write_file(record_path, pcapng::export_log(reader.log()));
    std::cout << log_to_json(reader.log()).dump(2) << std::endl;
    return reader.errored() ? 1 : 0;
  }

  if (role == "tag") {
    std::unique_ptr<endpoint::PcdDevice> device;
    sim::Rng rng(seed);
    lock::Cylinder cylinder({key, {uid}, {}},
                            variant == "correct" ? lock::Variant::CorrectDesfire
                                                 : lock::Variant::FlawedLock);
    if (card_spec == "lock") {
      device = std::make_unique<endpoint::LockPcdDevice>(
          lock::LockPcd(cylinder.session_config(), rng));
    } else {
      throw Error("tag role supports the local device 'lock'");
    }
    endpoint::TagEndpoint tag(tcp, *device,
                              {std::nullopt, sim::ms_to_ns(deadline_ms)});
    tcp.set_handler([&](const relay::WireMessage& m) { tag.on_message(m); });
    tcp.join(static_cast<std::uint8_t>(session), relay::Role::Tag);
    tag.start();
    std::signal(SIGINT, handle_sigint);
    std::signal(SIGTERM, handle_sigint);
    tcp.run([&] { return g_interrupted != 0 || tag.finished(); });
    if (!record_path.empty()) write_file(record_path, pcapng::export_log(tag.log()));

    auto* lockdev = dynamic_cast<endpoint::LockPcdDevice*>(device.get());
    json out;
    out["finished"] = tag.finished();
    out["timeout_events"] = tag.timeout_events().size();
    if (lockdev) {
      out["unlocked"] = lockdev->pcd().outcome().unlocked;
      out["detail"] = lockdev->pcd().outcome().reason;
    }
    out["log"] = log_to_json(tag.log());
    std::cout << out.dump(2) << std::endl;
    return lockdev && !lockdev->pcd().outcome().unlocked ? 1 : 0;
  }
  throw Error("role must be reader or tag");
}

int cmd_replay(const std::string& log_path, const std::string& side, const std::string& mode,
               const std::string& server_addr, int session, const std::string& record_path) {
  SessionLog log = load_log(log_path);
  endpoint::ReplaySelector sel;
  sel.mode = mode == "data" ? endpoint::ReplayMode::DataBased : endpoint::ReplayMode::IndexBased;
  sel.side = side == "reader" ? Direction::PcdToPicc : Direction::PiccToPcd;

  if (!server_addr.empty()) {
    // Advanced replay: serve the log through the relay as a reader endpoint.
    auto [host, port] = split_host_port(server_addr);
    endpoint::TcpClientPort tcp(host, port);
    endpoint::ReplayCard card(log, sel);
    endpoint::ReaderEndpoint reader(tcp, card);
    tcp.set_handler([&](const relay::WireMessage& m) { reader.on_message(m); });
    tcp.join(static_cast<std::uint8_t>(session), relay::Role::Reader);
    reader.start();
    std::signal(SIGINT, handle_sigint);
    std::signal(SIGTERM, handle_sigint);
    tcp.run([&] { return g_interrupted != 0; });
    if (!record_path.empty()) write_file(record_path, pcapng::export_log(card.engine().recording()));
    std::cerr << "replayed " << card.engine().recording().size() << " records, "
              << card.engine().divergences() << " divergences" << std::endl;
    return 0;
  }

  // Local replay: hex requests on stdin, one response (or '-') per line.
  endpoint::ReplayEngine engine(log, sel);
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    std::optional<Bytes> resp = engine.respond(from_hex(line));
    std::cout << (resp ? to_hex(*resp) : std::string("-")) << std::endl;
  }
  if (!record_path.empty()) write_file(record_path, pcapng::export_log(engine.recording()));
  std::cerr << "replayed " << engine.recording().size() << " records, " << engine.divergences()
            << " divergences" << std::endl;
  return 0;
}

int cmd_clone(const std::string& tech, const std::vector<std::string>& fields,
              const std::vector<std::string>& system_configs,
              const std::vector<std::string>& apdus) {
  StaticTagData data;
  data.tech = tech == "a" ? TagTech::NfcA : tech == "b" ? TagTech::NfcB : TagTech::NfcF;
  for (const std::string& f : fields) {
    auto eq = f.find('=');
    if (eq == std::string::npos) throw Error("expected NAME=HEX, got " + f);
    data.set(f.substr(0, eq), from_hex(f.substr(eq + 1)));
  }
  endpoint::CloneSession clone(data);

  json out;
  out["identity_stream"] = to_hex(nci::encode_stream(clone.identity(), active_registry()));
  json forwarded = json::array();
  for (const std::string& sc : system_configs)
    forwarded.push_back(to_hex(nci::encode_stream(
        clone.apply_system_config(nci::decode_stream(from_hex(sc), active_registry())),
        active_registry())));
  out["forwarded"] = forwarded;
  std::int64_t t = 0;
  for (const std::string& a : apdus) clone.on_apdu(from_hex(a), t++);
  out["unanswered_apdus"] = clone.unanswered().size();
  out["restore_stream"] = to_hex(nci::encode_stream(clone.close(), active_registry()));
  std::cout << out.dump(2) << std::endl;
  return 0;
}

int cmd_export(const std::string& log_path, const std::string& out_path) {
  SessionLog log = load_log(log_path);
  write_file(out_path, pcapng::export_log(log, active_registry()));
  std::cout << "wrote " << out_path << " (" << log.size() << " packets"
            << (log.initial() ? " + initial data" : "") << ")" << std::endl;
  return 0;
}

int cmd_import(const std::string& in_path, const std::string& out_path) {
  SessionLog log = pcapng::import_log(read_file(in_path), active_registry());
  json j = log_to_json(log);
  if (!out_path.empty()) {
    std::string text = j.dump(2);
    write_file(out_path, ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  } else {
    std::cout << j.dump(2) << std::endl;
  }
  return 0;
}

lock::Mitigations parse_mitigations(const std::string& csv) {
  lock::Mitigations m;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "random-ra") m.random_ra = true;
    else if (item == "per-deploy-key") m.per_deployment_key = true;
    else if (item == "random-token") m.random_token = true;
    else if (item == "try-limit") m.try_limit = true;
    else throw Error("unknown mitigation '" + item + "'");
  }
  return m;
}

int cmd_lockdemo(const std::string& attack, const std::string& variant_name,
                 const std::string& mitigations_csv, std::uint64_t seed,
                 const std::string& pcap_path, const std::string& uid_hex, double one_way_ms,
                 std::uint64_t known_serial, std::uint64_t offset, double rate,
                 std::uint64_t stride, std::uint64_t max_attempts) {
  lock::Variant variant = variant_name == "correct" ? lock::Variant::CorrectDesfire
                                                    : lock::Variant::FlawedLock;
  lock::Mitigations mit = parse_mitigations(mitigations_csv);

  lock::Deployment deployment;
  deployment.mitigations = mit;
  deployment.key = mit.per_deployment_key
                       ? crypto::to_block(from_hex("A0A1A2A3A4A5A6A7A8A9AAABACADAEAF"))
                       : lock::default_key();
  Bytes uid = from_hex(uid_hex);
  sim::Rng token_rng(seed ^ 0x746F6B656E);
  Bytes credential = uid;
  if (mit.random_token) {
    credential.resize(lock::kUidLen);
    for (auto& b : credential) b = static_cast<std::uint8_t>(token_rng());
  }
  deployment.authorized = {credential};

  json out;
  out["attack"] = attack;
  out["variant"] = variant_name;
  out["seed"] = seed;
  bool success = false;
  SessionLog transcript;

  if (attack == "honest") {
    sim::Rng a(seed), b(seed + 1);
    lock::Cylinder cylinder(deployment, variant);
    lock::LockPcd pcd(cylinder.session_config(), a);
    lock::LockPicc picc({deployment.key, uid, credential, std::nullopt}, b);
    lock::DirectRunResult run = lock::run_direct(pcd, picc);
    success = run.outcome.unlocked;
    transcript = run.transcript;
    out["unlocked"] = run.outcome.unlocked;
    out["detail"] = run.outcome.unlocked ? "unlocked" : run.outcome.reason;
  } else if (attack == "relay") {
    lock::RelayAttackOutcome o =
        lock::attack_relay(deployment, uid, variant, one_way_ms / 1e3, seed);
    success = o.unlocked;
    transcript = o.transcript;
    out["unlocked"] = o.unlocked;
    out["elapsed_s"] = o.elapsed_s;
    out["detail"] = o.detail;
  } else if (attack == "replay") {
    sim::Rng a(seed + 10), b(seed + 11);
    lock::Cylinder cylinder(deployment, lock::Variant::FlawedLock);
    lock::LockPcd pcd(cylinder.session_config(), a);
    lock::LockPicc picc({deployment.key, uid, credential, std::nullopt}, b);
    lock::DirectRunResult honest = lock::run_direct(pcd, picc);
    if (!honest.outcome.unlocked) throw Error("could not record an honest run to replay");
    lock::ReplayAttackOutcome o = lock::attack_replay(honest.transcript, deployment, variant, seed);
    success = o.unlocked;
    transcript = o.replay_log;
    out["unlocked"] = o.unlocked;
    out["abort_stage"] = lock::stage_name(o.abort_stage);
    out["divergences"] = o.divergences;
  } else if (attack == "walkby") {
    sim::Rng b(seed + 21);
    lock::LockPicc victim({deployment.key, uid, credential, std::nullopt}, b);
    lock::WalkbyOutcome o = lock::attack_walkby(lock::default_key(), victim, seed);
    success = o.succeeded;
    out["succeeded"] = o.succeeded;
    out["credential"] = to_hex(o.credential);
    if (!o.succeeded) out["failure_stage"] = lock::stage_name(o.failure_stage);
  } else if (attack == "bruteforce") {
    lock::Deployment bf = deployment;
    bf.authorized = {lock::uid_from_serial(known_serial + offset)};
    if (mit.random_token) bf.authorized = {credential};
    lock::Cylinder cylinder(bf, variant);
    lock::BruteforceParams params;
    params.known_uid = lock::uid_from_serial(known_serial);
    params.stride = stride;
    params.rate_per_s = rate;
    params.max_attempts = max_attempts;
    params.adversary_key = deployment.key;
    params.seed = seed;
    lock::BruteforceOutcome o = lock::attack_bruteforce(cylinder, params);
    success = o.found_uid.has_value();
    out["found_uid"] = o.found_uid ? to_hex(*o.found_uid) : "";
    out["attempts"] = o.attempts;
    out["simulated_elapsed_s"] = o.simulated_elapsed_s;
    out["locked_out"] = o.locked_out;
  } else {
    throw Error("unknown lockdemo mode '" + attack + "'");
  }

  if (!pcap_path.empty()) write_file(pcap_path, pcapng::export_log(transcript));
  out["success"] = success;
  std::cout << out.dump(2) << std::endl;
  return success ? 0 : 1;
}

int cmd_bench(const std::string& profile_name, int runs, const std::string& out_path,
              std::uint64_t seed, const std::string& policy_spec, bool wallclock) {
  endpoint::TimeoutPolicy policy;
  if (policy_spec.starts_with("fwt:")) {
    policy = endpoint::TimeoutPolicy::fwt_retransmit(FwtIndex(std::stoi(policy_spec.substr(4))));
  } else if (policy_spec.starts_with("mandatory:")) {
    policy = endpoint::TimeoutPolicy::mandatory(std::stod(policy_spec.substr(10)));
  } else if (policy_spec != "none") {
    throw Error("policy must be none, fwt:I or mandatory:SECONDS");
  }

  std::vector<bench::LatencySample> samples;
  if (wallclock) {
    samples = bench::run_benchmark_wallclock(runs);
  } else {
    bench::LinkProfile profile = bench::LinkProfile::standard(profile_name);
    samples = bench::run_benchmark(profile, runs, seed, policy);
  }
  std::string csv = bench::to_csv(profile_name, samples);
  if (!out_path.empty()) {
    write_file(out_path, ByteView(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
  } else {
    std::cout << csv;
  }

  auto summary = bench::summarize(samples);
  json jsummary = json::array();
  for (const auto& s : summary) {
    json stats = {{"median_ms", s.stats.median * 1e3},
                  {"q1_ms", s.stats.q1 * 1e3},
                  {"q3_ms", s.stats.q3 * 1e3},
                  {"whisker_low_ms", s.stats.whisker_low * 1e3},
                  {"whisker_high_ms", s.stats.whisker_high * 1e3},
                  {"outliers", s.stats.outliers.size()}};
    jsummary.push_back({{"profile", profile_name},
                        {"command", bench::command_name(s.command)},
                        {"stats", stats},
                        {"fwt_class", s.fwt.exceeds ? json(">11") : json(s.fwt.index)}});
  }
  json out = {{"profile", profile_name},
              {"runs", runs},
              {"seed", seed},
              {"summary", jsummary}};
  auto totals = bench::sequence_totals(samples);
  if (totals.size() >= 4) {
    auto tstats = bench::box_stats(totals);
    out["sequence_total_median_ms"] = tstats.median * 1e3;
  }
  std::cout << out.dump(2) << std::endl;

  if (!out_path.empty()) {
    std::string dat = bench::whisker_dat(summary);
    std::string dat_path = out_path + ".box.dat";
    write_file(dat_path, ByteView(reinterpret_cast<const std::uint8_t*>(dat.data()), dat.size()));
    std::string gp = bench::gnuplot_script(dat_path, profile_name + " latency");
    write_file(out_path + ".gp",
               ByteView(reinterpret_cast<const std::uint8_t*>(gp.data()), gp.size()));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nfclab: NFC relay/replay/clone laboratory"};
  app.require_subcommand(1);
  std::string registry_path;
  app.add_option("--registry", registry_path,
                 "NCI parameter-id registry file (SYMBOL=0xNN per line)");

  // server
  auto* server = app.add_subcommand("server", "run the relay server");
  std::string listen = "127.0.0.1:5566";
  std::vector<std::string> plugin_names;
  std::vector<std::string> plugin_opt_list;
  std::string log_dir, crash_policy = "closed";
  server->add_option("--listen", listen, "host:port to bind (port 0 = ephemeral)");
  server->add_option("--plugins", plugin_names, "pipeline plugins, in invocation order")
      ->delimiter(',');
  server->add_option("--plugin-opt", plugin_opt_list, "plugin option name.key=value");
  server->add_option("--log-dir", log_dir, "directory for per-session pcapng dumps");
  server->add_option("--crash-policy", crash_policy, "closed|open");

  // endpoint
  auto* ep = app.add_subcommand("endpoint", "run a reader or tag endpoint");
  std::string role, server_addr = "127.0.0.1:5566", card_spec = "lock";
  std::string uid_hex = "04AABBCCDDEE01";
  std::string key_hex = to_hex(lock::default_key());
  std::string variant = "flawed", record_path;
  int session = 1;
  double deadline_ms = 5000;
  std::uint64_t seed = default_seed();
  ep->add_option("--role", role, "reader|tag")->required();
  ep->add_option("--server", server_addr, "relay server host:port");
  ep->add_option("--session", session, "session id (0-255)");
  ep->add_option("--card", card_spec, "reader: lock|scripted:FILE|log:FILE; tag: lock");
  ep->add_option("--uid", uid_hex, "transponder UID (hex, 7 bytes)");
  ep->add_option("--key", key_hex, "AES key (hex, 16 bytes)");
  ep->add_option("--variant", variant, "flawed|correct (tag role cylinder)");
  ep->add_option("--deadline-ms", deadline_ms, "endpoint response deadline");
  ep->add_option("--record", record_path, "write the endpoint log as pcapng");
  ep->add_option("--seed", seed, "RNG seed");

  // replay
  auto* rp = app.add_subcommand("replay", "replay a recorded log");
  std::string rp_log, rp_side = "tag", rp_mode = "index", rp_server, rp_record;
  int rp_session = 1;
  rp->add_option("--log", rp_log, "log file (pcapng or json)")->required();
  rp->add_option("--side", rp_side, "tag|reader: which side of the log to replay");
  rp->add_option("--mode", rp_mode, "index|data");
  rp->add_option("--server", rp_server, "advanced replay: route through host:port");
  rp->add_option("--session", rp_session, "session id for advanced replay");
  rp->add_option("--record", rp_record, "write the replay recording as pcapng");

  // clone
  auto* cl = app.add_subcommand("clone", "emulate static tag data");
  std::string cl_tech = "a";
  std::vector<std::string> cl_fields, cl_sysconfigs, cl_apdus;
  cl->add_option("--tech", cl_tech, "a|b|f");
  cl->add_option("--field", cl_fields, "NAME=HEX (e.g. NFCID1=04AABBCCDDEEFF)");
  cl->add_option("--system-config", cl_sysconfigs, "hex config stream to merge against");
  cl->add_option("--apdu", cl_apdus, "hex APDU directed at the clone");

  // export / import
  auto* ex = app.add_subcommand("export", "convert a log to pcapng");
  std::string ex_log, ex_out;
  ex->add_option("--log", ex_log, "log file (json or pcapng)")->required();
  ex->add_option("--out", ex_out, "output pcapng path")->required();

  auto* im = app.add_subcommand("import", "read a pcapng capture");
  std::string im_in, im_out;
  im->add_option("--in", im_in, "pcapng file")->required();
  im->add_option("--out", im_out, "write the log as json (default: stdout)");

  // lockdemo
  auto* ld = app.add_subcommand("lockdemo", "cylinder lock case study");
  std::string ld_attack, ld_variant = "flawed", ld_mit, ld_pcap;
  std::string ld_uid = "04AABBCCDDEE01";
  std::uint64_t ld_seed = default_seed(), ld_known = 100000, ld_offset = 3596, ld_stride = 1,
                ld_max = 1 << 20;
  double ld_one_way_ms = 360.0, ld_rate = 3.0;
  ld->add_option("mode", ld_attack, "honest|relay|replay|walkby|bruteforce")->required();
  ld->add_option("--variant", ld_variant, "flawed|correct");
  ld->add_option("--mitigations", ld_mit,
                 "comma list: random-ra,per-deploy-key,random-token,try-limit");
  ld->add_option("--seed", ld_seed, "RNG seed");
  ld->add_option("--pcap", ld_pcap, "write the transcript as pcapng");
  ld->add_option("--uid", ld_uid, "authorized transponder UID (hex)");
  ld->add_option("--one-way-ms", ld_one_way_ms, "relay: one-way delay in ms");
  ld->add_option("--known-serial", ld_known, "bruteforce: adversary's own serial");
  ld->add_option("--offset", ld_offset, "bruteforce: target offset from known serial");
  ld->add_option("--rate", ld_rate, "bruteforce: attempts per second");
  ld->add_option("--stride", ld_stride, "bruteforce: serial stride");
  ld->add_option("--max-attempts", ld_max, "bruteforce: attempt budget");

  // bench
  auto* bn = app.add_subcommand("bench", "latency benchmark");
  std::string bn_profile = "TAG", bn_out, bn_policy = "none";
  int bn_runs = 20;
  bool bn_wallclock = false;
  std::uint64_t bn_seed = default_seed();
  bn->add_option("--profile", bn_profile, "TAG|RP|BT|BW|WH|WA");
  bn->add_option("--runs", bn_runs, "repetitions of the 4-command sequence");
  bn->add_option("--out", bn_out, "CSV output path (rows: profile,command,run,latency_us)");
  bn->add_option("--seed", bn_seed, "RNG seed (or env NFCLAB_SEED)");
  bn->add_option("--policy", bn_policy, "none|fwt:I|mandatory:SECONDS");
  bn->add_flag("--wallclock", bn_wallclock,
               "measure a loopback TCP relay on the real clock instead of the simulation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!registry_path.empty()) g_registry_storage = nci::Registry::from_file(registry_path);
    if (*server) {
      std::map<std::string, std::string> opts;
      for (const std::string& kv : plugin_opt_list) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error("expected name.key=value, got " + kv);
        opts[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      return cmd_server(listen, plugin_names, opts, log_dir, crash_policy);
    }
    if (*ep)
      return cmd_endpoint(role, server_addr, session, card_spec, uid_hex, key_hex, variant,
                          deadline_ms, record_path, seed);
    if (*rp) return cmd_replay(rp_log, rp_side, rp_mode, rp_server, rp_session, rp_record);
    if (*cl) return cmd_clone(cl_tech, cl_fields, cl_sysconfigs, cl_apdus);
    if (*ex) return cmd_export(ex_log, ex_out);
    if (*im) return cmd_import(im_in, im_out);
    if (*ld)
      return cmd_lockdemo(ld_attack, ld_variant, ld_mit, ld_seed, ld_pcap, ld_uid, ld_one_way_ms,
                          ld_known, ld_offset, ld_rate, ld_stride, ld_max);
    if (*bn) return cmd_bench(bn_profile, bn_runs, bn_out, bn_seed, bn_policy, bn_wallclock);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
