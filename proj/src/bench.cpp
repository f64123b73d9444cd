#include "nfclab/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "nfclab/relay_server.hpp"
#include "nfclab/tcp_port.hpp"

namespace nfclab::bench {

std::string command_name(BenchCommand c) {
  switch (c) {
    case BenchCommand::SelectFile: return "select_file_a4";
    case BenchCommand::SelectApplication: return "select_application_5a";
    case BenchCommand::GetFileSettings: return "get_file_settings_f5";
    default: return "get_value_6c";
  }
}

Bytes command_apdu(BenchCommand c) {
  switch (c) {
    case BenchCommand::SelectFile:
      // ISO SELECT of the DESFire application AID.
      return from_hex("00A4040007D276000085010000");
    case BenchCommand::SelectApplication:
      return {0x5A, 0x01, 0x00, 0x00};
    case BenchCommand::GetFileSettings:
      return {0xF5, 0x01};
    default:
      return {0x6C, 0x01};
  }
}

Bytes command_response(BenchCommand c) {
  switch (c) {
    case BenchCommand::SelectFile: return {0x90, 0x00};
    case BenchCommand::SelectApplication: return {0x00};
    case BenchCommand::GetFileSettings: return {0x00, 0x02, 0x00, 0x11, 0x00, 0x00, 0x10, 0x00};
    default: return {0x00, 0x64, 0x00, 0x00, 0x00};
  }
}

endpoint::ScriptedCard make_bench_card(double processing_s) {
  endpoint::ScriptedCard card;
  for (BenchCommand c : kCommandSequence) card.add(command_apdu(c), command_response(c));
  StaticTagData data;
  data.tech = TagTech::NfcA;
  data.set("NFCID1", from_hex("04D1E2F3A4B5C6"));
  data.set("SEL_INFO", {0x20});
  card.set_initial(data);
  card.set_processing_ns(sim::seconds_to_ns(processing_s));
  return card;
}

LinkProfile LinkProfile::standard(const std::string& name) {
  LinkProfile p;
  p.name = name;
  if (name == "TAG") {
    p.processing_s = 0.005;
  } else if (name == "RP") {
    p.replay_source = true;
    p.processing_s = 0.003;  // no card logic, answers straight from the log
  } else if (name == "BT") {
    p.uses_server = true;
    p.hop_delay = sim::DelayModel::normal(0.010, 0.001);
  } else if (name == "BW") {
    p.uses_server = true;
    p.hop_delay = sim::DelayModel::normal(0.018, 0.004);
  } else if (name == "WH") {
    p.uses_server = true;
    p.hop_delay = sim::DelayModel::normal(0.025, 0.008);
  } else if (name == "WA") {
    p.uses_server = true;
    p.hop_delay = sim::DelayModel::normal(0.030, 0.012);
  } else {
    throw RangeError("unknown profile " + name);
  }
  return p;
}

const std::vector<std::string>& LinkProfile::standard_names() {
  static const std::vector<std::string> names{"TAG", "RP", "BT", "BW", "WH", "WA"};
  return names;
}

namespace {

double interpolated_quantile(const std::vector<double>& sorted, double p) {
  double pos = p * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

BoxStats box_stats(std::vector<double> samples) {
  if (samples.size() < 4)
    throw RangeError("box stats need at least 4 samples, got " + std::to_string(samples.size()));
  std::sort(samples.begin(), samples.end());
  BoxStats stats;
  stats.q1 = interpolated_quantile(samples, 0.25);
  stats.median = interpolated_quantile(samples, 0.5);
  stats.q3 = interpolated_quantile(samples, 0.75);
  double iqr = stats.q3 - stats.q1;
  double lo_fence = stats.q1 - 1.5 * iqr;
  double hi_fence = stats.q3 + 1.5 * iqr;
  stats.whisker_low = stats.q1;
  stats.whisker_high = stats.q3;
  for (double s : samples) {
    if (s >= lo_fence && s < stats.whisker_low) stats.whisker_low = s;
    if (s <= hi_fence && s > stats.whisker_high) stats.whisker_high = s;
    if (s < lo_fence || s > hi_fence) stats.outliers.push_back(s);
  }
  return stats;
}

FwtClass classify_samples(const std::vector<double>& samples_s) {
  if (samples_s.empty()) throw RangeError("no samples to classify");
  double max_regular;
  if (samples_s.size() >= 4) {
    max_regular = box_stats(samples_s).whisker_high;
  } else {
    max_regular = *std::max_element(samples_s.begin(), samples_s.end());
  }
  auto idx = min_fwt_index_covering(max_regular);
  if (!idx || idx->i > 11) return {11, true};
  return {std::max(idx->i, 8), false};
}

std::map<BenchCommand, FwtClass> classify_fwt(const std::vector<LatencySample>& samples) {
  if (samples.empty()) throw RangeError("no samples to classify");
  std::map<BenchCommand, std::vector<double>> grouped;
  for (const auto& s : samples) grouped[s.command].push_back(s.total_s);
  std::map<BenchCommand, FwtClass> out;
  for (auto& [cmd, values] : grouped) out[cmd] = classify_samples(values);
  return out;
}

ExchangeOutcome enforce_timeout(const endpoint::TimeoutPolicy& policy, double response_latency_s) {
  if (response_latency_s < 0.0) throw RangeError("negative latency");
  using Kind = endpoint::TimeoutPolicy::Kind;
  switch (policy.kind) {
    case Kind::None:
      return {true, response_latency_s, 1};
    case Kind::MandatoryTimeout:
      if (response_latency_s <= policy.window_s) return {true, response_latency_s, 1};
      return {false, policy.window_s, 1};
    case Kind::FwtRetransmit: {
      double horizon = policy.window_s * policy.max_attempts;
      if (response_latency_s < horizon) {
        int attempts = std::min(policy.max_attempts,
                                static_cast<int>(response_latency_s / policy.window_s) + 1);
        return {true, response_latency_s, attempts};
      }
      return {false, horizon, policy.max_attempts};
    }
  }
  return {false, 0.0, 0};
}

namespace {

/// Reader script for the benchmark: n repetitions of the command sequence.
class BenchPcdDevice : public endpoint::PcdDevice {
 public:
  BenchPcdDevice(int runs, endpoint::TimeoutPolicy policy) : runs_(runs), policy_(policy) {}

  std::optional<Bytes> begin() override { return command_for_step(); }

  std::optional<Bytes> on_response(const Bytes&, std::int64_t latency_ns) override {
    record(static_cast<double>(latency_ns) / 1e9, false);
    ++step_;
    return command_for_step();
  }

  std::optional<Bytes> on_exchange_failed() override {
    double gave_up = policy_.kind == endpoint::TimeoutPolicy::Kind::FwtRetransmit
                         ? policy_.window_s * policy_.max_attempts
                         : policy_.window_s;
    record(gave_up, true);
    ++step_;
    return command_for_step();
  }

  endpoint::TimeoutPolicy policy() const override { return policy_; }

  const std::vector<LatencySample>& samples() const { return samples_; }

 private:
  std::optional<Bytes> command_for_step() const {
    if (step_ >= static_cast<std::size_t>(runs_) * kCommandSequence.size()) return std::nullopt;
    return command_apdu(kCommandSequence[step_ % kCommandSequence.size()]);
  }
  void record(double total_s, bool timed_out) {
    samples_.push_back({kCommandSequence[step_ % kCommandSequence.size()], total_s,
                        static_cast<int>(step_ / kCommandSequence.size()) + 1, timed_out});
  }
  int runs_;
  endpoint::TimeoutPolicy policy_;
  std::size_t step_ = 0;
  std::vector<LatencySample> samples_;
};

std::vector<LatencySample> run_local(int runs, endpoint::CardModel& source) {
  // No network: per-command latency is the source's processing time.
  std::vector<LatencySample> samples;
  sim::Scheduler clock;
  for (int run = 1; run <= runs; ++run) {
    for (BenchCommand c : kCommandSequence) {
      std::int64_t sent = clock.now_ns();
      std::optional<Bytes> resp = source.respond(command_apdu(c));
      if (!resp) throw Error("benchmark source failed to answer " + command_name(c));
      clock.run_for(source.processing_ns());
      samples.push_back({c, static_cast<double>(clock.now_ns() - sent) / 1e9, run, false});
    }
  }
  return samples;
}

}  // namespace

std::vector<LatencySample> run_benchmark(const LinkProfile& profile, int runs, std::uint64_t seed,
                                         endpoint::TimeoutPolicy policy) {
  if (runs <= 0) throw RangeError("runs must be positive");

  if (!profile.uses_server) {
    if (profile.replay_source) {
      // Record one honest sequence, then replay it.
      SessionLog recorded(LogMode::Relay, 0);
      std::int64_t t = 0;
      for (BenchCommand c : kCommandSequence) {
        recorded.append({command_apdu(c), Direction::PcdToPicc, t++});
        recorded.append({command_response(c), Direction::PiccToPcd, t++});
      }
      endpoint::ReplayCard replay(recorded,
                                  {endpoint::ReplayMode::DataBased, Direction::PiccToPcd, 0});
      replay.set_processing_ns(sim::seconds_to_ns(profile.processing_s));
      return run_local(runs, replay);
    }
    endpoint::ScriptedCard card = make_bench_card(profile.processing_s);
    return run_local(runs, card);
  }

  endpoint::ScriptedCard card = make_bench_card(profile.processing_s);
  BenchPcdDevice device(runs, policy);
  endpoint::SimRelayOptions opts;
  opts.reader_hop = profile.hop_delay;
  opts.tag_hop = profile.hop_delay;
  opts.seed = seed;
  endpoint::run_sim_relay(card, device, opts);
  return device.samples();
}

std::vector<LatencySample> run_benchmark_wallclock(int runs) {
  if (runs <= 0) throw RangeError("runs must be positive");
  relay::RelayServer server({});
  server.start();

  endpoint::ScriptedCard card = make_bench_card(0.0);
  endpoint::TcpClientPort tag_port("127.0.0.1", server.port());
  BenchPcdDevice device(runs, endpoint::TimeoutPolicy{});
  endpoint::TagEndpoint tag(tag_port, device);
  tag_port.set_handler([&tag](const relay::WireMessage& m) { tag.on_message(m); });
  tag_port.join(1, relay::Role::Tag);

  std::atomic<bool> stop{false};
  std::thread reader_thread([&] {
    endpoint::TcpClientPort reader_port("127.0.0.1", server.port());
    endpoint::ReaderEndpoint reader(reader_port, card);
    reader_port.set_handler([&reader](const relay::WireMessage& m) { reader.on_message(m); });
    reader_port.join(1, relay::Role::Reader);
    reader.start();
    reader_port.run([&] { return stop.load(); });
  });

  tag.start();
  tag_port.run([&] { return tag.finished(); }, 10'000);
  stop = true;
  reader_thread.join();
  server.stop();
  return device.samples();
}

std::string to_csv(const std::string& profile, const std::vector<LatencySample>& samples) {
  std::ostringstream out;
  for (const auto& s : samples) {
    long long us = static_cast<long long>(std::llround(s.total_s * 1e6));
    out << profile << ',' << command_name(s.command) << ',' << s.run << ',' << us << '\n';
  }
  return out.str();
}

std::vector<CommandSummary> summarize(const std::vector<LatencySample>& samples) {
  std::vector<CommandSummary> out;
  for (BenchCommand c : kCommandSequence) {
    std::vector<double> values;
    for (const auto& s : samples)
      if (s.command == c) values.push_back(s.total_s);
    if (values.size() < 4) continue;  // box statistics need at least 4 samples
    out.push_back({c, box_stats(values), classify_samples(values)});
  }
  return out;
}

std::vector<double> sequence_totals(const std::vector<LatencySample>& samples) {
  std::map<int, double> per_run;
  for (const auto& s : samples) per_run[s.run] += s.total_s;
  std::vector<double> out;
  for (auto& [run, total] : per_run) out.push_back(total);
  return out;
}

std::string whisker_dat(const std::vector<CommandSummary>& summary) {
  std::ostringstream out;
  out << "# command q1 median q3 whisker_low whisker_high fwt_class\n";
  for (const auto& s : summary) {
    out << command_name(s.command) << ' ' << s.stats.q1 * 1e3 << ' ' << s.stats.median * 1e3 << ' '
        << s.stats.q3 * 1e3 << ' ' << s.stats.whisker_low * 1e3 << ' '
        << s.stats.whisker_high * 1e3 << ' '
        << (s.fwt.exceeds ? std::string(">11") : std::to_string(s.fwt.index)) << '\n';
  }
  return out.str();
}

std::string gnuplot_script(const std::string& dat_path, const std::string& title) {
  std::ostringstream out;
  out << "set title '" << title << "'\n"
      << "set ylabel 'latency [ms]'\n"
      << "set style fill empty\n"
      << "set boxwidth 0.3\n"
      << "set xtics rotate by -30\n"
      << "# candlesticks: x box_min whisker_min whisker_max box_high (median via extra plot)\n"
      << "plot '" << dat_path << "' using 0:2:5:6:4:xtic(1) with candlesticks title 'IQR', \\\n"
      << "     '' using 0:3:3:3:3 with candlesticks lt -1 notitle\n";
  return out.str();
}

}  // namespace nfclab::bench
