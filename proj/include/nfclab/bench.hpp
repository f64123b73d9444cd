#pragma once

#include <array>

#include "nfclab/endpoint.hpp"

namespace nfclab::bench {

/// The measured command sequence: value retrieval from a DESFire-style card.
enum class BenchCommand : std::uint8_t {
  SelectFile = 0xA4,
  SelectApplication = 0x5A,
  GetFileSettings = 0xF5,
  GetValue = 0x6C,
};

inline constexpr std::array<BenchCommand, 4> kCommandSequence = {
    BenchCommand::SelectFile,
    BenchCommand::SelectApplication,
    BenchCommand::GetFileSettings,
    BenchCommand::GetValue,
};

std::string command_name(BenchCommand c);
Bytes command_apdu(BenchCommand c);
Bytes command_response(BenchCommand c);

/// Scripted card answering the benchmark sequence.
endpoint::ScriptedCard make_bench_card(double processing_s);

/// One measurement setup. `hop_delay` applies to each of the four network
/// hops of a relayed exchange (endpoint->server->endpoint and back);
/// profiles without a server have no hops at all.
struct LinkProfile {
  std::string name;
  bool uses_server = false;
  bool replay_source = false;  // answer from a recorded log instead of the card
  sim::DelayModel hop_delay = sim::DelayModel::zero();
  double processing_s = 0.005;

  /// TAG, RP, BT, BW, WH, WA presets.
  static LinkProfile standard(const std::string& name);
  static const std::vector<std::string>& standard_names();
};

struct LatencySample {
  BenchCommand command;
  double total_s = 0.0;
  int run = 0;
  bool timed_out = false;
};

struct BoxStats {
  double median = 0, q1 = 0, q3 = 0;
  double whisker_low = 0, whisker_high = 0;
  std::vector<double> outliers;
};

/// Quartiles by linear interpolation; whiskers at the furthest samples
/// within 1.5 IQR of the quartiles. Needs at least 4 samples.
BoxStats box_stats(std::vector<double> samples);

/// FWT classification in the reporting range [8, 11].
struct FwtClass {
  int index = 8;
  bool exceeds = false;

  bool operator==(const FwtClass&) const = default;
};

/// Smallest index in [8, 11] covering the maximum non-outlier sample.
FwtClass classify_samples(const std::vector<double>& samples_s);
std::map<BenchCommand, FwtClass> classify_fwt(const std::vector<LatencySample>& samples);

struct ExchangeOutcome {
  bool success = false;
  double decided_at_s = 0.0;
  int attempts = 1;
};

/// Pure decision model for a reader waiting on one response with latency
/// `response_latency_s`. FwtRetransmit keeps listening across retransmission
/// windows, so a late response still lands; MandatoryTimeout is definitive.
ExchangeOutcome enforce_timeout(const endpoint::TimeoutPolicy& policy, double response_latency_s);

/// Runs the 4-command sequence `runs` times over the profile's chain on the
/// virtual clock. Exchanges that exhaust the policy are recorded as
/// timed-out samples carrying the give-up duration.
std::vector<LatencySample> run_benchmark(const LinkProfile& profile, int runs, std::uint64_t seed,
                                         endpoint::TimeoutPolicy policy = {});

/// Sanity-check variant on the real clock: the same sequence through an
/// in-process relay server over loopback TCP, measuring wall time.
std::vector<LatencySample> run_benchmark_wallclock(int runs);

std::string to_csv(const std::string& profile, const std::vector<LatencySample>& samples);

struct CommandSummary {
  BenchCommand command;
  BoxStats stats;
  FwtClass fwt;
};

std::vector<CommandSummary> summarize(const std::vector<LatencySample>& samples);

/// Per-run totals over the whole sequence.
std::vector<double> sequence_totals(const std::vector<LatencySample>& samples);

std::string gnuplot_script(const std::string& dat_path, const std::string& title);
std::string whisker_dat(const std::vector<CommandSummary>& summary);

}  // namespace nfclab::bench
