#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <random>

#include "nfclab/bytes.hpp"

namespace nfclab::sim {

using Rng = std::mt19937_64;

constexpr std::int64_t kNsPerSecond = 1'000'000'000;

inline std::int64_t seconds_to_ns(double s) { return static_cast<std::int64_t>(s * 1e9 + 0.5); }
inline std::int64_t ms_to_ns(double ms) { return static_cast<std::int64_t>(ms * 1e6 + 0.5); }

/// Deterministic event loop on a virtual clock. Events at equal instants run
/// in scheduling order.
class Scheduler {
 public:
  std::int64_t now_ns() const { return now_; }

  void at(std::int64_t t_ns, std::function<void()> fn);
  void after(std::int64_t delay_ns, std::function<void()> fn);

  bool step();
  void run();
  void run_for(std::int64_t duration_ns);
  bool idle() const { return queue_.empty(); }

 private:
  struct Event {
    std::int64_t at;
    std::uint64_t seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::int64_t now_ = 0;
  std::uint64_t next_seq_ = 0;
};

/// One-way delay model for a single hop.
class DelayModel {
 public:
  static DelayModel zero();
  static DelayModel constant(double seconds);
  static DelayModel normal(double mean_s, double stddev_s);
  static DelayModel empirical(std::vector<double> samples_s);

  std::int64_t sample_ns(Rng& rng) const;
  bool is_zero() const;
  double mean_s() const;

 private:
  enum class Kind { Constant, Normal, Empirical } kind_ = Kind::Constant;
  double a_ = 0.0, b_ = 0.0;
  std::vector<double> samples_;
};

}  // namespace nfclab::sim
