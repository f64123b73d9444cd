#include "nfclab/sim.hpp"

#include <algorithm>

namespace nfclab::sim {

void Scheduler::at(std::int64_t t_ns, std::function<void()> fn) {
  if (t_ns < now_) throw RangeError("cannot schedule in the past");
  queue_.push({t_ns, next_seq_++, std::move(fn)});
}

void Scheduler::after(std::int64_t delay_ns, std::function<void()> fn) {
  if (delay_ns < 0) throw RangeError("negative delay");
  at(now_ + delay_ns, std::move(fn));
}

bool Scheduler::step() {
  if (queue_.empty()) return false;
  Event ev = queue_.top();
  queue_.pop();
  now_ = ev.at;
  ev.fn();
  return true;
}

void Scheduler::run() {
  while (step()) {
  }
}

void Scheduler::run_for(std::int64_t duration_ns) {
  std::int64_t deadline = now_ + duration_ns;
  while (!queue_.empty() && queue_.top().at <= deadline) step();
  now_ = std::max(now_, deadline);
}

DelayModel DelayModel::zero() { return constant(0.0); }

DelayModel DelayModel::constant(double seconds) {
  DelayModel m;
  m.kind_ = Kind::Constant;
  m.a_ = seconds;
  return m;
}

DelayModel DelayModel::normal(double mean_s, double stddev_s) {
  DelayModel m;
  m.kind_ = Kind::Normal;
  m.a_ = mean_s;
  m.b_ = stddev_s;
  return m;
}

DelayModel DelayModel::empirical(std::vector<double> samples_s) {
  if (samples_s.empty()) throw RangeError("empirical delay model needs samples");
  DelayModel m;
  m.kind_ = Kind::Empirical;
  m.samples_ = std::move(samples_s);
  return m;
}

std::int64_t DelayModel::sample_ns(Rng& rng) const {
  double s = 0.0;
  switch (kind_) {
    case Kind::Constant: s = a_; break;
    case Kind::Normal: {
      std::normal_distribution<double> dist(a_, b_);
      s = dist(rng);
      break;
    }
    case Kind::Empirical: {
      std::uniform_int_distribution<std::size_t> pick(0, samples_.size() - 1);
      s = samples_[pick(rng)];
      break;
    }
  }
  return seconds_to_ns(std::max(0.0, s));
}

bool DelayModel::is_zero() const { return kind_ == Kind::Constant && a_ == 0.0; }

double DelayModel::mean_s() const {
  switch (kind_) {
    case Kind::Constant: return a_;
    case Kind::Normal: return a_;
    default: {
      double sum = 0.0;
      for (double s : samples_) sum += s;
      return sum / static_cast<double>(samples_.size());
    }
  }
}

}  // namespace nfclab::sim
