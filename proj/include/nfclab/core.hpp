#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "nfclab/bytes.hpp"

namespace nfclab {

/// Originator of an APDU. Wire codes are stable (0x01/0x02) and shared by the
/// relay protocol and the out-of-process plugin protocol.
enum class Direction : std::uint8_t {
  PcdToPicc = 0x01,  // reader -> tag
  PiccToPcd = 0x02,  // tag -> reader
};

Direction opposite(Direction d);
std::uint8_t direction_code(Direction d);
Direction direction_from_code(std::uint8_t code);
std::string direction_name(Direction d);

enum class TagTech : std::uint8_t {
  NfcA = 0x01,
  NfcB = 0x02,
  NfcF = 0x03,
};

std::uint8_t tech_code(TagTech t);
TagTech tech_from_code(std::uint8_t code);
std::string tech_name(TagTech t);

/// One captured APDU payload. Timestamps are monotonic nanoseconds relative to
/// the owning log's creation instant; the payload excludes any transport
/// header or checksum.
struct Apdu {
  Bytes payload;
  Direction direction = Direction::PcdToPicc;
  std::int64_t timestamp_ns = 0;

  bool operator==(const Apdu&) const = default;
};

/// Technology-tagged initialization data exchanged before APDU traffic.
/// Field names must be legal for the technology (see nci::Registry) and are
/// kept in insertion order.
struct StaticTagData {
  TagTech tech = TagTech::NfcA;
  std::vector<std::pair<std::string, Bytes>> fields;

  void set(const std::string& name, Bytes value);
  const Bytes* find(const std::string& name) const;
  bool operator==(const StaticTagData&) const = default;
};

enum class LogMode : std::uint8_t { Relay, Replay, Clone, Imported };

std::string log_mode_name(LogMode m);

/// Ordered APDU traffic capture with optional initial static tag data.
/// Entry timestamps are non-decreasing; equal timestamps are allowed.
class SessionLog {
 public:
  SessionLog() = default;
  SessionLog(LogMode mode, std::int64_t created_us) : mode_(mode), created_us_(created_us) {}

  LogMode mode() const { return mode_; }
  void set_mode(LogMode m) { mode_ = m; }

  /// Wall-clock microseconds since the Unix epoch at log creation.
  std::int64_t created_us() const { return created_us_; }
  void set_created_us(std::int64_t us) { created_us_ = us; }

  const std::optional<StaticTagData>& initial() const { return initial_; }
  void set_initial(StaticTagData data) { initial_ = std::move(data); }

  const std::vector<Apdu>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  /// Throws OrderingError if the timestamp regresses.
  void append(Apdu apdu);

  bool same_traffic(const SessionLog& other) const;

 private:
  LogMode mode_ = LogMode::Relay;
  std::int64_t created_us_ = 0;
  std::optional<StaticTagData> initial_;
  std::vector<Apdu> entries_;
};

/// ISO 14443 frame waiting time exponent, 0..14.
struct FwtIndex {
  int i = 0;

  explicit FwtIndex(int index);
  bool operator==(const FwtIndex&) const = default;
};

constexpr int kFwtIndexMax = 14;

/// FWT_i = (256*16 / 13.56 MHz) * 2^i seconds.
double fwt_seconds(FwtIndex i);

/// Smallest index whose window covers `latency_s` (boundary inclusive), or
/// nullopt if even FWT_14 is too short. Negative latency throws RangeError.
std::optional<FwtIndex> min_fwt_index_covering(double latency_s);

}  // namespace nfclab
