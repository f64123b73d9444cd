#include "nfclab/core.hpp"

#include <cmath>

namespace nfclab {

std::string to_hex(ByteView data) {
  static const char* digits = "0123456789ABCDEF";
  std::string out;
  out.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0F]);
  }
  return out;
}

static int hex_nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  throw ParseError(0, std::string("invalid hex character '") + c + "'");
}

Bytes from_hex(const std::string& hex) {
  std::string compact;
  compact.reserve(hex.size());
  for (char c : hex)
    if (c != ' ' && c != ':') compact.push_back(c);
  if (compact.size() % 2 != 0) throw ParseError(compact.size(), "odd hex length");
  Bytes out(compact.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(hex_nibble(compact[2 * i]) << 4 | hex_nibble(compact[2 * i + 1]));
  return out;
}

Direction opposite(Direction d) {
  return d == Direction::PcdToPicc ? Direction::PiccToPcd : Direction::PcdToPicc;
}

std::uint8_t direction_code(Direction d) { return static_cast<std::uint8_t>(d); }

Direction direction_from_code(std::uint8_t code) {
  switch (code) {
    case 0x01: return Direction::PcdToPicc;
    case 0x02: return Direction::PiccToPcd;
    default: throw ParseError(0, "unknown direction code " + std::to_string(code));
  }
}

std::string direction_name(Direction d) {
  return d == Direction::PcdToPicc ? "pcd>picc" : "picc>pcd";
}

std::uint8_t tech_code(TagTech t) { return static_cast<std::uint8_t>(t); }

TagTech tech_from_code(std::uint8_t code) {
  switch (code) {
    case 0x01: return TagTech::NfcA;
    case 0x02: return TagTech::NfcB;
    case 0x03: return TagTech::NfcF;
    default: throw ParseError(0, "unknown tag technology code " + std::to_string(code));
  }
}

std::string tech_name(TagTech t) {
  switch (t) {
    case TagTech::NfcA: return "A";
    case TagTech::NfcB: return "B";
    default: return "F";
  }
}

void StaticTagData::set(const std::string& name, Bytes value) {
  for (auto& [n, v] : fields) {
    if (n == name) {
      v = std::move(value);
      return;
    }
  }
  fields.emplace_back(name, std::move(value));
}

const Bytes* StaticTagData::find(const std::string& name) const {
  for (const auto& [n, v] : fields)
    if (n == name) return &v;
  return nullptr;
}

std::string log_mode_name(LogMode m) {
  switch (m) {
    case LogMode::Relay: return "relay";
    case LogMode::Replay: return "replay";
    case LogMode::Clone: return "clone";
    default: return "imported";
  }
}

void SessionLog::append(Apdu apdu) {
  if (apdu.payload.empty()) throw ValidationError("empty APDU payload");
  if (!entries_.empty() && apdu.timestamp_ns < entries_.back().timestamp_ns)
    throw OrderingError("timestamp regression: " + std::to_string(apdu.timestamp_ns) + " after " +
                        std::to_string(entries_.back().timestamp_ns));
  entries_.push_back(std::move(apdu));
}

bool SessionLog::same_traffic(const SessionLog& other) const {
  if (initial_ != other.initial_) return false;
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].payload != other.entries_[i].payload) return false;
    if (entries_[i].direction != other.entries_[i].direction) return false;
  }
  return true;
}

FwtIndex::FwtIndex(int index) : i(index) {
  if (index < 0 || index > kFwtIndexMax)
    throw RangeError("FWT index out of range: " + std::to_string(index));
}

double fwt_seconds(FwtIndex idx) {
  // 256*16 carrier periods at 13.56 MHz, doubled per index step. ldexp keeps
  // the doubling exact in floating point.
  return std::ldexp(4096.0 / 13.56e6, idx.i);
}

std::optional<FwtIndex> min_fwt_index_covering(double latency_s) {
  if (latency_s < 0.0) throw RangeError("negative latency");
  for (int i = 0; i <= kFwtIndexMax; ++i)
    if (fwt_seconds(FwtIndex(i)) >= latency_s) return FwtIndex(i);
  return std::nullopt;
}

}  // namespace nfclab
