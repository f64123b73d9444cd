#include "nfclab/nci.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace nfclab::nci {

void Registry::insert(const std::string& symbol, std::uint8_t id) {
  for (const auto& [sym, wire] : entries_) {
    if (sym == symbol) throw ValidationError("duplicate registry symbol " + symbol);
    if (wire == id) throw ValidationError("duplicate registry wire id for " + symbol);
  }
  entries_.emplace_back(symbol, id);
  if (symbol.starts_with("LA_")) nfca_.push_back(symbol);
  else if (symbol.starts_with("LB_")) nfcb_.push_back(symbol);
  else if (symbol.starts_with("LF_")) nfcf_.push_back(symbol);
}

const Registry& Registry::defaults() {
  static const Registry reg = [] {
    Registry r;
    // Listen-mode discovery parameter ids from the NCI parameter table.
    r.insert("LA_BIT_FRAME_SDD", 0x30);
    r.insert("LA_PLATFORM_CONFIG", 0x31);
    r.insert("LA_SEL_INFO", 0x32);
    r.insert("LA_NFCID1", 0x33);
    r.insert("LA_HIST_BY", 0x59);
    r.insert("LB_SENSB_INFO", 0x38);
    r.insert("LB_NFCID0", 0x39);
    r.insert("LB_APPLICATION_DATA", 0x3A);
    r.insert("LB_SFGI", 0x3B);
    r.insert("LB_ADC_FO", 0x3C);
    r.insert("LB_H_INFO_RSP", 0x5A);
    r.insert("LF_T3T_IDENTIFIERS_1", 0x40);
    r.insert("LF_T3T_PMM", 0x51);
    r.insert("LF_T3T_FLAGS", 0x53);
    return r;
  }();
  return reg;
}

Registry Registry::from_lines(const std::vector<std::string>& lines) {
  Registry r;
  std::size_t lineno = 0;
  for (const auto& raw : lines) {
    ++lineno;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line.erase(0, line.find_first_not_of(" \t\r\n"));
    line.erase(line.find_last_not_of(" \t\r\n") + 1);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(lineno, "registry line missing '='");
    std::string sym = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    unsigned id = 0;
    std::stringstream ss(val);
    ss >> std::hex >> id;
    if (ss.fail() || id > 0xFF) throw ParseError(lineno, "bad registry wire id '" + val + "'");
    r.insert(sym, static_cast<std::uint8_t>(id));
  }
  return r;
}

Registry Registry::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open registry file " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return from_lines(lines);
}

std::uint8_t Registry::wire_id(const std::string& symbol) const {
  for (const auto& [sym, wire] : entries_)
    if (sym == symbol) return wire;
  throw ValidationError("unknown NCI parameter symbol " + symbol);
}

std::optional<std::string> Registry::symbol(std::uint8_t wire_id) const {
  for (const auto& [sym, wire] : entries_)
    if (wire == wire_id) return sym;
  return std::nullopt;
}

bool Registry::known_symbol(const std::string& symbol) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == symbol; });
}

const std::vector<std::string>& Registry::symbols_for(TagTech tech) const {
  switch (tech) {
    case TagTech::NfcA: return nfca_;
    case TagTech::NfcB: return nfcb_;
    default: return nfcf_;
  }
}

std::string Registry::tech_prefix(TagTech tech) {
  switch (tech) {
    case TagTech::NfcA: return "LA_";
    case TagTech::NfcB: return "LB_";
    default: return "LF_";
  }
}

std::string Registry::field_to_symbol(TagTech tech, const std::string& field) {
  return tech_prefix(tech) + field;
}

ConfigStream::ConfigStream(std::vector<ConfigEntry> entries) {
  for (auto& e : entries) add(std::move(e));
}

void ConfigStream::add(ConfigEntry entry) {
  if (entries_.size() >= 255) throw ValidationError("config stream full (255 entries)");
  if (entry.value.size() > 255) throw ValidationError("config value longer than 255 bytes");
  if (contains(entry.id)) {
    std::string what = entry.id.is_known() ? entry.id.symbol : std::to_string(entry.id.raw);
    throw ValidationError("duplicate config id " + what);
  }
  entries_.push_back(std::move(entry));
}

bool ConfigStream::contains(const ParamId& id) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const ConfigEntry& e) { return e.id == id; });
}

Bytes encode_stream(const ConfigStream& s, const Registry& reg) {
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(s.size()));
  for (const auto& e : s.entries()) {
    out.push_back(e.id.wire_id(reg));
    out.push_back(static_cast<std::uint8_t>(e.value.size()));
    append(out, e.value);
  }
  return out;
}

ConfigStream decode_stream(ByteView bytes, const Registry& reg) {
  if (bytes.empty()) throw ParseError(0, "empty config stream");
  std::size_t n = bytes[0];
  std::size_t off = 1;
  ConfigStream out;
  for (std::size_t k = 0; k < n; ++k) {
    if (off + 2 > bytes.size()) throw ParseError(off, "truncated config entry header");
    std::uint8_t id = bytes[off];
    std::uint8_t len = bytes[off + 1];
    off += 2;
    if (off + len > bytes.size()) throw ParseError(off, "truncated config value");
    Bytes value(bytes.begin() + off, bytes.begin() + off + len);
    off += len;
    auto sym = reg.symbol(id);
    out.add({sym ? ParamId::named(*sym) : ParamId::unknown(id), std::move(value)});
  }
  if (off != bytes.size())
    throw ParseError(off, "trailing bytes after declared entry count");
  return out;
}

void validate_static_tag(const StaticTagData& data, const Registry& reg) {
  for (const auto& [field, value] : data.fields) {
    std::string symbol = Registry::field_to_symbol(data.tech, field);
    const auto& legal = reg.symbols_for(data.tech);
    if (std::find(legal.begin(), legal.end(), symbol) == legal.end())
      throw ValidationError("field " + field + " not legal for NFC-" + tech_name(data.tech));
    if (field == "NFCID1" && value.size() != 4 && value.size() != 7 && value.size() != 10)
      throw ValidationError("NFCID1 length must be 4, 7 or 10");
  }
}

ConfigStream profile_from_tag(const StaticTagData& data, const Registry& reg) {
  validate_static_tag(data, reg);
  ConfigStream out;
  for (const auto& [field, value] : data.fields)
    out.add({ParamId::named(Registry::field_to_symbol(data.tech, field)), value});
  return out;
}

MergeResult merge_protect(const ConfigStream& custom, const ConfigStream& incoming) {
  MergeResult result;
  for (const auto& e : incoming.entries()) {
    if (custom.contains(e.id)) result.rejected.add(e);
    else result.forwarded.add(e);
  }
  return result;
}

ConfigStream restore_snapshot(const std::vector<ConfigStream>& rejected_batches) {
  // Last value per id wins, first-seen order kept.
  std::vector<ConfigEntry> collapsed;
  for (const auto& batch : rejected_batches) {
    for (const auto& e : batch.entries()) {
      auto it = std::find_if(collapsed.begin(), collapsed.end(),
                             [&](const ConfigEntry& c) { return c.id == e.id; });
      if (it == collapsed.end()) collapsed.push_back(e);
      else it->value = e.value;
    }
  }
  return ConfigStream(std::move(collapsed));
}

Bytes encode_static_tag(const StaticTagData& data, const Registry& reg) {
  validate_static_tag(data, reg);
  Bytes out;
  out.push_back(tech_code(data.tech));
  for (const auto& [field, value] : data.fields) {
    out.push_back(reg.wire_id(Registry::field_to_symbol(data.tech, field)));
    out.push_back(static_cast<std::uint8_t>(value.size()));
    append(out, value);
  }
  return out;
}

StaticTagData decode_static_tag(ByteView bytes, const Registry& reg) {
  if (bytes.empty()) throw ParseError(0, "empty static tag record");
  StaticTagData data;
  data.tech = tech_from_code(bytes[0]);
  std::string prefix = Registry::tech_prefix(data.tech);
  std::size_t off = 1;
  while (off < bytes.size()) {
    if (off + 2 > bytes.size()) throw ParseError(off, "truncated static tag field header");
    std::uint8_t id = bytes[off];
    std::uint8_t len = bytes[off + 1];
    off += 2;
    if (off + len > bytes.size()) throw ParseError(off, "truncated static tag field value");
    auto sym = reg.symbol(id);
    if (!sym || !sym->starts_with(prefix))
      throw ParseError(off - 2, "field id " + std::to_string(id) + " not legal for NFC-" +
                                    tech_name(data.tech));
    data.set(sym->substr(prefix.size()), Bytes(bytes.begin() + off, bytes.begin() + off + len));
    off += len;
  }
  return data;
}

}  // namespace nfclab::nci
