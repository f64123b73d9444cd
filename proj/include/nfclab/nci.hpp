#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nfclab/core.hpp"

namespace nfclab::nci {

/// Symbolic name <-> 1-byte wire id mapping for CORE_SET_CONFIG parameters.
/// Defaults are the standard listen-mode ids; a registry file
/// (`SYMBOL=0xNN` per line) can override them.
class Registry {
 public:
  static const Registry& defaults();
  static Registry from_file(const std::string& path);
  static Registry from_lines(const std::vector<std::string>& lines);

  std::uint8_t wire_id(const std::string& symbol) const;
  std::optional<std::string> symbol(std::uint8_t wire_id) const;
  bool known_symbol(const std::string& symbol) const;

  /// Symbols legal for a technology (LA_/LB_/LF_ prefix row).
  const std::vector<std::string>& symbols_for(TagTech tech) const;

  /// Field names as carried in StaticTagData (symbol without the tech prefix,
  /// e.g. NFCID1 for LA_NFCID1).
  static std::string field_to_symbol(TagTech tech, const std::string& field);
  static std::string tech_prefix(TagTech tech);

 private:
  Registry() = default;
  std::vector<std::pair<std::string, std::uint8_t>> entries_;
  std::vector<std::string> nfca_, nfcb_, nfcf_;
  void insert(const std::string& symbol, std::uint8_t id);
};

/// One configuration parameter. Either a registry symbol or, for ids not in
/// the registry, a raw wire id preserved verbatim.
struct ParamId {
  std::string symbol;               // empty when unknown
  std::uint8_t raw = 0;             // wire id when unknown

  static ParamId named(std::string sym) { return ParamId{std::move(sym), 0}; }
  static ParamId unknown(std::uint8_t id) { return ParamId{{}, id}; }
  bool is_known() const { return !symbol.empty(); }
  std::uint8_t wire_id(const Registry& reg) const { return is_known() ? reg.wire_id(symbol) : raw; }
  bool operator==(const ParamId&) const = default;
};

struct ConfigEntry {
  ParamId id;
  Bytes value;  // 0..255 bytes

  bool operator==(const ConfigEntry&) const = default;
};

/// Ordered CORE_SET_CONFIG parameter stream. At most 255 entries, no
/// duplicate ids.
class ConfigStream {
 public:
  ConfigStream() = default;
  explicit ConfigStream(std::vector<ConfigEntry> entries);

  void add(ConfigEntry entry);  // throws ValidationError on duplicate id / overflow
  const std::vector<ConfigEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  bool contains(const ParamId& id) const;
  bool operator==(const ConfigStream&) const = default;

 private:
  std::vector<ConfigEntry> entries_;
};

/// Wire layout: count byte, then per entry: id byte, length byte, value.
Bytes encode_stream(const ConfigStream& s, const Registry& reg = Registry::defaults());
ConfigStream decode_stream(ByteView bytes, const Registry& reg = Registry::defaults());

/// Clone profile: one entry per captured static-tag field, mapped onto the
/// technology's listen-mode parameters. Fields illegal for the technology
/// raise ValidationError.
ConfigStream profile_from_tag(const StaticTagData& data, const Registry& reg = Registry::defaults());

struct MergeResult {
  ConfigStream forwarded;
  ConfigStream rejected;
};

/// Removes from `incoming` every entry whose id is pinned by `custom`;
/// removed entries are returned for later restore.
MergeResult merge_protect(const ConfigStream& custom, const ConfigStream& incoming);

/// Collapses accumulated rejected entries into the stream to replay when the
/// custom configuration is dismissed; later values supersede earlier ones.
ConfigStream restore_snapshot(const std::vector<ConfigStream>& rejected_batches);

/// USER_0 TLV layout shared with the pcapng codec: 1 tech byte, then
/// [field wire id, length, value] per field.
Bytes encode_static_tag(const StaticTagData& data, const Registry& reg = Registry::defaults());
StaticTagData decode_static_tag(ByteView bytes, const Registry& reg = Registry::defaults());

/// Checks field legality and NFCID1 length; throws ValidationError.
void validate_static_tag(const StaticTagData& data, const Registry& reg = Registry::defaults());

}  // namespace nfclab::nci
