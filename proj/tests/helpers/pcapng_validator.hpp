#pragma once

// Structural pcapng checker for tests, written directly against the file
// format grammar and sharing no code with the codec under test: every block
// needs a 4-byte-aligned total length >= 12, matching leading and trailing
// length fields, a leading section header with a valid byte-order magic, and
// enhanced packets must fit their block and reference an existing interface.

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace pcapng_check {

struct Report {
  std::size_t section_headers = 0;
  std::size_t interfaces = 0;
  std::size_t packets = 0;
  std::vector<std::uint16_t> link_types;
  std::vector<std::string> errors;

  bool ok() const { return errors.empty() && section_headers > 0; }
};

inline Report validate(const std::vector<std::uint8_t>& file) {
  Report rep;
  auto u32 = [&](std::size_t at) {
    std::uint32_t v;
    std::memcpy(&v, file.data() + at, 4);
    return v;
  };
  auto u16 = [&](std::size_t at) {
    std::uint16_t v;
    std::memcpy(&v, file.data() + at, 2);
    return v;
  };

  if (file.size() < 28) {
    rep.errors.push_back("file shorter than a minimal section header block");
    return rep;
  }
  std::size_t off = 0;
  bool first = true;
  while (off + 12 <= file.size()) {
    std::uint32_t type = u32(off);
    std::uint32_t total = u32(off + 4);
    if (total < 12 || total % 4 != 0) {
      rep.errors.push_back("block at " + std::to_string(off) + " has bad total length " +
                           std::to_string(total));
      return rep;
    }
    if (off + total > file.size()) {
      rep.errors.push_back("block at " + std::to_string(off) + " overruns the file");
      return rep;
    }
    std::uint32_t trailing = u32(off + total - 4);
    if (trailing != total) {
      rep.errors.push_back("block at " + std::to_string(off) +
                           " trailing length mismatch: " + std::to_string(trailing) + " vs " +
                           std::to_string(total));
      return rep;
    }
    if (first) {
      if (type != 0x0A0D0D0AU) {
        rep.errors.push_back("first block is not a section header");
        return rep;
      }
      first = false;
    }
    if (type == 0x0A0D0D0AU) {
      ++rep.section_headers;
      if (u32(off + 8) != 0x1A2B3C4DU) rep.errors.push_back("unexpected byte-order magic");
    } else if (type == 0x00000001U) {
      ++rep.interfaces;
      rep.link_types.push_back(u16(off + 8));
    } else if (type == 0x00000006U) {
      ++rep.packets;
      if (total < 32) {
        rep.errors.push_back("enhanced packet block at " + std::to_string(off) + " too short");
      } else {
        std::uint32_t iface = u32(off + 8);
        std::uint32_t caplen = u32(off + 20);
        if (iface >= rep.interfaces)
          rep.errors.push_back("packet at " + std::to_string(off) + " references interface " +
                               std::to_string(iface) + " before its description");
        // captured data plus padding must fit between header and trailer
        std::uint32_t padded = (caplen + 3u) & ~3u;
        if (28 + padded + 4 > total)
          rep.errors.push_back("packet at " + std::to_string(off) + " captured length overruns block");
      }
    }
    off += total;
  }
  if (off != file.size()) rep.errors.push_back("trailing bytes after last block");
  return rep;
}

}  // namespace pcapng_check
