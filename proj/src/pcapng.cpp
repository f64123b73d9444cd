#include "nfclab/pcapng.hpp"

#include <cstring>
#include <optional>

namespace nfclab::pcapng {

namespace {

constexpr std::uint32_t kBlockSectionHeader = 0x0A0D0D0A;
constexpr std::uint32_t kBlockInterface = 0x00000001;
constexpr std::uint32_t kBlockEnhancedPacket = 0x00000006;
constexpr std::uint32_t kByteOrderMagic = 0x1A2B3C4D;
constexpr std::uint16_t kOptComment = 1;
constexpr std::uint16_t kOptEnd = 0;

// The log epoch is not representable in standard pcapng fields, so the
// exporter records it as a section comment; the importer falls back to
// first-packet anchoring when absent.
constexpr const char* kEpochPrefix = "nfclab epoch_us=";

void put_u16(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(Bytes& b, std::uint32_t v) {
  put_u16(b, static_cast<std::uint16_t>(v));
  put_u16(b, static_cast<std::uint16_t>(v >> 16));
}

void put_u64(Bytes& b, std::uint64_t v) {
  put_u32(b, static_cast<std::uint32_t>(v));
  put_u32(b, static_cast<std::uint32_t>(v >> 32));
}

void pad4(Bytes& b) {
  while (b.size() % 4 != 0) b.push_back(0);
}

void put_option(Bytes& b, std::uint16_t code, ByteView value) {
  put_u16(b, code);
  put_u16(b, static_cast<std::uint16_t>(value.size()));
  append(b, value);
  pad4(b);
}

Bytes finish_block(std::uint32_t type, const Bytes& body) {
  Bytes out;
  std::uint32_t total = static_cast<std::uint32_t>(12 + body.size());
  put_u32(out, type);
  put_u32(out, total);
  append(out, body);
  put_u32(out, total);
  return out;
}

Bytes section_header_block(std::int64_t epoch_us) {
  Bytes body;
  put_u32(body, kByteOrderMagic);
  put_u16(body, 1);  // major
  put_u16(body, 0);  // minor
  put_u64(body, 0xFFFFFFFFFFFFFFFFull);  // section length unspecified
  std::string comment = kEpochPrefix + std::to_string(epoch_us);
  put_option(body, kOptComment,
             ByteView(reinterpret_cast<const std::uint8_t*>(comment.data()), comment.size()));
  put_option(body, kOptEnd, {});
  return finish_block(kBlockSectionHeader, body);
}

Bytes interface_block(std::uint16_t link_type) {
  Bytes body;
  put_u16(body, link_type);
  put_u16(body, 0);  // reserved
  put_u32(body, 0);  // snaplen: no limit
  return finish_block(kBlockInterface, body);
}

Bytes enhanced_packet_block(std::uint32_t interface_id, std::uint64_t ts_us, ByteView data) {
  Bytes body;
  put_u32(body, interface_id);
  put_u32(body, static_cast<std::uint32_t>(ts_us >> 32));
  put_u32(body, static_cast<std::uint32_t>(ts_us));
  put_u32(body, static_cast<std::uint32_t>(data.size()));
  put_u32(body, static_cast<std::uint32_t>(data.size()));
  append(body, data);
  pad4(body);
  return finish_block(kBlockEnhancedPacket, body);
}

}  // namespace

int FrameSequencer::next_block_number(Direction d) {
  if (d == Direction::PcdToPicc) ++pairs_started_;
  int pair = pairs_started_ > 0 ? pairs_started_ - 1 : 0;
  return pair & 1;
}

Iso14443Frame encode_frame(const Apdu& apdu, int block_number) {
  if (apdu.payload.empty()) throw ValidationError("empty APDU payload");
  Iso14443Frame frame;
  frame.event = apdu.direction == Direction::PcdToPicc ? FrameEvent::DataPcdToPiccCrcDropped
                                                       : FrameEvent::DataPiccToPcdCrcDropped;
  frame.body.push_back(static_cast<std::uint8_t>(kPcbIBlock | (block_number & 1)));
  append(frame.body, apdu.payload);
  return frame;
}

Apdu decode_frame(const Iso14443Frame& frame, std::int64_t timestamp_ns) {
  if (frame.body.size() < 2) throw UnsupportedFrame("frame body shorter than PCB + payload");
  std::uint8_t pcb = frame.body[0];
  // I-block: top bits 00, bit 1 set. Chaining/CID/NAD flags are tolerated.
  if ((pcb & 0xC0) != 0x00 || (pcb & 0x02) != 0x02)
    throw UnsupportedFrame("PCB " + to_hex(ByteView(&pcb, 1)) + " is not an I-block");
  Apdu apdu;
  apdu.direction = frame.event == FrameEvent::DataPcdToPiccCrcDropped ? Direction::PcdToPicc
                                                                      : Direction::PiccToPcd;
  apdu.payload = Bytes(frame.body.begin() + 1, frame.body.end());
  apdu.timestamp_ns = timestamp_ns;
  return apdu;
}

Bytes packet_data(const Iso14443Frame& frame) {
  Bytes out;
  out.push_back(kPseudoHeaderVersion);
  out.push_back(static_cast<std::uint8_t>(frame.event));
  put_u16_be(out, static_cast<std::uint16_t>(frame.body.size()));
  append(out, frame.body);
  return out;
}

Bytes export_log(const SessionLog& log, const nci::Registry& reg) {
  Bytes file = section_header_block(log.created_us());
  append(file, interface_block(kLinkTypeIso14443));  // interface 0
  append(file, interface_block(kLinkTypeUser0));     // interface 1

  if (log.initial())
    append(file, enhanced_packet_block(1, static_cast<std::uint64_t>(log.created_us()),
                                       nci::encode_static_tag(*log.initial(), reg)));

  FrameSequencer seq;
  for (const Apdu& apdu : log.entries()) {
    Iso14443Frame frame = encode_frame(apdu, seq.next_block_number(apdu.direction));
    std::uint64_t ts_us = static_cast<std::uint64_t>(log.created_us() + apdu.timestamp_ns / 1000);
    append(file, enhanced_packet_block(0, ts_us, packet_data(frame)));
  }
  return file;
}

namespace {

class Reader {
 public:
  Reader(ByteView data, bool swap) : data_(data), swap_(swap) {}

  std::uint16_t u16(std::size_t at) const {
    check(at, 2);
    std::uint16_t v;
    std::memcpy(&v, data_.data() + at, 2);
    return swap_ ? static_cast<std::uint16_t>((v >> 8) | (v << 8)) : v;
  }

  std::uint32_t u32(std::size_t at) const {
    check(at, 4);
    std::uint32_t v;
    std::memcpy(&v, data_.data() + at, 4);
    return swap_ ? __builtin_bswap32(v) : v;
  }

  ByteView bytes(std::size_t at, std::size_t len) const {
    check(at, len);
    return data_.subspan(at, len);
  }

  std::size_t size() const { return data_.size(); }

 private:
  void check(std::size_t at, std::size_t len) const {
    if (at + len > data_.size()) throw ParseError(at, "truncated pcapng data");
  }
  ByteView data_;
  bool swap_;
};

std::optional<std::int64_t> parse_epoch_comment(const Reader& r, std::size_t opt_off,
                                                std::size_t opt_end) {
  std::size_t off = opt_off;
  while (off + 4 <= opt_end) {
    std::uint16_t code = r.u16(off);
    std::uint16_t len = r.u16(off + 2);
    off += 4;
    if (code == kOptEnd) break;
    if (code == kOptComment) {
      auto v = r.bytes(off, len);
      std::string text(v.begin(), v.end());
      if (text.starts_with(kEpochPrefix)) {
        try {
          return std::stoll(text.substr(std::strlen(kEpochPrefix)));
        } catch (const std::exception&) {
          return std::nullopt;
        }
      }
    }
    off += len + ((4 - len % 4) % 4);
  }
  return std::nullopt;
}

}  // namespace

SessionLog import_log(ByteView file, const nci::Registry& reg) {
  if (file.size() < 12 || get_u32_be(file, 0) != 0x0A0D0D0A)
    throw ParseError(0, "not a pcapng file (bad section header magic)");
  // Byte order magic sits inside the SHB body.
  std::uint32_t bom_le;
  std::memcpy(&bom_le, file.data() + 8, 4);
  bool swap;
  if (bom_le == kByteOrderMagic) swap = false;
  else if (__builtin_bswap32(bom_le) == kByteOrderMagic) swap = true;
  else throw ParseError(8, "bad byte-order magic");

  Reader r(file, swap);
  std::vector<std::uint16_t> interface_links;
  std::optional<std::int64_t> epoch_us;
  struct Packet {
    std::uint16_t link;
    std::uint64_t ts_us;
    Bytes data;
    std::size_t offset;
  };
  std::vector<Packet> packets;

  std::size_t off = 0;
  bool first = true;
  while (off < r.size()) {
    if (off + 12 > r.size()) throw ParseError(off, "truncated block header");
    std::uint32_t type = r.u32(off);
    std::uint32_t total = r.u32(off + 4);
    if (total < 12 || total % 4 != 0) throw ParseError(off + 4, "bad block total length");
    if (off + total > r.size()) throw ParseError(off, "block extends past end of file");
    std::uint32_t trailing = r.u32(off + total - 4);
    if (trailing != total) throw ParseError(off + total - 4, "trailing block length mismatch");
    if (first && type != kBlockSectionHeader)
      throw ParseError(off, "file does not start with a section header block");
    first = false;

    if (type == kBlockSectionHeader) {
      if (r.u16(off + 12) != 1) throw ParseError(off + 12, "unsupported pcapng major version");
      if (total > 28) epoch_us = parse_epoch_comment(r, off + 24, off + total - 4);
      interface_links.clear();
    } else if (type == kBlockInterface) {
      interface_links.push_back(r.u16(off + 8));
    } else if (type == kBlockEnhancedPacket) {
      if (total < 32) throw ParseError(off, "enhanced packet block too short");
      std::uint32_t iface = r.u32(off + 8);
      if (iface >= interface_links.size())
        throw ParseError(off + 8, "packet references unknown interface " + std::to_string(iface));
      std::uint64_t ts = (static_cast<std::uint64_t>(r.u32(off + 12)) << 32) | r.u32(off + 16);
      std::uint32_t caplen = r.u32(off + 20);
      if (off + 28 + caplen > off + total - 4)
        throw ParseError(off + 20, "captured length exceeds block size");
      auto data = r.bytes(off + 28, caplen);
      std::uint16_t link = interface_links[iface];
      if (link != kLinkTypeIso14443 && link != kLinkTypeUser0)
        throw ParseError(off + 8, "unknown mandatory link type " + std::to_string(link));
      packets.push_back({link, ts, Bytes(data.begin(), data.end()), off});
    }
    // Other block types are skipped.
    off += total;
  }

  std::int64_t base_us = epoch_us.value_or(packets.empty() ? 0
                                                           : static_cast<std::int64_t>(packets.front().ts_us));
  SessionLog log(LogMode::Imported, base_us);

  for (const Packet& p : packets) {
    if (p.link == kLinkTypeUser0) {
      if (log.initial()) throw ParseError(p.offset, "multiple static tag data records");
      if (!log.empty()) throw ParseError(p.offset, "static tag data after APDU traffic");
      try {
        log.set_initial(nci::decode_static_tag(p.data, reg));
      } catch (const ParseError& e) {
        throw ParseError(p.offset, std::string("bad static tag record: ") + e.what());
      }
      continue;
    }
    if (p.data.size() < 4) throw ParseError(p.offset, "ISO 14443 packet shorter than pseudo-header");
    std::uint8_t event = p.data[1];
    if (event != static_cast<std::uint8_t>(FrameEvent::DataPcdToPiccCrcDropped) &&
        event != static_cast<std::uint8_t>(FrameEvent::DataPiccToPcdCrcDropped))
      throw ParseError(p.offset, "unknown ISO 14443 event byte 0x" + to_hex(ByteView(&event, 1)));
    std::uint16_t declared = get_u16_be(p.data, 2);
    if (static_cast<std::size_t>(declared) + 4 != p.data.size())
      throw ParseError(p.offset, "pseudo-header length disagrees with captured data");
    Iso14443Frame frame{static_cast<FrameEvent>(event),
                        Bytes(p.data.begin() + 4, p.data.end())};
    std::int64_t rel_ns = (static_cast<std::int64_t>(p.ts_us) - base_us) * 1000;
    log.append(decode_frame(frame, rel_ns));
  }
  return log;
}

}  // namespace nfclab::pcapng
