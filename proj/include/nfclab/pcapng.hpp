#pragma once

#include "nfclab/core.hpp"
#include "nfclab/nci.hpp"

namespace nfclab::pcapng {

// Link types of the two capture interfaces (APDU traffic / static tag data).
constexpr std::uint16_t kLinkTypeIso14443 = 264;
constexpr std::uint16_t kLinkTypeUser0 = 147;

// ISO 14443 capture pseudo-header: version byte, event byte, 16-bit
// big-endian length of the following data. APDUs are logged without their
// transport CRC, so only the CRC-dropped data events appear.
constexpr std::uint8_t kPseudoHeaderVersion = 0x00;

enum class FrameEvent : std::uint8_t {
  DataPiccToPcdCrcDropped = 0x05,
  DataPcdToPiccCrcDropped = 0x06,
};

struct UnsupportedFrame : Error {
  using Error::Error;
};

/// ISO 14443-4 block carrying one APDU: an I-block PCB byte followed by the
/// raw payload. The event byte encodes the direction.
struct Iso14443Frame {
  FrameEvent event = FrameEvent::DataPcdToPiccCrcDropped;
  Bytes body;  // PCB + APDU payload

  bool operator==(const Iso14443Frame&) const = default;
};

constexpr std::uint8_t kPcbIBlock = 0x02;  // block number bit in bit 0

/// Hands out I-block numbers: the number flips on every reader command and
/// the matching response reuses it.
class FrameSequencer {
 public:
  int next_block_number(Direction d);

 private:
  int pairs_started_ = 0;
};

Iso14443Frame encode_frame(const Apdu& apdu, int block_number = 0);
Apdu decode_frame(const Iso14443Frame& frame, std::int64_t timestamp_ns = 0);

/// Full on-wire packet data for an ISO 14443 interface packet
/// (pseudo-header + frame body).
Bytes packet_data(const Iso14443Frame& frame);

/// Serializes a log as a pcapng file: section header, one interface per link
/// type above, one enhanced packet block per record. Timestamps are absolute
/// microseconds (log creation + entry offset).
Bytes export_log(const SessionLog& log, const nci::Registry& reg = nci::Registry::defaults());

/// Inverse of export_log for files produced by it or an equivalent writer.
/// The imported log has mode Imported; traffic, directions and relative
/// timestamps (at microsecond resolution) are reproduced exactly.
SessionLog import_log(ByteView file, const nci::Registry& reg = nci::Registry::defaults());

}  // namespace nfclab::pcapng
