#pragma once

#include "nfclab/core.hpp"

namespace nfclab::relay {

enum class MsgType : std::uint8_t {
  Join = 0x01,
  Leave = 0x02,
  InitialData = 0x03,
  ApduData = 0x04,
  Error = 0x05,
  Ping = 0x06,
};

enum class Role : std::uint8_t {
  Reader = 0x01,  // device facing a tag
  Tag = 0x02,     // device facing a reader
};

/// Relay protocol frame: 4-byte big-endian length of (type + payload),
/// 1 type byte, payload.
struct WireMessage {
  MsgType type = MsgType::Ping;
  Bytes payload;

  static WireMessage join(std::uint8_t session, Role role);
  static WireMessage initial_data(Bytes tlv);
  static WireMessage apdu_data(Direction dir, ByteView apdu);
  static WireMessage error(const std::string& reason);
  static WireMessage leave();
  static WireMessage ping();

  // Payload accessors; throw ProtocolError when the type/shape is wrong.
  std::uint8_t join_session() const;
  Role join_role() const;
  Direction apdu_direction() const;
  Bytes apdu_payload() const;
  std::string error_reason() const;

  bool operator==(const WireMessage&) const = default;
};

constexpr std::size_t kMaxWirePayload = 1 << 20;

Bytes encode_message(const WireMessage& msg);

/// Decodes one frame from the start of `buffer`. Returns the frame and its
/// encoded size, or nullopt when more bytes are needed. Throws ProtocolError
/// on malformed frames.
std::optional<std::pair<WireMessage, std::size_t>> decode_message(ByteView buffer);

}  // namespace nfclab::relay
