#include "nfclab/wire.hpp"

namespace nfclab::relay {

WireMessage WireMessage::join(std::uint8_t session, Role role) {
  return {MsgType::Join, {session, static_cast<std::uint8_t>(role)}};
}

WireMessage WireMessage::initial_data(Bytes tlv) { return {MsgType::InitialData, std::move(tlv)}; }

WireMessage WireMessage::apdu_data(Direction dir, ByteView apdu) {
  Bytes payload{direction_code(dir)};
  append(payload, apdu);
  return {MsgType::ApduData, std::move(payload)};
}

WireMessage WireMessage::error(const std::string& reason) {
  return {MsgType::Error, Bytes(reason.begin(), reason.end())};
}

WireMessage WireMessage::leave() { return {MsgType::Leave, {}}; }

WireMessage WireMessage::ping() { return {MsgType::Ping, {}}; }

std::uint8_t WireMessage::join_session() const {
  if (type != MsgType::Join || payload.size() != 2) throw ProtocolError("malformed Join payload");
  return payload[0];
}

Role WireMessage::join_role() const {
  if (type != MsgType::Join || payload.size() != 2) throw ProtocolError("malformed Join payload");
  switch (payload[1]) {
    case 0x01: return Role::Reader;
    case 0x02: return Role::Tag;
    default: throw ProtocolError("unknown role code " + std::to_string(payload[1]));
  }
}

Direction WireMessage::apdu_direction() const {
  if (type != MsgType::ApduData || payload.empty()) throw ProtocolError("malformed ApduData");
  return direction_from_code(payload[0]);
}

Bytes WireMessage::apdu_payload() const {
  if (type != MsgType::ApduData || payload.size() < 2) throw ProtocolError("malformed ApduData");
  return Bytes(payload.begin() + 1, payload.end());
}

std::string WireMessage::error_reason() const {
  return std::string(payload.begin(), payload.end());
}

Bytes encode_message(const WireMessage& msg) {
  Bytes out;
  put_u32_be(out, static_cast<std::uint32_t>(1 + msg.payload.size()));
  out.push_back(static_cast<std::uint8_t>(msg.type));
  append(out, msg.payload);
  return out;
}

std::optional<std::pair<WireMessage, std::size_t>> decode_message(ByteView buffer) {
  if (buffer.size() < 4) return std::nullopt;
  std::uint32_t len = get_u32_be(buffer, 0);
  if (len == 0) throw ProtocolError("zero-length frame");
  if (len > kMaxWirePayload) throw ProtocolError("frame exceeds size limit");
  if (buffer.size() < 4 + len) return std::nullopt;
  std::uint8_t type = buffer[4];
  if (type < 0x01 || type > 0x06) throw ProtocolError("unknown message type " + std::to_string(type));
  WireMessage msg;
  msg.type = static_cast<MsgType>(type);
  msg.payload = Bytes(buffer.begin() + 5, buffer.begin() + 4 + len);
  return std::make_pair(std::move(msg), static_cast<std::size_t>(4 + len));
}

}  // namespace nfclab::relay
