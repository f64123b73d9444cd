#pragma once

#include <array>

#include "nfclab/bytes.hpp"

namespace nfclab::crypto {

constexpr std::size_t kBlockSize = 16;

using Block = std::array<std::uint8_t, kBlockSize>;

struct AuthFailure : Error {
  using Error::Error;
};

struct FormatFailure : Error {
  using Error::Error;
};

Block to_block(ByteView v);
Bytes from_block(const Block& b);

/// Raw AES-128 single-block operations (OpenSSL libcrypto behind the scenes).
Block aes128_encrypt_block(ByteView key, const Block& in);
Block aes128_decrypt_block(ByteView key, const Block& in);

/// AES-128-CBC over whole blocks. The caller owns the IV; chain by passing the
/// last ciphertext block of the previous call.
Bytes cbc_encrypt(ByteView key, const Block& iv, ByteView plaintext);
Bytes cbc_decrypt(ByteView key, const Block& iv, ByteView ciphertext);

Block last_block(ByteView data);

/// AES-CMAC per RFC 4493, full 16-byte tag.
Block cmac(ByteView key, ByteView message);

/// Tag length carried inside the secure channel (DESFire-style truncation,
/// leading bytes of the full CMAC).
constexpr std::size_t kChannelMacLen = 8;

Bytes cmac_truncated(ByteView key, ByteView message);

/// Left rotation by one byte: out[i] = in[i+1 mod 16].
Block rotate_left(const Block& b);

/// 16-byte session key from two 16-byte halves: a[0..4) || b[0..4) ||
/// a[12..16) || b[12..16).
Block derive_session_key(ByteView a, ByteView b);

/// Authenticated CBC channel: every message is sent as
/// CBC(key, iv, msg || CMAC8(key, msg) || 0x80 pad), and the IV chains to the
/// last ciphertext block after each operation on both sides.
class SecureChannel {
 public:
  SecureChannel() = default;
  explicit SecureChannel(const Block& session_key) : key_(session_key) {}

  Bytes seal(ByteView message);              // aenc
  Bytes open(ByteView ciphertext);           // adec; throws AuthFailure/FormatFailure
  const Block& iv() const { return iv_; }
  const Block& key() const { return key_; }
  std::uint64_t sent() const { return sent_; }
  std::uint64_t received() const { return received_; }

 private:
  Block key_{};
  Block iv_{};  // zero on establishment
  std::uint64_t sent_ = 0;
  std::uint64_t received_ = 0;
};

}  // namespace nfclab::crypto
