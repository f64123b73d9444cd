#include "nfclab/crypto.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <memory>

namespace nfclab::crypto {

namespace {

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

Block aes128_block(ByteView key, const Block& in, bool encrypt) {
  if (key.size() != kBlockSize) throw RangeError("AES-128 key must be 16 bytes");
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw Error("EVP_CIPHER_CTX_new failed");
  if (EVP_CipherInit_ex(ctx.get(), EVP_aes_128_ecb(), nullptr, key.data(), nullptr,
                        encrypt ? 1 : 0) != 1)
    throw Error("EVP_CipherInit_ex failed");
  EVP_CIPHER_CTX_set_padding(ctx.get(), 0);
  Block out{};
  int outl = 0;
  if (EVP_CipherUpdate(ctx.get(), out.data(), &outl, in.data(), static_cast<int>(in.size())) != 1 ||
      outl != static_cast<int>(kBlockSize))
    throw Error("EVP_CipherUpdate failed");
  return out;
}

}  // namespace

Block to_block(ByteView v) {
  if (v.size() != kBlockSize) throw RangeError("expected 16 bytes, got " + std::to_string(v.size()));
  Block b{};
  std::memcpy(b.data(), v.data(), kBlockSize);
  return b;
}

Bytes from_block(const Block& b) { return Bytes(b.begin(), b.end()); }

Block aes128_encrypt_block(ByteView key, const Block& in) { return aes128_block(key, in, true); }

Block aes128_decrypt_block(ByteView key, const Block& in) { return aes128_block(key, in, false); }

Bytes cbc_encrypt(ByteView key, const Block& iv, ByteView plaintext) {
  if (plaintext.size() % kBlockSize != 0)
    throw RangeError("CBC plaintext length not a multiple of 16");
  Bytes out;
  out.reserve(plaintext.size());
  Block chain = iv;
  for (std::size_t off = 0; off < plaintext.size(); off += kBlockSize) {
    Block blk{};
    for (std::size_t i = 0; i < kBlockSize; ++i) blk[i] = plaintext[off + i] ^ chain[i];
    chain = aes128_encrypt_block(key, blk);
    out.insert(out.end(), chain.begin(), chain.end());
  }
  return out;
}

Bytes cbc_decrypt(ByteView key, const Block& iv, ByteView ciphertext) {
  if (ciphertext.size() % kBlockSize != 0 || ciphertext.empty())
    throw RangeError("CBC ciphertext length not a positive multiple of 16");
  Bytes out;
  out.reserve(ciphertext.size());
  Block chain = iv;
  for (std::size_t off = 0; off < ciphertext.size(); off += kBlockSize) {
    Block ct{};
    std::memcpy(ct.data(), ciphertext.data() + off, kBlockSize);
    Block pt = aes128_decrypt_block(key, ct);
    for (std::size_t i = 0; i < kBlockSize; ++i) out.push_back(pt[i] ^ chain[i]);
    chain = ct;
  }
  return out;
}

Block last_block(ByteView data) {
  if (data.size() < kBlockSize) throw RangeError("need at least one block");
  return to_block(data.subspan(data.size() - kBlockSize));
}

namespace {

Block shift_left_one_bit(const Block& in) {
  Block out{};
  std::uint8_t carry = 0;
  for (int i = static_cast<int>(kBlockSize) - 1; i >= 0; --i) {
    out[i] = static_cast<std::uint8_t>((in[i] << 1) | carry);
    carry = (in[i] & 0x80) ? 1 : 0;
  }
  return out;
}

}  // namespace

Block cmac(ByteView key, ByteView message) {
  // RFC 4493 subkey generation.
  constexpr std::uint8_t kRb = 0x87;
  Block l = aes128_encrypt_block(key, Block{});
  Block k1 = shift_left_one_bit(l);
  if (l[0] & 0x80) k1[kBlockSize - 1] ^= kRb;
  Block k2 = shift_left_one_bit(k1);
  if (k1[0] & 0x80) k2[kBlockSize - 1] ^= kRb;

  std::size_t n = (message.size() + kBlockSize - 1) / kBlockSize;
  bool complete = n > 0 && message.size() % kBlockSize == 0;
  if (n == 0) n = 1;

  Block lastb{};
  std::size_t last_off = (n - 1) * kBlockSize;
  if (complete) {
    for (std::size_t i = 0; i < kBlockSize; ++i) lastb[i] = message[last_off + i] ^ k1[i];
  } else {
    std::size_t rem = message.size() - last_off;
    for (std::size_t i = 0; i < rem; ++i) lastb[i] = message[last_off + i];
    lastb[rem] = 0x80;
    for (std::size_t i = 0; i < kBlockSize; ++i) lastb[i] ^= k2[i];
  }

  Block x{};
  for (std::size_t b = 0; b + 1 < n; ++b) {
    for (std::size_t i = 0; i < kBlockSize; ++i) x[i] ^= message[b * kBlockSize + i];
    x = aes128_encrypt_block(key, x);
  }
  for (std::size_t i = 0; i < kBlockSize; ++i) x[i] ^= lastb[i];
  return aes128_encrypt_block(key, x);
}

Bytes cmac_truncated(ByteView key, ByteView message) {
  Block full = cmac(key, message);
  return Bytes(full.begin(), full.begin() + kChannelMacLen);
}

Block rotate_left(const Block& b) {
  Block out{};
  for (std::size_t i = 0; i < kBlockSize; ++i) out[i] = b[(i + 1) % kBlockSize];
  return out;
}

Block derive_session_key(ByteView a, ByteView b) {
  if (a.size() != kBlockSize || b.size() != kBlockSize)
    throw RangeError("session key inputs must be 16 bytes");
  Block out{};
  std::memcpy(out.data() + 0, a.data() + 0, 4);
  std::memcpy(out.data() + 4, b.data() + 0, 4);
  std::memcpy(out.data() + 8, a.data() + 12, 4);
  std::memcpy(out.data() + 12, b.data() + 12, 4);
  return out;
}

Bytes SecureChannel::seal(ByteView message) {
  Bytes plain(message.begin(), message.end());
  Bytes tag = cmac_truncated(ByteView(key_), message);
  append(plain, tag);
  plain.push_back(0x80);
  while (plain.size() % kBlockSize != 0) plain.push_back(0x00);
  Bytes ct = cbc_encrypt(ByteView(key_), iv_, plain);
  iv_ = last_block(ct);
  ++sent_;
  return ct;
}

Bytes SecureChannel::open(ByteView ciphertext) {
  Bytes plain = cbc_decrypt(ByteView(key_), iv_, ciphertext);
  iv_ = last_block(ciphertext);
  ++received_;
  // Strip 0x80 00.. padding from the end.
  std::size_t end = plain.size();
  while (end > 0 && plain[end - 1] == 0x00) --end;
  if (end == 0 || plain[end - 1] != 0x80) throw FormatFailure("bad channel padding");
  --end;
  if (end < kChannelMacLen) throw FormatFailure("channel frame too short");
  Bytes message(plain.begin(), plain.begin() + (end - kChannelMacLen));
  Bytes tag(plain.begin() + (end - kChannelMacLen), plain.begin() + end);
  if (cmac_truncated(ByteView(key_), message) != tag)
    throw AuthFailure("channel authentication tag mismatch");
  return message;
}

}  // namespace nfclab::crypto
