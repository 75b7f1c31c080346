#include "gradchain/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <bit>
#include <memory>

#include "gradchain/error.hpp"
#include "gradchain/rng.hpp"

namespace gradchain::crypto {

namespace {

struct PkeyDeleter {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

class Ed25519Scheme final : public SignatureScheme {
 public:
  std::string_view name() const override { return "ed25519"; }

  KeyPair keypair_from_seed(std::span<const std::uint8_t, 32> seed) const override {
    PkeyPtr key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()));
    if (!key) throw Error("ed25519: cannot create private key");
    KeyPair kp;
    kp.secret_key.assign(seed.begin(), seed.end());
    kp.public_key.resize(32);
    std::size_t len = kp.public_key.size();
    if (EVP_PKEY_get_raw_public_key(key.get(), kp.public_key.data(), &len) != 1 || len != 32) {
      throw Error("ed25519: cannot derive public key");
    }
    return kp;
  }

  Bytes sign(const KeyPair& kp, std::span<const std::uint8_t> message) const override {
    if (kp.secret_key.size() != 32) throw Error("ed25519: secret key must be 32 bytes");
    PkeyPtr key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, kp.secret_key.data(),
                                             kp.secret_key.size()));
    MdCtxPtr ctx(EVP_MD_CTX_new());
    if (!key || !ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1) {
      throw Error("ed25519: sign init failed");
    }
    Bytes sig(64);
    std::size_t len = sig.size();
    if (EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size()) != 1) {
      throw Error("ed25519: signing failed");
    }
    sig.resize(len);
    return sig;
  }

  bool verify(std::span<const std::uint8_t> public_key, std::span<const std::uint8_t> message,
              std::span<const std::uint8_t> signature) const override {
    if (public_key.size() != 32 || signature.size() != 64) return false;
    PkeyPtr key(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, public_key.data(),
                                            public_key.size()));
    MdCtxPtr ctx(EVP_MD_CTX_new());
    if (!key || !ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1) {
      return false;
    }
    return EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), message.data(),
                            message.size()) == 1;
  }
};

}  // namespace

Digest sha256(std::span<const std::uint8_t> data) {
  Digest out;
  SHA256(data.data(), data.size(), out.data());
  return out;
}

int leading_zero_bits(const Digest& digest) {
  int bits = 0;
  for (std::uint8_t byte : digest) {
    if (byte == 0) {
      bits += 8;
      continue;
    }
    return bits + std::countl_zero(byte);
  }
  return bits;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 15]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw DecodeError("hex string has odd length");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = hex_value(hex[2 * i]);
    const int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw DecodeError("invalid hex character");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

Digest digest_from_hex(std::string_view hex) {
  const Bytes b = from_hex(hex);
  if (b.size() != 32) throw DecodeError("digest must be 32 bytes");
  Digest d;
  std::copy(b.begin(), b.end(), d.begin());
  return d;
}

const SignatureScheme& ed25519() {
  static const Ed25519Scheme scheme;
  return scheme;
}

KeyPair derive_keypair(const SignatureScheme& scheme, std::uint64_t master_seed, std::uint64_t index) {
  Rng rng(derive_seed(derive_seed(master_seed, "user-key"), index));
  std::array<std::uint8_t, 32> seed;
  for (std::size_t i = 0; i < seed.size(); i += 8) {
    const std::uint64_t v = rng.next_u64();
    for (std::size_t k = 0; k < 8; ++k) seed[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
  }
  return scheme.keypair_from_seed(seed);
}

}  // namespace gradchain::crypto
