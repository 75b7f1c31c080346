#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gradchain::crypto {

using Digest = std::array<std::uint8_t, 32>;
using Bytes = std::vector<std::uint8_t>;

Digest sha256(std::span<const std::uint8_t> data);

// Number of leading zero bits of the digest read as a big-endian integer.
int leading_zero_bits(const Digest& digest);

std::string to_hex(std::span<const std::uint8_t> bytes);
// Throws DecodeError on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);
Digest digest_from_hex(std::string_view hex);

struct KeyPair {
  Bytes public_key;
  Bytes secret_key;
};

// Sign/verify interface; the chain never depends on a concrete scheme.
class SignatureScheme {
 public:
  virtual ~SignatureScheme() = default;
  virtual std::string_view name() const = 0;
  virtual KeyPair keypair_from_seed(std::span<const std::uint8_t, 32> seed) const = 0;
  virtual Bytes sign(const KeyPair& key, std::span<const std::uint8_t> message) const = 0;
  virtual bool verify(std::span<const std::uint8_t> public_key,
                      std::span<const std::uint8_t> message,
                      std::span<const std::uint8_t> signature) const = 0;
};

// RFC 8032 Ed25519, backed by OpenSSL.
const SignatureScheme& ed25519();

// Deterministic key pair for simulation user `index` under `master_seed`.
KeyPair derive_keypair(const SignatureScheme& scheme, std::uint64_t master_seed, std::uint64_t index);

}  // namespace gradchain::crypto
