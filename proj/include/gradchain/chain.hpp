#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "gradchain/crypto.hpp"

namespace gradchain::chain {

using crypto::Bytes;
using crypto::Digest;

struct OutPoint {
  Digest txid{};
  std::uint32_t index = 0;
  auto operator<=>(const OutPoint&) const = default;
};

struct TxInput {
  Digest prev_txid{};
  std::uint32_t output_index = 0;
  Bytes signature;
  Bytes spender_pubkey;
};

struct TxOutput {
  std::uint64_t amount = 0;
  Bytes recipient_pubkey;
  bool operator==(const TxOutput&) const = default;
};

// A value transfer. A transaction without inputs is a coinbase; its tag
// carries the block height so coinbase txids are unique.
struct Transaction {
  std::uint64_t tag = 0;
  std::vector<TxInput> inputs;
  std::vector<TxOutput> outputs;

  bool is_coinbase() const { return inputs.empty(); }
  Bytes encode() const;
  // SHA-256 of encode().
  Digest txid() const;
  // SHA-256 of the encoding with every signature emptied.
  Digest signing_digest() const;
};

inline constexpr std::size_t kMaxOutputs = 2;

struct GradientBlock {
  Digest prev_hash{};
  std::uint64_t nonce = 0;
  std::uint64_t timestamp = 0;
  std::uint64_t t_index = 0;
  Bytes miner_pubkey;
  std::vector<double> delta_x;
  std::vector<Transaction> transactions;

  // prev_hash | nonce | timestamp | t_index | miner (u32 len + bytes) |
  // delta_x (u32 count + f64 LE) | tx count (u32) | transactions.
  Bytes encode() const;
};

// Byte offset of the nonce inside GradientBlock::encode().
inline constexpr std::size_t kNonceOffset = 32;

Digest hash_block(const GradientBlock& block);

// Throws DecodeError on malformed or trailing input.
GradientBlock decode_block(std::span<const std::uint8_t> bytes);

// Smallest nonce in [nonce_start, nonce_start + max_attempts) whose block
// hash has at least difficulty_bits leading zero bits; nullopt when the
// budget runs out.
std::optional<std::uint64_t> mine(const GradientBlock& block, int difficulty_bits,
                                  std::uint64_t nonce_start, std::uint64_t max_attempts);

enum class Rejection {
  kBadLink,
  kBadIndex,
  kBadTime,
  kBadDelta,
  kBadPow,
  kBadCoinbase,
  kBadTransaction,
  kUnknownInput,
  kDoubleSpend,
  kBadSignature,
};

std::string_view rejection_name(Rejection r);

struct ChainParams {
  int difficulty_bits = 8;
  std::uint64_t block_reward = 50;
  int dim = 1;
  const crypto::SignatureScheme* scheme = &crypto::ed25519();
};

GradientBlock genesis_block(int dim);

/// Append-only chain of gradient blocks with its unspent-output ledger.
///
/// A new chain holds only the genesis block. verify_and_append() is the only
/// mutator; it either applies a block completely or leaves the chain as is.
class GradChain {
 public:
  explicit GradChain(ChainParams params);

  std::optional<Rejection> verify_and_append(const GradientBlock& block,
                                             std::uint64_t arrival_tick = 0);
  // Same checks without appending.
  std::optional<Rejection> check(const GradientBlock& block) const;
  // Checks non-coinbase transactions as if they were the payload of the next
  // block; on success stores their total fee in *fees when given.
  std::optional<Rejection> admit(std::span<const Transaction> txs, std::uint64_t* fees = nullptr) const;

  const ChainParams& params() const { return params_; }
  const std::vector<GradientBlock>& blocks() const { return blocks_; }
  const std::vector<Digest>& hashes() const { return hashes_; }
  const GradientBlock& tip() const { return blocks_.back(); }
  Digest head() const { return hashes_.back(); }
  std::size_t length() const { return blocks_.size(); }
  std::uint64_t head_arrival_tick() const { return head_arrival_tick_; }

  const std::map<OutPoint, TxOutput>& utxo() const { return utxo_; }
  std::optional<TxOutput> unspent(const OutPoint& op) const;
  // Sum of unspent amounts.
  std::uint64_t supply() const;
  std::uint64_t fees_collected() const { return fees_; }
  std::uint64_t balance(std::span<const std::uint8_t> pubkey) const;

  const Transaction* find_transaction(const Digest& txid) const;

 private:
  struct Applied;
  std::optional<Rejection> validate(const GradientBlock& block, Applied* out) const;
  std::optional<Rejection> validate_spends(std::span<const Transaction> txs, Applied& applied) const;

  ChainParams params_;
  std::vector<GradientBlock> blocks_;
  std::vector<Digest> hashes_;
  std::map<OutPoint, TxOutput> utxo_;
  std::set<OutPoint> created_;
  std::map<Digest, std::pair<std::size_t, std::size_t>> tx_index_;
  std::uint64_t fees_ = 0;
  std::uint64_t head_arrival_tick_ = 0;
};

struct VerifyFailure {
  std::size_t block_index = 0;
  Rejection reason = Rejection::kBadLink;
};

// Replays the blocks from genesis under params; nullopt when all pass.
std::optional<VerifyFailure> reverify(std::span<const GradientBlock> blocks, const ChainParams& params);

// x0 + sum of delta_x over non-genesis blocks, in chain order, after
// walking prev_hash links from the head back to genesis. Throws
// IntegrityError on a broken link.
std::vector<double> reconstruct_weights(std::span<const GradientBlock> blocks,
                                        std::span<const double> x0);
std::vector<double> reconstruct_weights(const GradChain& chain, std::span<const double> x0);

// Longest chain; ties go to the earlier head arrival, then the smaller head
// digest. Throws on an empty list or mismatched genesis.
const GradChain& resolve_fork(std::span<const GradChain* const> candidates);

// Signs every input with `key`. Throws TransactionError when an input does
// not reference an unspent output owned by key.
Transaction sign_transaction(const GradChain& chain, const crypto::KeyPair& key, Transaction unsigned_tx);

// Pays `amount` to payee from the payer's unspent outputs (in outpoint
// order, skipping any in `reserved`), with change back to the payer.
// nullopt if funds are short.
std::optional<Transaction> build_payment(const GradChain& chain, const crypto::KeyPair& payer,
                                         std::span<const std::uint8_t> payee, std::uint64_t amount,
                                         std::uint64_t fee = 0,
                                         const std::set<OutPoint>* reserved = nullptr);

// Walks the signature chain from txid back to its coinbases; true iff every
// hop verifies.
bool verify_coin_history(const GradChain& chain, const Digest& txid);

// Binary chain file: "GCHN" | u32 count | per block (recorded hash | u32 len |
// canonical encoding). Loading recomputes every hash and replays
// verify_and_append; any mismatch throws IntegrityError or DecodeError.
Bytes encode_chain_file(const GradChain& chain);
GradChain decode_chain_file(std::span<const std::uint8_t> bytes, const ChainParams& params);

}  // namespace gradchain::chain
