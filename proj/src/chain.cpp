#include "gradchain/chain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <string>

#include "gradchain/error.hpp"

namespace gradchain::chain {

namespace {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void bytes(std::span<const std::uint8_t> b) {
    u32(static_cast<std::uint32_t>(b.size()));
    raw(b);
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t remaining() const { return in_.size() - pos_; }
  bool done() const { return pos_ == in_.size(); }

  std::span<const std::uint8_t> raw(std::size_t n) {
    if (n > remaining()) throw DecodeError("unexpected end of input");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = raw(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = raw(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Digest digest() {
    auto s = raw(32);
    Digest d;
    std::copy(s.begin(), s.end(), d.begin());
    return d;
  }
  Bytes bytes() {
    const std::uint32_t n = u32();
    auto s = raw(n);
    return Bytes(s.begin(), s.end());
  }
  // Count prefix for a sequence whose elements take at least min_size bytes.
  std::uint32_t count(std::size_t min_size) {
    const std::uint32_t n = u32();
    if (static_cast<std::uint64_t>(n) * min_size > remaining()) throw DecodeError("count exceeds input");
    return n;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void encode_tx(ByteWriter& w, const Transaction& tx, bool with_signatures) {
  w.u64(tx.tag);
  w.u32(static_cast<std::uint32_t>(tx.inputs.size()));
  for (const TxInput& in : tx.inputs) {
    w.raw(in.prev_txid);
    w.u32(in.output_index);
    if (with_signatures) {
      w.bytes(in.signature);
    } else {
      w.u32(0);
    }
    w.bytes(in.spender_pubkey);
  }
  w.u32(static_cast<std::uint32_t>(tx.outputs.size()));
  for (const TxOutput& out : tx.outputs) {
    w.u64(out.amount);
    w.bytes(out.recipient_pubkey);
  }
}

Transaction decode_tx(ByteReader& r) {
  Transaction tx;
  tx.tag = r.u64();
  const std::uint32_t nin = r.count(32 + 4 + 4 + 4);
  tx.inputs.resize(nin);
  for (TxInput& in : tx.inputs) {
    in.prev_txid = r.digest();
    in.output_index = r.u32();
    in.signature = r.bytes();
    in.spender_pubkey = r.bytes();
  }
  const std::uint32_t nout = r.count(8 + 4);
  tx.outputs.resize(nout);
  for (TxOutput& out : tx.outputs) {
    out.amount = r.u64();
    out.recipient_pubkey = r.bytes();
  }
  return tx;
}

bool add_overflows(std::uint64_t a, std::uint64_t b, std::uint64_t* sum) {
  *sum = a + b;
  return *sum < a;
}

}  // namespace

Bytes Transaction::encode() const {
  ByteWriter w;
  encode_tx(w, *this, true);
  return w.take();
}

Digest Transaction::txid() const { return crypto::sha256(encode()); }

Digest Transaction::signing_digest() const {
  ByteWriter w;
  encode_tx(w, *this, false);
  return crypto::sha256(w.take());
}

Bytes GradientBlock::encode() const {
  ByteWriter w;
  w.raw(prev_hash);
  w.u64(nonce);
  w.u64(timestamp);
  w.u64(t_index);
  w.bytes(miner_pubkey);
  w.u32(static_cast<std::uint32_t>(delta_x.size()));
  for (double v : delta_x) w.f64(v);
  w.u32(static_cast<std::uint32_t>(transactions.size()));
  for (const Transaction& tx : transactions) encode_tx(w, tx, true);
  return w.take();
}

Digest hash_block(const GradientBlock& block) { return crypto::sha256(block.encode()); }

GradientBlock decode_block(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  GradientBlock b;
  b.prev_hash = r.digest();
  b.nonce = r.u64();
  b.timestamp = r.u64();
  b.t_index = r.u64();
  b.miner_pubkey = r.bytes();
  const std::uint32_t nd = r.count(8);
  b.delta_x.resize(nd);
  for (double& v : b.delta_x) v = r.f64();
  const std::uint32_t ntx = r.count(8 + 4 + 4);
  b.transactions.reserve(ntx);
  for (std::uint32_t i = 0; i < ntx; ++i) b.transactions.push_back(decode_tx(r));
  if (!r.done()) throw DecodeError("trailing bytes after block");
  return b;
}

std::optional<std::uint64_t> mine(const GradientBlock& block, int difficulty_bits,
                                  std::uint64_t nonce_start, std::uint64_t max_attempts) {
  if (difficulty_bits < 0 || difficulty_bits > 32) throw ConfigError("difficulty must be in [0, 32]");
  Bytes pre = block.encode();
  for (std::uint64_t k = 0; k < max_attempts; ++k) {
    const std::uint64_t nonce = nonce_start + k;
    for (int i = 0; i < 8; ++i) pre[kNonceOffset + i] = static_cast<std::uint8_t>(nonce >> (8 * i));
    if (crypto::leading_zero_bits(crypto::sha256(pre)) >= difficulty_bits) return nonce;
  }
  return std::nullopt;
}

std::string_view rejection_name(Rejection r) {
  switch (r) {
    case Rejection::kBadLink: return "bad-link";
    case Rejection::kBadIndex: return "bad-index";
    case Rejection::kBadTime: return "bad-time";
    case Rejection::kBadDelta: return "bad-delta";
    case Rejection::kBadPow: return "bad-pow";
    case Rejection::kBadCoinbase: return "bad-coinbase";
    case Rejection::kBadTransaction: return "bad-transaction";
    case Rejection::kUnknownInput: return "unknown-input";
    case Rejection::kDoubleSpend: return "double-spend";
    case Rejection::kBadSignature: return "bad-signature";
  }
  return "unknown";
}

GradientBlock genesis_block(int dim) {
  GradientBlock g;
  g.delta_x.assign(static_cast<std::size_t>(dim), 0.0);
  return g;
}

// Ledger changes of a validated block, applied on commit.
struct GradChain::Applied {
  std::vector<OutPoint> spent;
  std::vector<std::pair<OutPoint, TxOutput>> created;
  std::vector<Digest> txids;
  std::uint64_t fees = 0;
};

GradChain::GradChain(ChainParams params) : params_(params) {
  if (params_.dim < 1) throw ConfigError("chain dimension must be positive");
  if (params_.difficulty_bits < 0 || params_.difficulty_bits > 32) {
    throw ConfigError("difficulty must be in [0, 32]");
  }
  if (params_.scheme == nullptr) throw ConfigError("signature scheme required");
  blocks_.push_back(genesis_block(params_.dim));
  hashes_.push_back(hash_block(blocks_.back()));
}

std::optional<Rejection> GradChain::check(const GradientBlock& block) const {
  return validate(block, nullptr);
}

std::optional<Rejection> GradChain::validate(const GradientBlock& block, Applied* out) const {
  const GradientBlock& prev = blocks_.back();
  if (block.prev_hash != hashes_.back()) return Rejection::kBadLink;
  if (block.t_index != prev.t_index + 1) return Rejection::kBadIndex;
  if (block.timestamp <= prev.timestamp) return Rejection::kBadTime;
  if (block.delta_x.size() != static_cast<std::size_t>(params_.dim) ||
      !std::all_of(block.delta_x.begin(), block.delta_x.end(), [](double v) { return std::isfinite(v); })) {
    return Rejection::kBadDelta;
  }
  if (crypto::leading_zero_bits(hash_block(block)) < params_.difficulty_bits) return Rejection::kBadPow;

  if (block.transactions.empty() || !block.transactions.front().is_coinbase()) {
    return Rejection::kBadCoinbase;
  }

  for (std::size_t k = 1; k < block.transactions.size(); ++k) {
    if (block.transactions[k].is_coinbase()) return Rejection::kBadCoinbase;
  }
  Applied applied;
  if (auto rej = validate_spends(std::span(block.transactions).subspan(1), applied)) return rej;
  const std::uint64_t fees = applied.fees;

  const Transaction& coinbase = block.transactions.front();
  if (coinbase.tag != block.t_index || coinbase.outputs.empty() ||
      coinbase.outputs.size() > kMaxOutputs) {
    return Rejection::kBadCoinbase;
  }
  std::uint64_t minted = 0;
  for (const TxOutput& o : coinbase.outputs) {
    if (add_overflows(minted, o.amount, &minted)) return Rejection::kBadCoinbase;
  }
  std::uint64_t expected = 0;
  if (add_overflows(params_.block_reward, fees, &expected) || minted != expected) {
    return Rejection::kBadCoinbase;
  }
  const Digest coinbase_id = coinbase.txid();
  if (tx_index_.count(coinbase_id) ||
      std::find(applied.txids.begin(), applied.txids.end(), coinbase_id) != applied.txids.end()) {
    return Rejection::kBadCoinbase;
  }

  if (out) {
    // Coinbase outputs first, matching transaction order in the block.
    Applied ordered;
    ordered.spent = std::move(applied.spent);
    for (std::uint32_t i = 0; i < coinbase.outputs.size(); ++i) {
      ordered.created.emplace_back(OutPoint{coinbase_id, i}, coinbase.outputs[i]);
    }
    ordered.created.insert(ordered.created.end(), applied.created.begin(), applied.created.end());
    ordered.txids.push_back(coinbase_id);
    ordered.txids.insert(ordered.txids.end(), applied.txids.begin(), applied.txids.end());
    ordered.fees = fees;
    *out = std::move(ordered);
  }
  return std::nullopt;
}

std::optional<Rejection> GradChain::validate_spends(std::span<const Transaction> txs,
                                                    Applied& applied) const {
  std::map<OutPoint, TxOutput> created_here;
  std::set<OutPoint> spent_here;
  std::set<Digest> txids_here;
  std::uint64_t fees = 0;

  for (const Transaction& tx : txs) {
    if (tx.is_coinbase()) return Rejection::kBadTransaction;
    if (tx.outputs.empty() || tx.outputs.size() > kMaxOutputs) return Rejection::kBadTransaction;
    const Digest id = tx.txid();
    if (tx_index_.count(id) || !txids_here.insert(id).second) return Rejection::kBadTransaction;

    const Digest signing = tx.signing_digest();
    std::uint64_t total_in = 0;
    for (const TxInput& in : tx.inputs) {
      const OutPoint op{in.prev_txid, in.output_index};
      if (spent_here.count(op)) return Rejection::kDoubleSpend;
      const TxOutput* source = nullptr;
      if (auto it = utxo_.find(op); it != utxo_.end()) {
        source = &it->second;
      } else if (auto jt = created_here.find(op); jt != created_here.end()) {
        source = &jt->second;
      } else {
        return created_.count(op) ? Rejection::kDoubleSpend : Rejection::kUnknownInput;
      }
      if (in.spender_pubkey != source->recipient_pubkey ||
          !params_.scheme->verify(in.spender_pubkey, signing, in.signature)) {
        return Rejection::kBadSignature;
      }
      if (add_overflows(total_in, source->amount, &total_in)) return Rejection::kBadTransaction;
      spent_here.insert(op);
      applied.spent.push_back(op);
    }
    std::uint64_t total_out = 0;
    for (const TxOutput& o : tx.outputs) {
      if (add_overflows(total_out, o.amount, &total_out)) return Rejection::kBadTransaction;
    }
    if (total_out > total_in) return Rejection::kBadTransaction;
    if (add_overflows(fees, total_in - total_out, &fees)) return Rejection::kBadTransaction;
    for (std::uint32_t i = 0; i < tx.outputs.size(); ++i) {
      created_here.emplace(OutPoint{id, i}, tx.outputs[i]);
      applied.created.emplace_back(OutPoint{id, i}, tx.outputs[i]);
    }
    applied.txids.push_back(id);
  }
  applied.fees = fees;
  return std::nullopt;
}

std::optional<Rejection> GradChain::admit(std::span<const Transaction> txs, std::uint64_t* fees) const {
  Applied applied;
  if (auto rej = validate_spends(txs, applied)) return rej;
  if (fees) *fees = applied.fees;
  return std::nullopt;
}

std::optional<Rejection> GradChain::verify_and_append(const GradientBlock& block,
                                                      std::uint64_t arrival_tick) {
  Applied applied;
  if (auto rej = validate(block, &applied)) return rej;

  for (const auto& [op, out] : applied.created) {
    utxo_.emplace(op, out);
    created_.insert(op);
  }
  for (const OutPoint& op : applied.spent) utxo_.erase(op);
  const std::size_t height = blocks_.size();
  for (std::size_t k = 0; k < applied.txids.size(); ++k) tx_index_.emplace(applied.txids[k], std::make_pair(height, k));
  fees_ += applied.fees;
  blocks_.push_back(block);
  hashes_.push_back(hash_block(block));
  head_arrival_tick_ = arrival_tick;
  return std::nullopt;
}

std::optional<TxOutput> GradChain::unspent(const OutPoint& op) const {
  if (auto it = utxo_.find(op); it != utxo_.end()) return it->second;
  return std::nullopt;
}

std::uint64_t GradChain::supply() const {
  std::uint64_t total = 0;
  for (const auto& [op, out] : utxo_) total += out.amount;
  return total;
}

std::uint64_t GradChain::balance(std::span<const std::uint8_t> pubkey) const {
  std::uint64_t total = 0;
  for (const auto& [op, out] : utxo_) {
    if (std::equal(out.recipient_pubkey.begin(), out.recipient_pubkey.end(), pubkey.begin(), pubkey.end())) {
      total += out.amount;
    }
  }
  return total;
}

const Transaction* GradChain::find_transaction(const Digest& txid) const {
  auto it = tx_index_.find(txid);
  if (it == tx_index_.end()) return nullptr;
  return &blocks_[it->second.first].transactions[it->second.second];
}

std::optional<VerifyFailure> reverify(std::span<const GradientBlock> blocks, const ChainParams& params) {
  if (blocks.empty() || blocks.front().encode() != genesis_block(params.dim).encode()) {
    return VerifyFailure{0, Rejection::kBadLink};
  }
  GradChain chain(params);
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    if (auto rej = chain.verify_and_append(blocks[i])) return VerifyFailure{i, *rej};
  }
  return std::nullopt;
}

std::vector<double> reconstruct_weights(std::span<const GradientBlock> blocks, std::span<const double> x0) {
  if (blocks.empty()) throw IntegrityError("chain has no genesis block");
  std::vector<Digest> hashes(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) hashes[i] = hash_block(blocks[i]);
  // Walk from the head back to genesis along prev_hash.
  for (std::size_t i = blocks.size() - 1; i > 0; --i) {
    if (blocks[i].prev_hash != hashes[i - 1]) {
      throw IntegrityError("broken prev_hash link at block " + std::to_string(i));
    }
  }
  if (blocks.front().prev_hash != Digest{}) throw IntegrityError("first block is not a genesis block");

  std::vector<double> x(x0.begin(), x0.end());
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    const auto& delta = blocks[i].delta_x;
    if (delta.size() != x.size()) throw IntegrityError("delta size mismatch at block " + std::to_string(i));
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += delta[k];
  }
  return x;
}

std::vector<double> reconstruct_weights(const GradChain& chain, std::span<const double> x0) {
  return reconstruct_weights(std::span<const GradientBlock>(chain.blocks()), x0);
}

const GradChain& resolve_fork(std::span<const GradChain* const> candidates) {
  if (candidates.empty()) throw ConfigError("resolve_fork needs at least one candidate");
  const GradChain* best = candidates.front();
  for (const GradChain* c : candidates) {
    if (c->hashes().front() != best->hashes().front()) {
      throw IntegrityError("fork candidates do not share a genesis block");
    }
  }
  for (const GradChain* c : candidates.subspan(1)) {
    if (c->length() != best->length()) {
      if (c->length() > best->length()) best = c;
      continue;
    }
    if (c->head_arrival_tick() != best->head_arrival_tick()) {
      if (c->head_arrival_tick() < best->head_arrival_tick()) best = c;
      continue;
    }
    if (c->head() < best->head()) best = c;
  }
  return *best;
}

Transaction sign_transaction(const GradChain& chain, const crypto::KeyPair& key, Transaction tx) {
  for (TxInput& in : tx.inputs) {
    const auto source = chain.unspent(OutPoint{in.prev_txid, in.output_index});
    if (!source) throw TransactionError("input references an unknown or spent output");
    if (source->recipient_pubkey != key.public_key) {
      throw TransactionError("input is not owned by the signing key");
    }
    in.spender_pubkey = key.public_key;
    in.signature.clear();
  }
  const Digest digest = tx.signing_digest();
  const Bytes sig = chain.params().scheme->sign(key, digest);
  for (TxInput& in : tx.inputs) in.signature = sig;
  return tx;
}

std::optional<Transaction> build_payment(const GradChain& chain, const crypto::KeyPair& payer,
                                         std::span<const std::uint8_t> payee, std::uint64_t amount,
                                         std::uint64_t fee, const std::set<OutPoint>* reserved) {
  const std::uint64_t needed = amount + fee;
  if (needed < amount) return std::nullopt;
  Transaction tx;
  std::uint64_t gathered = 0;
  for (const auto& [op, out] : chain.utxo()) {
    if (gathered >= needed && !tx.inputs.empty()) break;
    if (out.recipient_pubkey != payer.public_key || (reserved && reserved->count(op))) continue;
    tx.inputs.push_back(TxInput{op.txid, op.index, {}, payer.public_key});
    gathered += out.amount;
  }
  if (tx.inputs.empty() || gathered < needed) return std::nullopt;
  tx.outputs.push_back(TxOutput{amount, Bytes(payee.begin(), payee.end())});
  if (gathered > needed) tx.outputs.push_back(TxOutput{gathered - needed, payer.public_key});
  return sign_transaction(chain, payer, std::move(tx));
}

bool verify_coin_history(const GradChain& chain, const Digest& txid) {
  std::set<Digest> verified;
  std::function<bool(const Digest&)> visit = [&](const Digest& id) -> bool {
    if (verified.count(id)) return true;
    const Transaction* tx = chain.find_transaction(id);
    if (tx == nullptr) return false;
    if (!tx->is_coinbase()) {
      const Digest signing = tx->signing_digest();
      for (const TxInput& in : tx->inputs) {
        const Transaction* prev = chain.find_transaction(in.prev_txid);
        if (prev == nullptr || in.output_index >= prev->outputs.size()) return false;
        if (prev->outputs[in.output_index].recipient_pubkey != in.spender_pubkey) return false;
        if (!chain.params().scheme->verify(in.spender_pubkey, signing, in.signature)) return false;
        if (!visit(in.prev_txid)) return false;
      }
    }
    verified.insert(id);
    return true;
  };
  return visit(txid);
}

Bytes encode_chain_file(const GradChain& chain) {
  ByteWriter w;
  w.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("GCHN"), 4));
  w.u32(static_cast<std::uint32_t>(chain.length()));
  for (std::size_t i = 0; i < chain.length(); ++i) {
    w.raw(chain.hashes()[i]);
    w.bytes(chain.blocks()[i].encode());
  }
  return w.take();
}

GradChain decode_chain_file(std::span<const std::uint8_t> bytes, const ChainParams& params) {
  ByteReader r(bytes);
  const auto magic = r.raw(4);
  if (std::memcmp(magic.data(), "GCHN", 4) != 0) throw DecodeError("not a chain file");
  const std::uint32_t count = r.count(32 + 4);
  if (count == 0) throw DecodeError("chain file holds no blocks");
  GradChain chain(params);
  for (std::uint32_t i = 0; i < count; ++i) {
    const Digest recorded = r.digest();
    const Bytes raw = r.bytes();
    const GradientBlock block = decode_block(raw);
    if (hash_block(block) != recorded) {
      throw IntegrityError("block " + std::to_string(i) + " does not match its recorded hash");
    }
    if (i == 0) {
      if (recorded != chain.head()) throw IntegrityError("genesis block mismatch");
      continue;
    }
    if (auto rej = chain.verify_and_append(block)) {
      throw IntegrityError("block " + std::to_string(i) + " rejected: " + std::string(rejection_name(*rej)));
    }
  }
  if (!r.done()) throw DecodeError("trailing bytes after last block");
  return chain;
}

}  // namespace gradchain::chain
