#include "gradchain/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gradchain/error.hpp"

namespace gradchain::io {

using attention::AttentionInstance;
using attention::Matrix;
using attention::Vector;

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  return j.at(key);
}

double number(const json& j, const char* what) {
  if (!j.is_number()) throw ConfigError(std::string(what) + " must be a number");
  return j.get<double>();
}

Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ConfigError(std::string(what) + " must have " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ConfigError(std::string(what) + " rows must have " + std::to_string(cols) + " entries");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(row[static_cast<std::size_t>(c)], what);
  }
  return m;
}

Vector vector_from_json(const json& j, Eigen::Index size, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size) {
    throw ConfigError(std::string(what) + " must have " + std::to_string(size) + " entries");
  }
  Vector v(size);
  for (Eigen::Index i = 0; i < size; ++i) v(i) = number(j[static_cast<std::size_t>(i)], what);
  return v;
}

// Chain JSON readers raise DecodeError: a malformed file is an integrity
// problem, not a configuration one.
template <typename T>
T chain_field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DecodeError(std::string("chain json: bad field '") + key + "': " + e.what());
  }
}

crypto::Bytes hex_field(const json& j, const char* key) {
  return crypto::from_hex(chain_field<std::string>(j, key));
}

crypto::Digest digest_field(const json& j, const char* key) {
  return crypto::digest_from_hex(chain_field<std::string>(j, key));
}

json tx_to_json(const chain::Transaction& tx) {
  json inputs = json::array();
  for (const auto& in : tx.inputs) {
    inputs.push_back({{"prev_txid", crypto::to_hex(in.prev_txid)},
                      {"index", in.output_index},
                      {"signature", crypto::to_hex(in.signature)},
                      {"pubkey", crypto::to_hex(in.spender_pubkey)}});
  }
  json outputs = json::array();
  for (const auto& out : tx.outputs) {
    outputs.push_back({{"amount", out.amount}, {"recipient", crypto::to_hex(out.recipient_pubkey)}});
  }
  return {{"tag", tx.tag}, {"inputs", inputs}, {"outputs", outputs}};
}

chain::Transaction tx_from_json(const json& j) {
  chain::Transaction tx;
  tx.tag = chain_field<std::uint64_t>(j, "tag");
  for (const json& in : chain_field<json>(j, "inputs")) {
    chain::TxInput t;
    t.prev_txid = digest_field(in, "prev_txid");
    t.output_index = chain_field<std::uint32_t>(in, "index");
    t.signature = hex_field(in, "signature");
    t.spender_pubkey = hex_field(in, "pubkey");
    tx.inputs.push_back(std::move(t));
  }
  for (const json& out : chain_field<json>(j, "outputs")) {
    tx.outputs.push_back(chain::TxOutput{chain_field<std::uint64_t>(out, "amount"), hex_field(out, "recipient")});
  }
  return tx;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json instance_to_json(const AttentionInstance& inst, const json& meta) {
  json j{{"n", inst.n()},
         {"d", inst.d()},
         {"a1", matrix_to_json(inst.a1())},
         {"a2", matrix_to_json(inst.a2())},
         {"b", vector_to_json(inst.b_target())},
         {"w", vector_to_json(inst.w())}};
  if (!meta.is_null()) j["meta"] = meta;
  return j;
}

AttentionInstance instance_from_json(const json& j) {
  const json& jn = field(j, "n");
  const json& jd = field(j, "d");
  if (!jn.is_number_integer() || !jd.is_number_integer()) throw ConfigError("n and d must be integers");
  const auto n = jn.get<long long>();
  const auto d = jd.get<long long>();
  if (n < 1 || d < 1 || n > 4096 || d > 4096) throw ConfigError("n and d must be in [1, 4096]");
  Matrix a1 = matrix_from_json(field(j, "a1"), n, d, "a1");
  Matrix a2 = matrix_from_json(field(j, "a2"), n, d, "a2");
  Vector b = vector_from_json(field(j, "b"), n * n, "b");
  Vector w = vector_from_json(field(j, "w"), n, "w");
  try {
    return AttentionInstance(std::move(a1), std::move(a2), std::move(b), std::move(w));
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

AttentionInstance load_instance(const std::filesystem::path& path) { return instance_from_json(read_json(path)); }

json chain_to_json(const chain::GradChain& c) {
  const chain::ChainParams& p = c.params();
  json blocks = json::array();
  for (std::size_t i = 0; i < c.length(); ++i) {
    const chain::GradientBlock& b = c.blocks()[i];
    json txs = json::array();
    for (const auto& tx : b.transactions) txs.push_back(tx_to_json(tx));
    blocks.push_back({{"hash", crypto::to_hex(c.hashes()[i])},
                      {"prev_hash", crypto::to_hex(b.prev_hash)},
                      {"nonce", b.nonce},
                      {"timestamp", b.timestamp},
                      {"t_index", b.t_index},
                      {"miner", crypto::to_hex(b.miner_pubkey)},
                      {"delta_x", b.delta_x},
                      {"transactions", txs}});
  }
  return {{"params",
           {{"difficulty_bits", p.difficulty_bits},
            {"block_reward", p.block_reward},
            {"dim", p.dim},
            {"scheme", std::string(p.scheme->name())}}},
          {"blocks", blocks}};
}

chain::GradChain chain_from_json(const json& j) {
  if (!j.is_object()) throw DecodeError("chain json must be an object");
  const json params_json = chain_field<json>(j, "params");
  chain::ChainParams params;
  params.difficulty_bits = chain_field<int>(params_json, "difficulty_bits");
  params.block_reward = chain_field<std::uint64_t>(params_json, "block_reward");
  params.dim = chain_field<int>(params_json, "dim");
  const auto scheme = chain_field<std::string>(params_json, "scheme");
  if (scheme != crypto::ed25519().name()) throw DecodeError("unsupported signature scheme '" + scheme + "'");
  params.scheme = &crypto::ed25519();
  if (params.dim < 1 || params.difficulty_bits < 0 || params.difficulty_bits > 32) {
    throw DecodeError("chain json: invalid params");
  }

  const json blocks = chain_field<json>(j, "blocks");
  if (!blocks.is_array() || blocks.empty()) throw DecodeError("chain json: no blocks");
  chain::GradChain out(params);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const json& bj = blocks[i];
    chain::GradientBlock b;
    b.prev_hash = digest_field(bj, "prev_hash");
    b.nonce = chain_field<std::uint64_t>(bj, "nonce");
    b.timestamp = chain_field<std::uint64_t>(bj, "timestamp");
    b.t_index = chain_field<std::uint64_t>(bj, "t_index");
    b.miner_pubkey = hex_field(bj, "miner");
    b.delta_x = chain_field<std::vector<double>>(bj, "delta_x");
    for (const json& tj : chain_field<json>(bj, "transactions")) b.transactions.push_back(tx_from_json(tj));

    const crypto::Digest recorded = digest_field(bj, "hash");
    if (chain::hash_block(b) != recorded) {
      throw IntegrityError("block " + std::to_string(i) + " does not match its recorded hash");
    }
    if (i == 0) {
      if (recorded != out.head()) throw IntegrityError("block 0 is not the genesis block");
      continue;
    }
    if (auto rej = out.verify_and_append(b)) {
      throw IntegrityError("block " + std::to_string(i) + " rejected: " + std::string(chain::rejection_name(*rej)));
    }
  }
  return out;
}

}  // namespace gradchain::io
