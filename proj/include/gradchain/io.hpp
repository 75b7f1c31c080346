#pragma once

#include <filesystem>
#include <string>

#include "gradchain/attention_loss.hpp"
#include "gradchain/chain.hpp"
#include "json.hpp"

namespace gradchain::io {

using nlohmann::json;

// 17 significant digits, "%.17g".
std::string format_double(double v);

// {"n", "d", "a1", "a2", "b", "w"} plus an optional "meta" object. Matrices
// are arrays of rows.
json instance_to_json(const attention::AttentionInstance& inst, const json& meta = nullptr);
// Throws ConfigError on missing fields or mismatched shapes.
attention::AttentionInstance instance_from_json(const json& j);

// Files. Write errors and unreadable paths throw IoError.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
json read_json(const std::filesystem::path& path);

attention::AttentionInstance load_instance(const std::filesystem::path& path);

// Chain persistence: params plus every block with hex digests and keys and
// its recorded hash. Doubles use the shortest round-trip form.
json chain_to_json(const chain::GradChain& chain);
// Re-encodes every block, checks it against the recorded hash and replays
// verify_and_append from genesis. Throws IntegrityError (with the block
// index) or DecodeError.
chain::GradChain chain_from_json(const json& j);

}  // namespace gradchain::io
