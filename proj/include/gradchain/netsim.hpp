#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gradchain/chain.hpp"
#include "gradchain/fedopt.hpp"
#include "gradchain/rng.hpp"

namespace gradchain::net {

using attention::AttentionInstance;
using attention::Vector;

struct ScheduledTx {
  std::uint64_t tick = 0;
  int payer = 0;
  int payee = 0;
  std::uint64_t amount = 0;
  std::uint64_t fee = 0;
};

struct AdversaryConfig {
  int user = 0;
  int depth = 1;
};

struct SimConfig {
  int num_users = 1;
  // Non-negative, summing to a positive total; empty means 1.0 per user.
  std::vector<double> hash_rates;
  std::uint64_t latency_ticks = 1;
  int difficulty_bits = 8;
  std::uint64_t block_reward = 50;
  std::optional<AdversaryConfig> adversary;
  fed::FedConfig fed;
  std::vector<ScheduledTx> tx_schedule;
  std::uint64_t master_seed = 0;
  // x_0 entries are normal(0, x0_scale) draws.
  double x0_scale = 0.1;
  std::uint64_t max_mine_attempts = std::uint64_t{1} << 26;

  // Throws ConfigError on inconsistent fields.
  void validate() const;
  std::vector<double> effective_rates() const;
};

struct RaceResult {
  int winner = 0;
  std::uint64_t solve_ticks = 1;
};

// Winner drawn with probability rate_i / sum; solve time geometric on
// {1, 2, ...} with per-tick success min(1, sum * 2^-difficulty_bits).
RaceResult pow_race(std::span<const double> hash_rates, int difficulty_bits, Rng& rng);

enum class EventKind { kRoundStart, kTxBroadcast, kTxArrived, kBlockFound, kBlockArrived };

std::string_view event_kind_name(EventKind kind);

struct SimEvent {
  std::uint64_t tick = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::kRoundStart;
  int actor = -1;
  int round = 0;
  // Index into tx_schedule for scheduled payments, -1 otherwise.
  int schedule_index = -1;
  std::shared_ptr<const chain::Transaction> tx;
  std::shared_ptr<const chain::GradientBlock> block;
};

struct SimEventOrder {
  bool operator()(const SimEvent& a, const SimEvent& b) const {
    return a.tick != b.tick ? a.tick > b.tick : a.seq > b.seq;
  }
};

// What happened to a broadcast transaction.
struct TxOutcome {
  chain::Digest txid{};
  int sender = 0;
  // Height of the accepted block holding it, per the canonical chain.
  std::optional<std::size_t> height;
};

/// Discrete-event simulation of N users training together over a gradient
/// chain. Every user keeps its own GradChain and mempool; rounds run one
/// after another and the next round starts once the block has reached
/// everyone.
class Simulation {
 public:
  Simulation(const AttentionInstance& inst, SimConfig config, const fed::Constants* constants = nullptr);

  // Processes events until the next round has been mined and propagated.
  void run_round();
  // Runs the remaining rounds up to fed.global_rounds.
  void run();

  // Injects a prepared transaction that `sender` broadcasts at `tick`.
  void submit_transaction(std::uint64_t tick, int sender, chain::Transaction tx);

  int rounds_completed() const { return rounds_completed_; }
  std::uint64_t now() const { return now_; }
  const SimConfig& config() const { return config_; }
  const fed::FederatedTrainer& trainer() const { return trainer_; }
  const fed::TrainTrace& trace() const { return trace_; }
  const Vector& x0() const { return x0_; }
  // Weights after the last completed round.
  const Vector& weights() const { return x_; }
  const std::vector<crypto::KeyPair>& keys() const { return keys_; }
  const chain::GradChain& chain_of(int user) const;
  // resolve_fork over every user's chain.
  const chain::GradChain& canonical_chain() const;
  bool heads_agree() const;
  const std::vector<TxOutcome>& tx_outcomes() const { return outcomes_; }
  std::size_t mempool_size(int user) const;

  // JSON lines {tick, kind, actor, detail}.
  const std::vector<std::string>& event_log() const { return log_; }
  void write_event_log(std::ostream& out) const;

 private:
  void push(SimEvent ev);
  void handle(const SimEvent& ev);
  void start_round(const SimEvent& ev);
  void broadcast_tx(const SimEvent& ev);
  void receive_tx(int user, const std::shared_ptr<const chain::Transaction>& tx, std::uint64_t tick);
  std::optional<chain::Rejection> receive_block(int user, const chain::GradientBlock& block, std::uint64_t tick);
  void prune_mempool(int user);
  void finish_round(int round);
  void log(std::uint64_t tick, EventKind kind, int actor, const std::string& detail_json);

  const AttentionInstance* inst_;
  SimConfig config_;
  const fed::Constants* constants_;
  fed::FederatedTrainer trainer_;
  std::vector<double> rates_;
  std::vector<crypto::KeyPair> keys_;
  std::vector<chain::GradChain> chains_;
  std::vector<std::vector<std::shared_ptr<const chain::Transaction>>> mempools_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, SimEventOrder> queue_;
  std::uint64_t seq_ = 0;
  std::uint64_t now_ = 0;
  int rounds_completed_ = 0;
  int pending_arrivals_ = 0;
  Vector pending_x_;
  int pending_winner_ = -1;
  Vector x0_;
  Vector x_;
  double f0_ = 0.0;
  fed::TrainTrace trace_;
  std::vector<TxOutcome> outcomes_;
  std::vector<std::string> log_;
};

struct RewriteResult {
  int successes = 0;
  int trials = 0;
  double rate() const { return trials > 0 ? static_cast<double>(successes) / trials : 0.0; }
  // Binomial standard error of rate().
  double std_error() const;
};

inline constexpr std::uint64_t kRewriteTickBudget = 10000;

// Catch-up race: the honest branch starts target_depth blocks ahead of the
// adversary's private fork; each pow_race win extends the winner's branch. A
// trial succeeds once the fork is strictly longer, within the tick budget.
// Uses config.adversary->user, hash rates, difficulty and master_seed.
RewriteResult adversary_rewrite(const SimConfig& config, int target_depth, int trials,
                                std::uint64_t tick_budget = kRewriteTickBudget);

// Rates summing to `total`: the adversary holds `share`, the rest split evenly.
std::vector<double> rates_with_adversary_share(int num_users, int adversary, double share, double total);

struct GridCell {
  double share = 0.0;
  int depth = 0;
  RewriteResult result;
};

// One cell per (share, depth), shares outermost.
std::vector<GridCell> rewrite_grid(const SimConfig& base, std::span<const double> shares,
                                   std::span<const int> depths, int trials);

// Non-increasing in depth and non-decreasing in share, each comparison
// allowed `se_slack` standard errors of the difference.
bool grid_is_monotone(std::span<const GridCell> cells, std::size_t num_shares, std::size_t num_depths,
                      double se_slack = 2.0);

}  // namespace gradchain::net
