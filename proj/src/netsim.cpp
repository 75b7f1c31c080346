#include "gradchain/netsim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <ostream>

#include "gradchain/error.hpp"
#include "json.hpp"

namespace gradchain::net {

using chain::Digest;
using chain::GradientBlock;
using chain::Transaction;
using json = nlohmann::ordered_json;

namespace {

double checked_rate_sum(std::span<const double> rates) {
  if (rates.empty()) throw ConfigError("hash rates must not be empty");
  double sum = 0.0;
  for (double r : rates) {
    if (!std::isfinite(r) || r < 0.0) throw ConfigError("hash rates must be finite and non-negative");
    sum += r;
  }
  if (!(sum > 0.0)) throw ConfigError("hash rates must have a positive sum");
  return sum;
}

bool bitwise_equal(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a(i)) != std::bit_cast<std::uint64_t>(b(i))) return false;
  }
  return true;
}

const SimConfig& validated(const SimConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

void SimConfig::validate() const {
  if (num_users < 1) throw ConfigError("num_users must be >= 1");
  if (!hash_rates.empty()) {
    if (hash_rates.size() != static_cast<std::size_t>(num_users)) {
      throw ConfigError("hash_rates needs one entry per user");
    }
    checked_rate_sum(hash_rates);
  }
  if (difficulty_bits < 0 || difficulty_bits > 32) throw ConfigError("difficulty must be in [0, 32]");
  if (adversary) {
    if (adversary->user < 0 || adversary->user >= num_users) throw ConfigError("adversary id out of range");
    if (adversary->depth < 1) throw ConfigError("adversary depth must be >= 1");
  }
  if (fed.num_users != num_users) throw ConfigError("fed.num_users must equal num_users");
  for (const ScheduledTx& s : tx_schedule) {
    if (s.payer < 0 || s.payer >= num_users || s.payee < 0 || s.payee >= num_users) {
      throw ConfigError("scheduled transaction names an unknown user");
    }
    if (s.amount == 0) throw ConfigError("scheduled transaction amount must be positive");
  }
  if (!std::isfinite(x0_scale) || x0_scale < 0.0) throw ConfigError("x0_scale must be finite and >= 0");
  if (max_mine_attempts == 0) throw ConfigError("max_mine_attempts must be positive");
}

std::vector<double> SimConfig::effective_rates() const {
  if (hash_rates.empty()) return std::vector<double>(static_cast<std::size_t>(num_users), 1.0);
  return hash_rates;
}

RaceResult pow_race(std::span<const double> hash_rates, int difficulty_bits, Rng& rng) {
  const double sum = checked_rate_sum(hash_rates);
  if (difficulty_bits < 0) throw ConfigError("difficulty must be >= 0");

  RaceResult out;
  const double u = rng.uniform() * sum;
  double cum = 0.0;
  out.winner = -1;
  for (std::size_t i = 0; i < hash_rates.size(); ++i) {
    if (hash_rates[i] <= 0.0) continue;
    cum += hash_rates[i];
    out.winner = static_cast<int>(i);
    if (u < cum) break;
  }

  const double p = std::min(1.0, std::ldexp(sum, -difficulty_bits));
  const double v = 1.0 - rng.uniform();  // (0, 1]
  if (p >= 1.0) {
    out.solve_ticks = 1;
  } else {
    const double k = std::floor(std::log(v) / std::log1p(-p));
    out.solve_ticks = 1 + static_cast<std::uint64_t>(std::min(k, 1e18));
  }
  return out;
}

std::string_view event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::kRoundStart: return "RoundStart";
    case EventKind::kTxBroadcast: return "TxBroadcast";
    case EventKind::kTxArrived: return "TxArrived";
    case EventKind::kBlockFound: return "BlockFound";
    case EventKind::kBlockArrived: return "BlockArrived";
  }
  return "Unknown";
}

Simulation::Simulation(const AttentionInstance& inst, SimConfig config, const fed::Constants* constants)
    : inst_(&inst),
      config_(std::move(config)),
      constants_(constants),
      trainer_(inst, validated(config_).fed),
      rates_(config_.effective_rates()) {
  const auto& scheme = crypto::ed25519();
  const chain::ChainParams params{config_.difficulty_bits, config_.block_reward, inst.dim(), &scheme};
  for (int u = 0; u < config_.num_users; ++u) {
    keys_.push_back(crypto::derive_keypair(scheme, config_.master_seed, static_cast<std::uint64_t>(u)));
    chains_.emplace_back(params);
  }
  mempools_.resize(static_cast<std::size_t>(config_.num_users));

  Rng rng(derive_seed(config_.master_seed, "x0"));
  x0_.resize(inst.dim());
  for (Eigen::Index i = 0; i < x0_.size(); ++i) x0_(i) = config_.x0_scale * rng.normal();
  x_ = x0_;
  trace_.rows.push_back(
      fed::make_trace_row(inst, x_, 0, -1, config_.fed.eta, trainer_.alpha(), constants_));
  f0_ = trace_.rows.front().f;
  trace_.sigma_sq = constants_ ? trainer_.heterogeneity(constants_->x_star)
                               : std::numeric_limits<double>::quiet_NaN();

  SimEvent start;
  start.kind = EventKind::kRoundStart;
  start.round = 1;
  push(start);
  for (std::size_t i = 0; i < config_.tx_schedule.size(); ++i) {
    SimEvent ev;
    ev.tick = config_.tx_schedule[i].tick;
    ev.kind = EventKind::kTxBroadcast;
    ev.actor = config_.tx_schedule[i].payer;
    ev.schedule_index = static_cast<int>(i);
    push(ev);
  }
}

void Simulation::push(SimEvent ev) {
  ev.seq = seq_++;
  queue_.push(std::move(ev));
}

void Simulation::submit_transaction(std::uint64_t tick, int sender, Transaction tx) {
  if (sender < 0 || sender >= config_.num_users) throw IndexError("sender is not a user");
  if (tick < now_) throw ConfigError("cannot submit a transaction in the past");
  SimEvent ev;
  ev.tick = tick;
  ev.kind = EventKind::kTxBroadcast;
  ev.actor = sender;
  ev.tx = std::make_shared<const Transaction>(std::move(tx));
  push(ev);
}

void Simulation::run_round() {
  const int target = rounds_completed_ + 1;
  while (rounds_completed_ < target) {
    if (queue_.empty()) throw IntegrityError("event queue drained before the round completed");
    SimEvent ev = queue_.top();
    queue_.pop();
    now_ = ev.tick;
    handle(ev);
  }
}

void Simulation::run() {
  while (rounds_completed_ < config_.fed.global_rounds) run_round();
}

void Simulation::handle(const SimEvent& ev) {
  switch (ev.kind) {
    case EventKind::kRoundStart:
      start_round(ev);
      break;
    case EventKind::kTxBroadcast:
      broadcast_tx(ev);
      break;
    case EventKind::kTxArrived:
      receive_tx(ev.actor, ev.tx, ev.tick);
      log(ev.tick, ev.kind, ev.actor, json{{"txid", crypto::to_hex(ev.tx->txid())}}.dump());
      break;
    case EventKind::kBlockFound: {
      if (auto rej = receive_block(ev.actor, *ev.block, ev.tick)) {
        throw IntegrityError("winner produced an invalid block: " + std::string(chain::rejection_name(*rej)));
      }
      const Digest hash = chains_[ev.actor].head();
      log(ev.tick, ev.kind, ev.actor,
          json{{"round", ev.round},
               {"height", chains_[ev.actor].length() - 1},
               {"hash", crypto::to_hex(hash)},
               {"nonce", ev.block->nonce},
               {"txs", ev.block->transactions.size()}}
              .dump());
      pending_arrivals_ = config_.num_users - 1;
      for (int u = 0; u < config_.num_users; ++u) {
        if (u == ev.actor) continue;
        SimEvent arr;
        arr.tick = ev.tick + config_.latency_ticks;
        arr.kind = EventKind::kBlockArrived;
        arr.actor = u;
        arr.round = ev.round;
        arr.block = ev.block;
        push(arr);
      }
      if (pending_arrivals_ == 0) finish_round(ev.round);
      break;
    }
    case EventKind::kBlockArrived: {
      if (auto rej = receive_block(ev.actor, *ev.block, ev.tick)) {
        log(ev.tick, ev.kind, ev.actor,
            json{{"round", ev.round}, {"status", std::string(chain::rejection_name(*rej))}}.dump());
      } else {
        log(ev.tick, ev.kind, ev.actor, json{{"round", ev.round}, {"status", "accepted"}}.dump());
      }
      if (--pending_arrivals_ == 0) finish_round(ev.round);
      break;
    }
  }
}

void Simulation::start_round(const SimEvent& ev) {
  const int t = ev.round;
  Rng race_rng(derive_seed(derive_seed(config_.master_seed, "race"), static_cast<std::uint64_t>(t)));
  const RaceResult race = pow_race(rates_, config_.difficulty_bits, race_rng);
  const int w = race.winner;
  const chain::GradChain& own = chains_[w];

  // The winner trains from the weights its own chain encodes.
  const std::vector<double> walked = chain::reconstruct_weights(own, std::span(x0_.data(), x0_.size()));
  const Vector x_chain = Eigen::Map<const Vector>(walked.data(), static_cast<Eigen::Index>(walked.size()));
  if (!bitwise_equal(x_chain, x_)) {
    throw IntegrityError("winner's chain does not reproduce the live weights in round " + std::to_string(t));
  }
  fed::RoundOutput out = trainer_.global_round(x_chain, t, w);

  std::vector<Transaction> included;
  json excluded = json::array();
  for (const auto& tx : mempools_[w]) {
    included.push_back(*tx);
    if (auto rej = own.admit(included)) {
      included.pop_back();
      excluded.push_back({{"txid", crypto::to_hex(tx->txid())}, {"reason", std::string(chain::rejection_name(*rej))}});
    }
  }
  std::uint64_t fees = 0;
  own.admit(included, &fees);

  auto block = std::make_shared<GradientBlock>();
  block->prev_hash = own.head();
  block->t_index = own.tip().t_index + 1;
  block->timestamp = ev.tick + race.solve_ticks;
  block->miner_pubkey = keys_[w].public_key;
  block->delta_x.assign(out.applied_delta.data(), out.applied_delta.data() + out.applied_delta.size());
  Transaction coinbase;
  coinbase.tag = block->t_index;
  coinbase.outputs.push_back(chain::TxOutput{config_.block_reward + fees, keys_[w].public_key});
  block->transactions.push_back(std::move(coinbase));
  for (auto& tx : included) block->transactions.push_back(std::move(tx));

  Rng nonce_rng(derive_seed(derive_seed(config_.master_seed, "nonce"), static_cast<std::uint64_t>(t)));
  const std::uint64_t nonce_start = nonce_rng.next_u64() >> 32;
  const auto nonce = chain::mine(*block, config_.difficulty_bits, nonce_start, config_.max_mine_attempts);
  if (!nonce) throw Error("mining budget exhausted in round " + std::to_string(t));
  block->nonce = *nonce;

  pending_x_ = std::move(out.x);
  pending_winner_ = w;

  log(ev.tick, EventKind::kRoundStart, w,
      json{{"round", t},
           {"winner", w},
           {"solve_ticks", race.solve_ticks},
           {"included", block->transactions.size() - 1},
           {"excluded", excluded}}
          .dump());

  SimEvent found;
  found.tick = block->timestamp;
  found.kind = EventKind::kBlockFound;
  found.actor = w;
  found.round = t;
  found.block = std::move(block);
  push(found);
}

void Simulation::broadcast_tx(const SimEvent& ev) {
  std::shared_ptr<const Transaction> tx = ev.tx;
  const int sender = ev.actor;
  if (!tx) {
    const ScheduledTx& s = config_.tx_schedule[static_cast<std::size_t>(ev.schedule_index)];
    std::set<chain::OutPoint> reserved;
    for (const auto& pending : mempools_[sender]) {
      for (const auto& in : pending->inputs) reserved.insert(chain::OutPoint{in.prev_txid, in.output_index});
    }
    auto built = chain::build_payment(chains_[sender], keys_[sender], keys_[s.payee].public_key, s.amount,
                                      s.fee, &reserved);
    if (!built) {
      log(ev.tick, ev.kind, sender,
          json{{"schedule", ev.schedule_index}, {"status", "unfunded"}}.dump());
      return;
    }
    tx = std::make_shared<const Transaction>(std::move(*built));
  }
  const Digest id = tx->txid();
  outcomes_.push_back(TxOutcome{id, sender, std::nullopt});
  receive_tx(sender, tx, ev.tick);
  json detail{{"txid", crypto::to_hex(id)}, {"outputs", tx->outputs.size()}};
  if (ev.schedule_index >= 0) detail["schedule"] = ev.schedule_index;
  log(ev.tick, ev.kind, sender, detail.dump());
  for (int u = 0; u < config_.num_users; ++u) {
    if (u == sender) continue;
    SimEvent arr;
    arr.tick = ev.tick + config_.latency_ticks;
    arr.kind = EventKind::kTxArrived;
    arr.actor = u;
    arr.tx = tx;
    push(arr);
  }
}

void Simulation::receive_tx(int user, const std::shared_ptr<const Transaction>& tx, std::uint64_t) {
  auto& pool = mempools_[user];
  const Digest id = tx->txid();
  if (chains_[user].find_transaction(id)) return;
  for (const auto& p : pool) {
    if (p->txid() == id) return;
  }
  pool.push_back(tx);
}

std::optional<chain::Rejection> Simulation::receive_block(int user, const GradientBlock& block,
                                                          std::uint64_t tick) {
  auto rej = chains_[user].verify_and_append(block, tick);
  if (!rej) prune_mempool(user);
  return rej;
}

void Simulation::prune_mempool(int user) {
  auto& pool = mempools_[user];
  const chain::GradChain& c = chains_[user];
  std::erase_if(pool, [&](const std::shared_ptr<const Transaction>& tx) {
    if (c.find_transaction(tx->txid())) return true;
    const auto rej = c.admit(std::span(tx.get(), 1));
    return rej == chain::Rejection::kDoubleSpend;
  });
}

void Simulation::finish_round(int round) {
  x_ = std::move(pending_x_);
  trace_.rows.push_back(fed::make_trace_row(*inst_, x_, round, pending_winner_, config_.fed.eta,
                                            trainer_.alpha(), constants_));
  fed::check_divergence(trace_.rows.back().f, f0_, round);

  const chain::GradChain& canon = canonical_chain();
  const std::size_t height = canon.length() - 1;
  for (const Transaction& tx : canon.tip().transactions) {
    const Digest id = tx.txid();
    for (TxOutcome& o : outcomes_) {
      if (!o.height && o.txid == id) o.height = height;
    }
  }

  rounds_completed_ = round;
  pending_winner_ = -1;
  SimEvent next;
  next.tick = now_;
  next.kind = EventKind::kRoundStart;
  next.round = round + 1;
  push(next);
}

const chain::GradChain& Simulation::chain_of(int user) const {
  if (user < 0 || user >= config_.num_users) throw IndexError("user out of range");
  return chains_[static_cast<std::size_t>(user)];
}

const chain::GradChain& Simulation::canonical_chain() const {
  std::vector<const chain::GradChain*> ptrs;
  for (const auto& c : chains_) ptrs.push_back(&c);
  return chain::resolve_fork(ptrs);
}

bool Simulation::heads_agree() const {
  return std::all_of(chains_.begin(), chains_.end(),
                     [&](const chain::GradChain& c) { return c.head() == chains_.front().head(); });
}

std::size_t Simulation::mempool_size(int user) const {
  if (user < 0 || user >= config_.num_users) throw IndexError("user out of range");
  return mempools_[static_cast<std::size_t>(user)].size();
}

void Simulation::log(std::uint64_t tick, EventKind kind, int actor, const std::string& detail_json) {
  json line{{"tick", tick},
            {"kind", std::string(event_kind_name(kind))},
            {"actor", actor},
            {"detail", json::parse(detail_json)}};
  log_.push_back(line.dump());
}

void Simulation::write_event_log(std::ostream& out) const {
  for (const auto& line : log_) out << line << '\n';
}

double RewriteResult::std_error() const {
  if (trials <= 0) return 0.0;
  const double p = rate();
  return std::sqrt(p * (1.0 - p) / trials);
}

RewriteResult adversary_rewrite(const SimConfig& config, int target_depth, int trials,
                                std::uint64_t tick_budget) {
  if (!config.adversary) throw ConfigError("adversary_rewrite needs an adversary");
  if (target_depth < 1) throw ConfigError("target depth must be >= 1");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  config.validate();
  const std::vector<double> rates = config.effective_rates();
  const int adv = config.adversary->user;
  const std::uint64_t base = derive_seed(config.master_seed, "rewrite");

  RewriteResult out;
  out.trials = trials;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(base, static_cast<std::uint64_t>(trial)));
    int honest = target_depth;
    int fork = 0;
    std::uint64_t elapsed = 0;
    while (true) {
      const RaceResult r = pow_race(rates, config.difficulty_bits, rng);
      elapsed += r.solve_ticks;
      if (elapsed > tick_budget) break;
      if (r.winner == adv) {
        ++fork;
      } else {
        ++honest;
      }
      if (fork > honest) {
        ++out.successes;
        break;
      }
    }
  }
  return out;
}

std::vector<double> rates_with_adversary_share(int num_users, int adversary, double share, double total) {
  if (num_users < 1 || adversary < 0 || adversary >= num_users) throw ConfigError("bad adversary id");
  if (!(share >= 0.0 && share <= 1.0)) throw ConfigError("share must be in [0, 1]");
  if (!(total > 0.0) || !std::isfinite(total)) throw ConfigError("total rate must be positive");
  if (num_users == 1 && share < 1.0) throw ConfigError("a lone adversary must hold the full share");
  std::vector<double> rates(static_cast<std::size_t>(num_users), 0.0);
  for (int u = 0; u < num_users; ++u) {
    rates[u] = u == adversary ? share * total : (1.0 - share) * total / (num_users - 1);
  }
  return rates;
}

std::vector<GridCell> rewrite_grid(const SimConfig& base, std::span<const double> shares,
                                   std::span<const int> depths, int trials) {
  if (!base.adversary) throw ConfigError("rewrite_grid needs an adversary");
  const std::vector<double> rates = base.effective_rates();
  const double total = std::accumulate(rates.begin(), rates.end(), 0.0);
  std::vector<GridCell> cells;
  for (double share : shares) {
    SimConfig cfg = base;
    cfg.hash_rates = rates_with_adversary_share(base.num_users, base.adversary->user, share, total);
    for (int depth : depths) cells.push_back(GridCell{share, depth, adversary_rewrite(cfg, depth, trials)});
  }
  return cells;
}

bool grid_is_monotone(std::span<const GridCell> cells, std::size_t num_shares, std::size_t num_depths,
                      double se_slack) {
  if (cells.size() != num_shares * num_depths) throw ConfigError("grid size mismatch");
  auto at = [&](std::size_t i, std::size_t k) -> const RewriteResult& { return cells[i * num_depths + k].result; };
  auto slack = [&](const RewriteResult& a, const RewriteResult& b) {
    return se_slack * std::hypot(a.std_error(), b.std_error());
  };
  for (std::size_t i = 0; i < num_shares; ++i) {
    for (std::size_t k = 0; k + 1 < num_depths; ++k) {
      if (at(i, k + 1).rate() > at(i, k).rate() + slack(at(i, k), at(i, k + 1))) return false;
    }
  }
  for (std::size_t k = 0; k < num_depths; ++k) {
    for (std::size_t i = 0; i + 1 < num_shares; ++i) {
      if (at(i + 1, k).rate() < at(i, k).rate() - slack(at(i, k), at(i + 1, k))) return false;
    }
  }
  return true;
}

}  // namespace gradchain::net
