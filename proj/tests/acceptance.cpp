// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Reference values come from test-side oracles (oracles.hpp and
// the explicit loops below), never from the quantity under test.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "gradchain/attention_loss.hpp"
#include "gradchain/chain.hpp"
#include "gradchain/cli.hpp"
#include "gradchain/crypto.hpp"
#include "gradchain/error.hpp"
#include "gradchain/fedopt.hpp"
#include "gradchain/io.hpp"
#include "gradchain/netsim.hpp"
#include "gradchain/rng.hpp"
#include "gradchain/sketch.hpp"
#include "oracles.hpp"

namespace {

using namespace gradchain;
using attention::Matrix;
using attention::Vector;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Vector normal_vec(int dim, Rng& rng, double scale = 1.0) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = scale * rng.normal();
  return v;
}

bool bits_equal(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

// 1. Gradient against central differences of the straight-line loss.
Verdict gradient_fidelity() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = attention::random_instance(4, 3, 1000 + seed);
    const auto f = [&](const Vector& x) { return oracle::loss(inst.a1(), inst.a2(), inst.b_target(), inst.w(), x); };
    Rng rng(derive_seed(seed, "points"));
    for (int p = 0; p < 4; ++p) {
      const Vector x = p == 0 ? Vector::Zero(9) : normal_vec(9, rng, 0.5);
      const Vector g = attention::gradient(inst, x);
      worst = std::max(worst, oracle::rel_error(g, oracle::fd_gradient(f, x, 1e-5)));
    }
  }
  return {worst <= 1e-6, "max rel error " + fmt(worst) + " (limit 1e-06)"};
}

// 2. Hessian against central differences of the gradient, and symmetry.
Verdict hessian_fidelity() {
  double worst = 0.0;
  bool symmetric = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = attention::random_instance(4, 3, 1000 + seed);
    const auto g = [&](const Vector& x) { return attention::gradient(inst, x); };
    Rng rng(derive_seed(seed, "points"));
    for (int p = 0; p < 4; ++p) {
      const Vector x = p == 0 ? Vector::Zero(9) : normal_vec(9, rng, 0.5);
      const Matrix h = attention::hessian(inst, x);
      symmetric = symmetric && h == h.transpose();
      worst = std::max(worst, oracle::rel_error(h, oracle::fd_jacobian(g, x, 1e-5)));
    }
  }
  return {worst <= 1e-5 && symmetric,
          "max rel error " + fmt(worst) + " (limit 1e-05), exactly symmetric: " + (symmetric ? "yes" : "no")};
}

// 3. lambda_min of the Hessian on certificate-true generated instances.
Verdict strong_convexity() {
  const int sizes[][2] = {{4, 2}, {5, 2}, {6, 2}, {9, 3}, {4, 1}};
  double worst_margin = std::numeric_limits<double>::infinity();
  int instances = 0;
  for (std::uint64_t k = 0; k < 5; ++k) {
    const auto gen = cli::generate_instance(sizes[k][0], sizes[k][1], 500 + k);
    if (gen.meta["mu"].is_null()) return {false, "instance " + std::to_string(k) + " has no certificate"};
    const double mu = gen.meta["mu"].get<double>();
    const auto form = gen.meta["certificate"] == "per-block" ? attention::CertificateForm::kPerBlock
                                                             : attention::CertificateForm::kAggregate;
    if (!attention::strong_convexity_certificate(gen.instance, mu, form)) return {false, "certificate false"};
    ++instances;
    Rng rng(derive_seed(k, "x"));
    for (int p = 0; p < 10; ++p) {
      const Vector x = normal_vec(gen.instance.dim(), rng, 2.0);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(attention::hessian(gen.instance, x), Eigen::EigenvaluesOnly);
      worst_margin = std::min(worst_margin, eig.eigenvalues().minCoeff() - (mu - 1e-8));
    }
  }
  return {worst_margin >= 0.0, std::to_string(instances) + " instances, min(lambda_min - mu + 1e-8) = " + fmt(worst_margin)};
}

// 4. Matrix-side norms computed with plain Eigen products against the
// library's Kronecker form.
Verdict vectorization() {
  double worst = 0.0;
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const int n = 1 + static_cast<int>(rng.below(4));
    const int d = 1 + static_cast<int>(rng.below(2));
    const auto inst = attention::random_instance(n, d, 40 + k);
    const Vector x = normal_vec(d * d, rng);
    const Matrix X = oracle::mat_rows(x, d, d);
    const Matrix B = oracle::mat_rows(inst.b_target(), n, n);
    const Matrix M = inst.a1() * X * inst.a2().transpose();
    const Matrix A = attention::kron_matrix(inst);
    const Vector ax = A * x;
    const Vector& b = inst.b_target();

    // Part 1, entrywise.
    worst = std::max(worst, (oracle::vec_rows(M) - ax).lpNorm<Eigen::Infinity>() / (1.0 + ax.lpNorm<Eigen::Infinity>()));
    if (!attention::vec_identity_check(inst, x)) worst = std::max(worst, 1.0);
    // Part 2.
    worst = std::max(worst, oracle::rel_diff((M - B).norm(), (ax - b).norm()));
    // Part 3.
    const Matrix E = M.array().exp().matrix();
    const Vector ex = ax.array().exp().matrix();
    worst = std::max(worst, oracle::rel_diff((E - B).norm(), (ex - b).norm()));
    // Part 4: D(X) = diag(exp(M) 1), D(x) = D(X) (x) I_n.
    const Vector rows = E.rowwise().sum();
    const Matrix S = rows.cwiseInverse().asDiagonal() * E;
    Vector dx(n * n);
    for (int j = 0; j < n; ++j) {
      const double alpha = ex.segment(j * n, n).sum();
      dx.segment(j * n, n) = ex.segment(j * n, n) / alpha;
    }
    worst = std::max(worst, oracle::rel_diff((S - B).norm(), (dx - b).norm()));
    // The library's per-block softmax agrees with the matrix side too.
    for (int j = 0; j < n; ++j) {
      const Vector probs = attention::softmax_block(inst, x, j).probs;
      worst = std::max(worst, (probs - S.row(j).transpose()).lpNorm<Eigen::Infinity>());
    }
  }
  return {worst <= 1e-10, "max rel deviation " + fmt(worst) + " (limit 1e-10)"};
}

// 5. Coordinate-wise embedding, statistics accumulated here.
Verdict embedding() {
  struct Expect {
    sketch::Kind kind;
    double alpha;
    int s;
  };
  // a * dim / b with dim = 16, b = 4: Gaussian and CountSketch a = 3,
  // the rest a = 2.
  const Expect table[] = {{sketch::Kind::kGaussian, 12, 1},        {sketch::Kind::kSrht, 8, 1},
                          {sketch::Kind::kAms, 8, 1},              {sketch::Kind::kCountSketch, 12, 1},
                          {sketch::Kind::kSparseEmbeddingI, 8, 2}, {sketch::Kind::kSparseEmbeddingII, 8, 2}};
  const int dim = 16, b = 4, trials = 10000;
  Rng hr(55);
  const Vector h = normal_vec(dim, hr);
  bool ok = true;
  std::string detail;
  for (const auto& e : table) {
    Vector mean = Vector::Zero(dim), m2 = Vector::Zero(dim);
    double nmean = 0.0, nm2 = 0.0;
    double alpha = 0.0;
    for (int t = 0; t < trials; ++t) {
      const auto op = sketch::SketchOperator::make(e.kind, b, dim, derive_seed(77 + static_cast<int>(e.kind), t), e.s);
      alpha = op.alpha();
      const Vector y = op.desk(op.sk(h));
      const Vector dlt = y - mean;
      mean += dlt / (t + 1.0);
      m2 += dlt.cwiseProduct(y - mean);
      const double q = y.squaredNorm();
      const double dq = q - nmean;
      nmean += dq / (t + 1.0);
      nm2 += dq * (q - nmean);
    }
    const Vector se = (m2 / (trials - 1.0)).cwiseSqrt() / std::sqrt(static_cast<double>(trials));
    double z = 0.0;
    for (int i = 0; i < dim; ++i) z = std::max(z, std::abs(mean(i) - h(i)) / se(i));
    const double rel_se = std::sqrt(nm2 / (trials - 1.0)) / std::sqrt(static_cast<double>(trials)) / nmean;
    const double bound = (1.0 + e.alpha) * h.squaredNorm() * (1.0 + 5.0 * rel_se);
    const bool pass = alpha == e.alpha && z <= 4.0 && nmean <= bound;
    ok = ok && pass;
    detail += std::string(sketch::kind_name(e.kind)) + " z=" + fmt(z) + " E|y|^2/bound=" + fmt(nmean / bound) +
              (alpha == e.alpha ? "" : " alpha mismatch") + "; ";
  }
  return {ok, detail};
}

// 6. Averaged gap against the linear-rate bound.
Verdict convergence() {
  const auto gen = cli::generate_instance(6, 2, 1);
  if (gen.meta["mu"].is_null()) return {false, "instance not certificate-true"};
  const auto& inst = gen.instance;
  const auto c = fed::estimate_constants(inst, 200, 1.0, 8);
  const int b = (inst.dim() + 1) / 2;
  const double alpha = sketch::table_alpha(sketch::Kind::kGaussian, b, inst.dim());
  const int K = 4, T = 200;
  const double eta = fed::choose_eta(c.l_est, alpha, K);
  Rng xr(3);
  const Vector x0 = normal_vec(inst.dim(), xr, 0.5);
  const double init_sq = (x0 - c.x_star).squaredNorm();

  std::map<int, double> avg{{0, 0.0}, {50, 0.0}, {100, 0.0}, {200, 0.0}};
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    fed::FedConfig cfg;
    cfg.num_users = 3;
    cfg.local_steps = K;
    cfg.global_rounds = T;
    cfg.eta = eta;
    cfg.master_seed = 2024;
    cfg.sketch = fed::SketchConfig{sketch::Kind::kGaussian, b, 1, static_cast<std::uint64_t>(s), true};
    const fed::FederatedTrainer trainer(inst, cfg);
    if (trainer.alpha() != alpha) return {false, "alpha mismatch"};
    Rng race(derive_seed(static_cast<std::uint64_t>(s), "race"));
    const double rates[] = {1.0, 1.0, 1.0};
    std::vector<int> winners(T + 1);
    for (int t = 1; t <= T; ++t) winners[t] = net::pow_race(rates, 8, race).winner;
    const auto r = fed::run_training(trainer, x0, [&](int t) { return winners[t]; }, &c);
    for (auto& [t, v] : avg) v += r.trace.rows[t].gap / seeds;
  }
  bool ok = true;
  std::string detail = "eta=" + fmt(eta) + " ";
  for (const auto& [t, v] : avg) {
    const double bound = fed::convergence_bound(c.l_est, c.mu_est, eta, t, init_sq);
    ok = ok && v <= bound;
    detail += "T=" + std::to_string(t) + ": " + fmt(v) + " <= " + fmt(bound) + "; ";
  }
  return {ok, detail};
}

net::SimConfig sim_config(int users, int rounds, std::uint64_t seed, int k, double eta) {
  net::SimConfig cfg;
  cfg.num_users = users;
  cfg.difficulty_bits = 8;
  cfg.master_seed = seed;
  cfg.fed.num_users = users;
  cfg.fed.local_steps = k;
  cfg.fed.global_rounds = rounds;
  cfg.fed.eta = eta;
  cfg.fed.master_seed = seed;
  return cfg;
}

// 7. Reductions: plain gradient descent and exact-recovery sketching.
Verdict reductions() {
  const auto gen = cli::generate_instance(6, 2, 2);
  const auto& inst = gen.instance;
  const double eta = 0.02;
  const int T = 60;

  net::Simulation plain(inst, sim_config(1, T, 17, 1, eta));
  plain.run();
  Vector x = plain.x0();
  bool bitwise = true;
  for (int t = 1; t <= T; ++t) {
    x = x - eta * attention::gradient(inst, x);
    bitwise = bitwise && bits_equal(plain.trace().rows[t].f, attention::loss(inst, x).total);
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) bitwise = bitwise && bits_equal(plain.weights()(i), x(i));

  net::SimConfig base = sim_config(3, T, 18, 4, eta);
  net::Simulation exact(inst, base);
  net::SimConfig sk = base;
  sk.fed.sketch = fed::SketchConfig{sketch::Kind::kCountSketch, inst.dim(), 1,
                                    sketch::find_injective_countsketch_seed(inst.dim(), 0), false};
  net::Simulation sketched(inst, sk);
  exact.run();
  sketched.run();
  double dev = (exact.weights() - sketched.weights()).lpNorm<Eigen::Infinity>();
  for (int t = 0; t <= T; ++t) dev = std::max(dev, std::abs(exact.trace().rows[t].f - sketched.trace().rows[t].f));
  return {bitwise && dev <= 1e-12,
          std::string("gradient descent bit-for-bit: ") + (bitwise ? "yes" : "no") +
              ", injective CountSketch max deviation " + fmt(dev)};
}

// 8. 200-block chain: replay, byte-flip fuzzing, exact reconstruction.
Verdict chain_integrity() {
  const auto inst = attention::random_instance(6, 2, 9);
  net::SimConfig cfg = sim_config(4, 200, 31, 2, 0.01);
  cfg.fed.sketch = fed::SketchConfig{sketch::Kind::kSrht, 2, 1, 5, true};
  for (int i = 0; i < 40; ++i) {
    cfg.tx_schedule.push_back(net::ScheduledTx{static_cast<std::uint64_t>(300 + 400 * i), i % 4, (i + 1) % 4, 9, 1});
  }
  net::Simulation sim(inst, cfg);
  sim.run();
  const chain::GradChain& c = sim.canonical_chain();
  if (c.length() != 201) return {false, "chain length " + std::to_string(c.length())};
  if (chain::reverify(c.blocks(), c.params())) return {false, "honest chain failed re-verification"};

  const auto bytes = chain::encode_chain_file(c);
  bool round_trip = false;
  try {
    round_trip = chain::decode_chain_file(bytes, c.params()).head() == c.head();
  } catch (const Error&) {
  }
  Rng rng(8);
  int caught = 0;
  const int flips = 500;
  for (int i = 0; i < flips; ++i) {
    auto corrupt = bytes;
    corrupt[rng.below(corrupt.size())] ^= static_cast<std::uint8_t>(1 + rng.below(255));
    try {
      chain::decode_chain_file(corrupt, c.params());
    } catch (const IntegrityError&) {
      ++caught;
    } catch (const DecodeError&) {
      ++caught;
    }
  }
  const auto rebuilt = chain::reconstruct_weights(c, std::span(sim.x0().data(), sim.x0().size()));
  bool exact = static_cast<Eigen::Index>(rebuilt.size()) == sim.weights().size();
  for (std::size_t i = 0; exact && i < rebuilt.size(); ++i) exact = bits_equal(rebuilt[i], sim.weights()(i));
  std::size_t txs = 0;
  for (const auto& blk : c.blocks()) txs += blk.transactions.empty() ? 0 : blk.transactions.size() - 1;
  return {round_trip && caught == flips && exact,
          "replay ok, " + std::to_string(txs) + " payments, flips caught " + std::to_string(caught) + "/" +
              std::to_string(flips) + ", reconstruction 0 ulp: " + (exact ? "yes" : "no")};
}

// 9. Scripted double spends against an independently tracked ledger.
chain::Transaction spend(const crypto::KeyPair& owner, const chain::Digest& txid, std::uint32_t index,
                         std::uint64_t amount, const crypto::Bytes& payee, int dup_inputs = 1) {
  chain::Transaction tx;
  for (int k = 0; k < dup_inputs; ++k) tx.inputs.push_back(chain::TxInput{txid, index, {}, owner.public_key});
  tx.outputs.push_back(chain::TxOutput{amount, payee});
  const auto digest = tx.signing_digest();
  for (auto& in : tx.inputs) in.signature = crypto::ed25519().sign(owner, digest);
  return tx;
}

chain::GradientBlock block_on(const chain::GradChain& c, const crypto::KeyPair& miner,
                              std::vector<chain::Transaction> txs) {
  chain::GradientBlock b;
  b.prev_hash = c.head();
  b.timestamp = c.tip().timestamp + 1;
  b.t_index = c.tip().t_index + 1;
  b.miner_pubkey = miner.public_key;
  b.delta_x.assign(static_cast<std::size_t>(c.params().dim), 0.0);
  // The coinbase collects the fees; an invalid body leaves them at zero and
  // the block is then rejected for its transactions, not its coinbase.
  std::uint64_t fees = 0;
  if (c.admit(txs, &fees)) fees = 0;
  chain::Transaction cb;
  cb.tag = c.length();
  cb.outputs.push_back(chain::TxOutput{c.params().block_reward + fees, miner.public_key});
  b.transactions.push_back(cb);
  for (auto& t : txs) b.transactions.push_back(std::move(t));
  b.nonce = *chain::mine(b, c.params().difficulty_bits, 0, 1u << 24);
  return b;
}

Verdict ledger_safety() {
  const auto& scheme = crypto::ed25519();
  int rejected = 0, conserved = 0;
  const int scenarios = 100;
  for (int s = 0; s < scenarios; ++s) {
    Rng rng(derive_seed(900, static_cast<std::uint64_t>(s)));
    std::vector<crypto::KeyPair> keys;
    for (int u = 0; u < 4; ++u) keys.push_back(crypto::derive_keypair(scheme, 900 + s, u));
    chain::ChainParams params;
    params.difficulty_bits = 4;
    params.dim = 2;
    chain::GradChain c(params);
    // Independent ledger: outpoint -> amount.
    std::map<std::pair<chain::Digest, std::uint32_t>, std::uint64_t> ledger;
    auto track = [&](const chain::GradientBlock& b) {
      for (const auto& tx : b.transactions) {
        for (const auto& in : tx.inputs) ledger.erase({in.prev_txid, in.output_index});
        for (std::uint32_t i = 0; i < tx.outputs.size(); ++i) ledger[{tx.txid(), i}] = tx.outputs[i].amount;
      }
    };
    auto append = [&](const chain::GradientBlock& b) {
      if (c.verify_and_append(b)) return false;
      track(b);
      return true;
    };

    const int payer = static_cast<int>(rng.below(4));
    bool ok = append(block_on(c, keys[payer], {}));
    for (int k = 0; k < static_cast<int>(rng.below(3)); ++k) ok = ok && append(block_on(c, keys[rng.below(4)], {}));
    const chain::Digest coin = c.blocks()[1].transactions[0].txid();
    const auto a = keys[(payer + 1) % 4].public_key;
    const auto bpk = keys[(payer + 2) % 4].public_key;

    std::optional<chain::Rejection> verdict;
    switch (s % 3) {
      case 0:  // both conflicting payments in one block
        verdict = c.verify_and_append(block_on(c, keys[0], {spend(keys[payer], coin, 0, 30, a), spend(keys[payer], coin, 0, 40, bpk)}));
        break;
      case 1: {  // second payment in a later block
        ok = ok && append(block_on(c, keys[1], {spend(keys[payer], coin, 0, 30, a)}));
        for (int k = 0; k < static_cast<int>(rng.below(3)); ++k) ok = ok && append(block_on(c, keys[2], {}));
        verdict = c.verify_and_append(block_on(c, keys[3], {spend(keys[payer], coin, 0, 40, bpk)}));
        break;
      }
      default:  // the same input listed twice in one transaction
        verdict = c.verify_and_append(block_on(c, keys[0], {spend(keys[payer], coin, 0, 90, a, 2)}));
        break;
    }
    if (ok && verdict == chain::Rejection::kDoubleSpend) ++rejected;
    ok = ok && append(block_on(c, keys[0], {}));
    std::uint64_t sum = 0;
    for (const auto& [op, amount] : ledger) sum += amount;
    if (ok && sum == params.block_reward * (c.length() - 1) && c.supply() == sum) ++conserved;
  }
  return {rejected == scenarios && conserved == scenarios,
          "double-spend rejections " + std::to_string(rejected) + "/" + std::to_string(scenarios) +
              ", supply == reward x blocks in " + std::to_string(conserved) + "/" + std::to_string(scenarios)};
}

// 10. Mean attempts at difficulty 8 over seeded templates.
Verdict pow_statistics() {
  double total = 0.0;
  const int templates = 100;
  for (int k = 0; k < templates; ++k) {
    Rng rng(derive_seed(10, static_cast<std::uint64_t>(k)));
    chain::GradientBlock b;
    for (auto& byte : b.prev_hash) byte = static_cast<std::uint8_t>(rng.below(256));
    b.timestamp = rng.below(1000);
    b.t_index = 1;
    b.miner_pubkey = crypto::Bytes(32, static_cast<std::uint8_t>(k));
    b.delta_x = {rng.normal(), rng.normal()};
    const auto nonce = chain::mine(b, 8, 0, 1u << 20);
    if (!nonce) return {false, "template " + std::to_string(k) + " not solved"};
    b.nonce = *nonce;
    if (crypto::leading_zero_bits(crypto::sha256(b.encode())) < 8) return {false, "nonce does not meet target"};
    total += static_cast<double>(*nonce + 1);
  }
  const double mean = total / templates;
  return {mean >= 128 && mean <= 512, "mean attempts " + fmt(mean) + " (expected 256, window [128, 512])"};
}

// 11. Rewrite race: single point and a 3x3 grid, monotonicity checked here.
Verdict safe_system() {
  net::SimConfig cfg = sim_config(4, 1, 11, 1, 0.1);
  cfg.adversary = net::AdversaryConfig{0, 6};
  cfg.hash_rates = net::rates_with_adversary_share(4, 0, 0.3, 4.0);
  const auto point = net::adversary_rewrite(cfg, 6, 200);

  const double shares[] = {0.2, 0.3, 0.4};
  const int depths[] = {1, 3, 6};
  const auto cells = net::rewrite_grid(cfg, shares, depths, 200);
  auto cell = [&](int si, int di) { return cells[static_cast<std::size_t>(si * 3 + di)].result; };
  auto se = [](const net::RewriteResult& r) {
    const double p = static_cast<double>(r.successes) / r.trials;
    return std::sqrt(p * (1 - p) / r.trials);
  };
  auto rate = [](const net::RewriteResult& r) { return static_cast<double>(r.successes) / r.trials; };
  bool monotone = true;
  for (int si = 0; si < 3; ++si) {
    for (int di = 0; di < 3; ++di) {
      if (di + 1 < 3) {
        const auto a = cell(si, di), b = cell(si, di + 1);
        monotone = monotone && rate(b) <= rate(a) + 2 * std::hypot(se(a), se(b));
      }
      if (si + 1 < 3) {
        const auto a = cell(si, di), b = cell(si + 1, di);
        monotone = monotone && rate(b) >= rate(a) - 2 * std::hypot(se(a), se(b));
      }
    }
  }
  std::string grid;
  for (int si = 0; si < 3; ++si) {
    grid += "[";
    for (int di = 0; di < 3; ++di) grid += fmt(rate(cell(si, di))) + (di < 2 ? " " : "");
    grid += "]";
  }
  return {point.rate() <= 0.05 && monotone,
          "share 0.3 depth 6 rate " + fmt(point.rate()) + " (limit 0.05), grid " + grid + " monotone: " +
              (monotone ? "yes" : "no")};
}

// 12. Two train runs with one config produce identical bytes.
Verdict determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "gradchain_acceptance";
  std::filesystem::create_directories(dir);
  const auto cfg_path = dir / "config.json";
  io::write_text(cfg_path, nlohmann::json{{"rounds", 30},
                                           {"users", 3},
                                           {"sketch", {{"kind", "gaussian"}, {"b", 2}}},
                                           {"transactions", {{{"tick", 600}, {"payer", 0}, {"payee", 1}, {"amount", 10}}}}}
                               .dump());
  std::string heads[2];
  std::string traces[2];
  for (int run = 0; run < 2; ++run) {
    const auto out = dir / ("run" + std::to_string(run));
    std::ostringstream so, se;
    const int code = cli::run({"gradchain-sim", "train", "--config", cfg_path.string(), "--out", out.string()}, so, se);
    if (code != 0) return {false, "train exited " + std::to_string(code) + ": " + se.str()};
    traces[run] = io::read_text(out / "trace.csv");
    heads[run] = io::read_json(out / "summary.json")["head"].get<std::string>();
    if (run == 1 && io::read_text(dir / "run0" / "events.jsonl") != io::read_text(out / "events.jsonl")) {
      return {false, "event logs differ"};
    }
  }
  return {traces[0] == traces[1] && heads[0] == heads[1] && !traces[0].empty(),
          "trace bytes identical: " + std::string(traces[0] == traces[1] ? "yes" : "no") + ", head " +
              heads[0].substr(0, 16) + "..."};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> check;
  };
  const Criterion criteria[] = {
      {1, "gradient fidelity", gradient_fidelity},   {2, "hessian fidelity", hessian_fidelity},
      {3, "strong convexity", strong_convexity},     {4, "vectorization equivalences", vectorization},
      {5, "coordinate-wise embedding", embedding},   {6, "convergence bound", convergence},
      {7, "exact reductions", reductions},           {8, "chain integrity", chain_integrity},
      {9, "ledger safety", ledger_safety},           {10, "pow statistics", pow_statistics},
      {11, "safe system", safe_system},              {12, "determinism", determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << v.detail
              << " [" << fmt(secs) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
