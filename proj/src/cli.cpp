#include "gradchain/cli.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <initializer_list>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "gradchain/error.hpp"
#include "gradchain/fedopt.hpp"
#include "gradchain/io.hpp"
#include "gradchain/sketch.hpp"

namespace gradchain::cli {

using attention::AttentionInstance;
using attention::Matrix;
using attention::Vector;

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& target) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::optional<fed::SketchConfig> sketch_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  reject_unknown_keys(j, {"kind", "b", "s", "seed", "per_round"}, "sketch");
  fed::SketchConfig sc;
  std::string kind = "gaussian";
  read_opt(j, "kind", kind);
  sc.kind = sketch::parse_kind(kind);
  read_opt(j, "b", sc.b_sketch);
  read_opt(j, "s", sc.s);
  read_opt(j, "seed", sc.seed);
  read_opt(j, "per_round", sc.per_round);
  return sc;
}

json sketch_to_json(const std::optional<fed::SketchConfig>& sc) {
  if (!sc) return nullptr;
  return {{"kind", std::string(sketch::kind_name(sc->kind))},
          {"b", sc->b_sketch},
          {"s", sc->s},
          {"seed", sc->seed},
          {"per_round", sc->per_round}};
}

void set_master_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.sim.master_seed = seed;
  cfg.sim.fed.master_seed = seed;
}

void set_users(RunConfig& cfg, int users) {
  cfg.sim.num_users = users;
  cfg.sim.fed.num_users = users;
}

AttentionInstance resolve_instance(const RunConfig& cfg) {
  if (!cfg.instance_path.empty()) return io::load_instance(cfg.instance_path);
  return generate_instance(cfg.n, cfg.d, cfg.instance_seed).instance;
}

bool bitwise_equal(std::span<const double> a, const Vector& b) {
  if (static_cast<Eigen::Index>(a.size()) != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b(static_cast<Eigen::Index>(i)))) {
      return false;
    }
  }
  return true;
}

// Probability that a q-share attacker ever overtakes a lead of `depth`
// blocks in an unbounded race.
double catch_up_probability(double share, int depth) {
  if (share >= 0.5) return 1.0;
  if (share <= 0.0) return 0.0;
  return std::pow(share / (1.0 - share), depth + 1);
}

json rewrite_json(double share, int depth, const net::RewriteResult& r) {
  return {{"share", share},
          {"depth", depth},
          {"trials", r.trials},
          {"successes", r.successes},
          {"success_rate", r.rate()},
          {"std_error", r.std_error()},
          {"unbounded_race_probability", catch_up_probability(share, depth)}};
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  set_users(cfg, 3);
  cfg.sim.fed.local_steps = 4;
  cfg.sim.fed.global_rounds = 20;
  cfg.sim.fed.eta = 0.0;
  set_master_seed(cfg, 42);
  return cfg;
}

RunConfig parse_run_config(const json& j) {
  reject_unknown_keys(j,
                      {"instance", "seed", "users", "hash_rates", "latency", "difficulty", "block_reward",
                       "local_steps", "rounds", "eta", "sketch", "scale_payload_by_eta", "x0_scale",
                       "transactions", "adversary", "estimate", "out", "max_mine_attempts"},
                      "config");
  RunConfig cfg = default_run_config();
  if (j.contains("instance")) {
    const json& inst = j.at("instance");
    reject_unknown_keys(inst, {"path", "n", "d", "seed"}, "instance");
    read_opt(inst, "path", cfg.instance_path);
    read_opt(inst, "n", cfg.n);
    read_opt(inst, "d", cfg.d);
    read_opt(inst, "seed", cfg.instance_seed);
  }
  std::uint64_t seed = cfg.sim.master_seed;
  read_opt(j, "seed", seed);
  set_master_seed(cfg, seed);
  int users = cfg.sim.num_users;
  read_opt(j, "users", users);
  set_users(cfg, users);
  read_opt(j, "hash_rates", cfg.sim.hash_rates);
  read_opt(j, "latency", cfg.sim.latency_ticks);
  read_opt(j, "difficulty", cfg.sim.difficulty_bits);
  read_opt(j, "block_reward", cfg.sim.block_reward);
  read_opt(j, "local_steps", cfg.sim.fed.local_steps);
  read_opt(j, "rounds", cfg.sim.fed.global_rounds);
  read_opt(j, "eta", cfg.sim.fed.eta);
  if (j.contains("sketch")) cfg.sim.fed.sketch = sketch_from_json(j.at("sketch"));
  read_opt(j, "scale_payload_by_eta", cfg.sim.fed.scale_payload_by_eta);
  read_opt(j, "x0_scale", cfg.sim.x0_scale);
  read_opt(j, "max_mine_attempts", cfg.sim.max_mine_attempts);
  if (j.contains("transactions")) {
    if (!j.at("transactions").is_array()) throw ConfigError("transactions must be an array");
    for (const json& t : j.at("transactions")) {
      reject_unknown_keys(t, {"tick", "payer", "payee", "amount", "fee"}, "transaction");
      net::ScheduledTx s;
      read_opt(t, "tick", s.tick);
      read_opt(t, "payer", s.payer);
      read_opt(t, "payee", s.payee);
      read_opt(t, "amount", s.amount);
      read_opt(t, "fee", s.fee);
      cfg.sim.tx_schedule.push_back(s);
    }
  }
  if (j.contains("adversary") && !j.at("adversary").is_null()) {
    const json& a = j.at("adversary");
    reject_unknown_keys(a, {"user", "depth"}, "adversary");
    net::AdversaryConfig adv;
    read_opt(a, "user", adv.user);
    read_opt(a, "depth", adv.depth);
    cfg.sim.adversary = adv;
  }
  if (j.contains("estimate")) {
    const json& e = j.at("estimate");
    reject_unknown_keys(e, {"samples", "radius"}, "estimate");
    read_opt(e, "samples", cfg.estimate_samples);
    read_opt(e, "radius", cfg.estimate_radius);
  }
  read_opt(j, "out", cfg.out_dir);
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  json instance = cfg.instance_path.empty()
                      ? json{{"n", cfg.n}, {"d", cfg.d}, {"seed", cfg.instance_seed}}
                      : json{{"path", cfg.instance_path}};
  json txs = json::array();
  for (const auto& s : cfg.sim.tx_schedule) {
    txs.push_back({{"tick", s.tick}, {"payer", s.payer}, {"payee", s.payee}, {"amount", s.amount}, {"fee", s.fee}});
  }
  json adversary = nullptr;
  if (cfg.sim.adversary) adversary = {{"user", cfg.sim.adversary->user}, {"depth", cfg.sim.adversary->depth}};
  return {{"instance", instance},
          {"seed", cfg.sim.master_seed},
          {"users", cfg.sim.num_users},
          {"hash_rates", cfg.sim.hash_rates},
          {"latency", cfg.sim.latency_ticks},
          {"difficulty", cfg.sim.difficulty_bits},
          {"block_reward", cfg.sim.block_reward},
          {"local_steps", cfg.sim.fed.local_steps},
          {"rounds", cfg.sim.fed.global_rounds},
          {"eta", cfg.sim.fed.eta},
          {"sketch", sketch_to_json(cfg.sim.fed.sketch)},
          {"scale_payload_by_eta", cfg.sim.fed.scale_payload_by_eta},
          {"x0_scale", cfg.sim.x0_scale},
          {"max_mine_attempts", cfg.sim.max_mine_attempts},
          {"transactions", txs},
          {"adversary", adversary},
          {"estimate", {{"samples", cfg.estimate_samples}, {"radius", cfg.estimate_radius}}},
          {"out", cfg.out_dir}};
}

std::optional<fed::SketchConfig> parse_sketch_flag(const std::string& text) {
  if (text == "none") return std::nullopt;
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("--sketch expects kind:b or none");
  fed::SketchConfig sc;
  sc.kind = sketch::parse_kind(text.substr(0, colon));
  const std::string b = text.substr(colon + 1);
  std::size_t used = 0;
  try {
    sc.b_sketch = std::stoi(b, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (b.empty() || used != b.size() || sc.b_sketch < 1) throw ConfigError("--sketch b must be a positive integer");
  return sc;
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) set_master_seed(cfg, *o.seed);
  if (o.rounds) cfg.sim.fed.global_rounds = *o.rounds;
  if (o.sketch) cfg.sim.fed.sketch = parse_sketch_flag(*o.sketch);
  if (o.difficulty) cfg.sim.difficulty_bits = *o.difficulty;
  if (o.out) cfg.out_dir = *o.out;
}

GeneratedInstance generate_instance(int n, int d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw ConfigError("n and d must be >= 1");
  GeneratedInstance g{attention::random_instance(n, d, seed), json::object()};
  json& meta = g.meta;
  meta["seed"] = seed;

  bool per_block = true;
  try {
    attention::certified_mu(g.instance, attention::CertificateForm::kPerBlock);
  } catch (const CertificateInapplicable&) {
    per_block = false;
  }
  meta["per_block_applicable"] = per_block;

  if (n < d * d) {
    meta["certificate"] = "inapplicable";
    meta["reason"] = "n < d^2";
    meta["mu"] = nullptr;
    return g;
  }
  const auto form = per_block ? attention::CertificateForm::kPerBlock : attention::CertificateForm::kAggregate;
  double mu = 0.0;
  try {
    mu = attention::certified_mu(g.instance, form);
  } catch (const CertificateInapplicable& e) {
    meta["certificate"] = "inapplicable";
    meta["reason"] = e.what();
    meta["mu"] = nullptr;
    return g;
  }
  if (!(mu > 0.0)) {
    meta["certificate"] = "inapplicable";
    meta["reason"] = "min w^2 <= 4";
    meta["mu"] = nullptr;
    return g;
  }
  meta["certificate"] = per_block ? "per-block" : "aggregate";
  // Strictly inside the certified range so the check is not decided by rounding.
  meta["mu"] = 0.99 * mu;
  return g;
}

bool GradcheckReport::passed() const {
  return grad_error <= kGradTolerance && (!hessian_checked || hess_error <= kHessTolerance);
}

GradcheckReport gradcheck(const AttentionInstance& inst, std::uint64_t seed, int points, bool corrupt_gradient) {
  if (points < 0) throw ConfigError("points must be >= 0");
  const int dim = inst.dim();
  std::vector<Vector> xs{Vector::Zero(dim)};
  Rng rng(seed);
  for (int p = 0; p < points; ++p) {
    Vector x(dim);
    for (int i = 0; i < dim; ++i) x(i) = 0.5 * rng.normal();
    xs.push_back(std::move(x));
  }

  GradcheckReport rep;
  rep.hessian_checked = dim <= attention::kDefaultHessianMaxDim;
  const double h = kFdStep;
  for (std::size_t p = 0; p < xs.size(); ++p) {
    const Vector& x = xs[p];
    Vector g = attention::gradient(inst, x);
    if (corrupt_gradient) g(0) += 1e-3;
    Vector fd(dim);
    Matrix fd_hess(dim, dim);
    for (int i = 0; i < dim; ++i) {
      Vector xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      fd(i) = (attention::loss(inst, xp).total - attention::loss(inst, xm).total) / (2 * h);
      if (rep.hessian_checked) {
        fd_hess.col(i) = (attention::gradient(inst, xp) - attention::gradient(inst, xm)) / (2 * h);
      }
    }
    const Vector diff = g - fd;
    const double e = diff.norm() / (1.0 + g.norm());
    if (e > rep.grad_error || rep.grad_point < 0) {
      rep.grad_error = e;
      rep.grad_point = static_cast<int>(p);
      diff.cwiseAbs().maxCoeff(&rep.grad_coord);
    }
    if (!rep.hessian_checked) continue;
    const Matrix hess = attention::hessian(inst, x);
    const Matrix hdiff = hess - fd_hess;
    const double eh = hdiff.norm() / (1.0 + hess.norm());
    if (eh > rep.hess_error || rep.hess_point < 0) {
      rep.hess_error = eh;
      rep.hess_point = static_cast<int>(p);
      hdiff.cwiseAbs().maxCoeff(&rep.hess_row, &rep.hess_col);
    }
  }
  return rep;
}

json TrainSummary::to_json() const {
  return {{"final_gap", final_gap},
          {"bound", bound},
          {"bound_holds", bound_holds},
          {"reconstruct_matches", reconstruct_matches},
          {"heads_agree", heads_agree},
          {"head", head_hex},
          {"l_est", constants.l_est},
          {"mu_est", constants.mu_est},
          {"f_star", constants.f_star},
          {"eta", eta},
          {"alpha", alpha}};
}

TrainArtifacts train(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  const AttentionInstance inst = resolve_instance(cfg);
  const std::uint64_t seed = cfg.sim.master_seed;

  TrainArtifacts art;
  TrainSummary& s = art.summary;
  s.constants = fed::estimate_constants(inst, cfg.estimate_samples, cfg.estimate_radius,
                                        derive_seed(seed, "estimate"));
  const auto& sc = cfg.sim.fed.sketch;
  s.alpha = sc ? sketch::table_alpha(sc->kind, sc->b_sketch, inst.dim()) : 0.0;
  if (!(cfg.sim.fed.eta > 0.0)) {
    cfg.sim.fed.eta = fed::choose_eta(s.constants.l_est, s.alpha, cfg.sim.fed.local_steps);
  }
  s.eta = cfg.sim.fed.eta;

  net::Simulation sim(inst, cfg.sim, &s.constants);
  sim.run();

  const chain::GradChain& canon = sim.canonical_chain();
  const std::vector<double> rebuilt =
      chain::reconstruct_weights(canon, std::span<const double>(sim.x0().data(), sim.x0().size()));
  s.reconstruct_matches = bitwise_equal(rebuilt, sim.weights());
  s.heads_agree = sim.heads_agree();
  s.head_hex = crypto::to_hex(canon.head());
  s.final_gap = sim.trace().rows.back().gap;
  s.bound = fed::convergence_bound(s.constants.l_est, s.constants.mu_est, s.eta, cfg.sim.fed.global_rounds,
                                   (sim.x0() - s.constants.x_star).squaredNorm());
  s.bound_holds = s.final_gap <= s.bound;

  std::ostringstream trace;
  fed::write_trace_csv(trace, sim.trace());
  art.trace_csv = trace.str();
  art.chain_json = io::chain_to_json(canon);
  std::ostringstream events;
  sim.write_event_log(events);
  art.events_jsonl = events.str();
  return art;
}

int cmd_gen(int n, int d, std::uint64_t seed, const std::filesystem::path& out_path, std::ostream& out) {
  const GeneratedInstance g = generate_instance(n, d, seed);
  io::write_text(out_path, io::instance_to_json(g.instance, g.meta).dump(2) + "\n");
  out << g.meta.dump() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const std::filesystem::path& instance_path, std::uint64_t seed, int points,
                  bool corrupt_gradient, std::ostream& out) {
  const AttentionInstance inst = io::load_instance(instance_path);
  const GradcheckReport rep = gradcheck(inst, seed, points, corrupt_gradient);
  json report{{"gradient",
               {{"max_rel_error", rep.grad_error},
                {"tolerance", kGradTolerance},
                {"point", rep.grad_point},
                {"coord", rep.grad_coord}}},
              {"passed", rep.passed()}};
  if (rep.hessian_checked) {
    report["hessian"] = {{"max_rel_error", rep.hess_error},
                         {"tolerance", kHessTolerance},
                         {"point", rep.hess_point},
                         {"row", rep.hess_row},
                         {"col", rep.hess_col}};
  } else {
    report["hessian"] = "skipped: dimension too large";
  }
  out << report.dump() << '\n';
  return rep.passed() ? kExitOk : kExitCheckFailed;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const TrainArtifacts art = train(cfg);
  const std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json summary = art.summary.to_json();
  summary["config"] = run_config_to_json(cfg);
  io::write_text(dir / "trace.csv", art.trace_csv);
  io::write_text(dir / "chain.json", art.chain_json.dump() + "\n");
  io::write_text(dir / "events.jsonl", art.events_jsonl);
  io::write_text(dir / "summary.json", summary.dump(2) + "\n");
  out << art.summary.to_json().dump() << '\n';
  return art.summary.reconstruct_matches && art.summary.heads_agree ? kExitOk : kExitCheckFailed;
}

int cmd_attack(const RunConfig& cfg, double share, int depth, int trials, bool grid, std::ostream& out) {
  net::SimConfig base = cfg.sim;
  if (!base.adversary) base.adversary = net::AdversaryConfig{0, depth};
  const std::vector<double> rates = base.effective_rates();
  double total = 0.0;
  for (double r : rates) total += r;

  if (grid) {
    const std::vector<double> shares{0.2, 0.3, 0.4};
    const std::vector<int> depths{1, 3, 6};
    const auto cells = net::rewrite_grid(base, shares, depths, trials);
    const bool monotone = net::grid_is_monotone(cells, shares.size(), depths.size());
    json rows = json::array();
    for (const auto& c : cells) rows.push_back(rewrite_json(c.share, c.depth, c.result));
    out << json{{"grid", rows}, {"monotone", monotone}}.dump() << '\n';
    return monotone ? kExitOk : kExitCheckFailed;
  }
  base.hash_rates = net::rates_with_adversary_share(base.num_users, base.adversary->user, share, total);
  const net::RewriteResult r = net::adversary_rewrite(base, depth, trials);
  out << rewrite_json(share, depth, r).dump() << '\n';
  return kExitOk;
}

int cmd_verify_chain(const std::filesystem::path& chain_path, std::ostream& out) {
  const std::string text = io::read_text(chain_path);
  try {
    const chain::GradChain c = io::chain_from_json(json::parse(text));
    out << json{{"ok", true},
                {"length", c.length()},
                {"head", crypto::to_hex(c.head())},
                {"supply", c.supply()}}
               .dump()
        << '\n';
    return kExitOk;
  } catch (const json::exception& e) {
    out << json{{"ok", false}, {"error", e.what()}}.dump() << '\n';
  } catch (const IntegrityError& e) {
    out << json{{"ok", false}, {"error", e.what()}}.dump() << '\n';
  } catch (const DecodeError& e) {
    out << json{{"ok", false}, {"error", e.what()}}.dump() << '\n';
  }
  return kExitCheckFailed;
}

int cmd_sketch_bench(const std::vector<std::string>& kinds, int dim, int b_sketch, int trials,
                     std::uint64_t seed, std::ostream& out) {
  std::vector<sketch::Kind> selected;
  if (kinds.empty()) {
    selected.assign(std::begin(sketch::kAllKinds), std::end(sketch::kAllKinds));
  } else {
    for (const auto& k : kinds) selected.push_back(sketch::parse_kind(k));
  }
  Rng rng(derive_seed(seed, "bench-vector"));
  Vector h(dim);
  for (int i = 0; i < dim; ++i) h(i) = rng.normal();

  bool ok = true;
  for (sketch::Kind kind : selected) {
    const auto stats = sketch::desk_statistics(kind, b_sketch, dim, h, trials, derive_seed(seed, static_cast<std::uint64_t>(kind)));
    const double z = stats.max_standard_score(h);
    const bool variance_ok = stats.variance_bound_holds(h, 5.0);
    const bool pass = z <= 4.0 && variance_ok;
    ok = ok && pass;
    out << json{{"kind", std::string(sketch::kind_name(kind))},
                {"dim", dim},
                {"b", b_sketch},
                {"trials", trials},
                {"alpha", stats.alpha},
                {"max_standard_score", z},
                {"mean_sq_norm", stats.mean_sq_norm},
                {"sq_norm_bound", (1.0 + stats.alpha) * h.squaredNorm()},
                {"passed", pass}}
               .dump()
        << '\n';
  }
  return ok ? kExitOk : kExitCheckFailed;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gradient-chain training simulator", "gradchain-sim"};
  app.require_subcommand(1);

  int gen_n = 0, gen_d = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Write a seeded instance file");
  gen->add_option("--n", gen_n, "Number of rows of A1 and A2")->required();
  gen->add_option("--d", gen_d, "Number of columns")->required();
  gen->add_option("--seed", gen_seed, "Instance seed");
  gen->add_option("--out", gen_out, "Output path")->required();

  std::string gc_instance;
  std::uint64_t gc_seed = 0;
  int gc_points = 3;
  bool gc_corrupt = false;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of gradient and Hessian");
  gc->add_option("instance", gc_instance, "Instance file")->required();
  gc->add_option("--seed", gc_seed, "Seed for the probe points");
  gc->add_option("--points", gc_points, "Random probe points besides x = 0");
  gc->add_flag("--corrupt-gradient", gc_corrupt, "Perturb one gradient entry (self-test)");

  std::string config_path;
  Overrides ov;
  std::uint64_t ov_seed = 0;
  int ov_rounds = 0, ov_difficulty = 0;
  std::string ov_sketch, ov_out;
  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--seed", ov_seed, "Master seed");
    sub->add_option("--rounds", ov_rounds, "Global rounds");
    sub->add_option("--sketch", ov_sketch, "kind:b or none");
    sub->add_option("--difficulty", ov_difficulty, "Leading zero bits");
    sub->add_option("--out", ov_out, "Output directory");
  };
  auto* train_cmd = app.add_subcommand("train", "Run training over the simulated chain");
  add_run_options(train_cmd);

  double at_share = 0.3;
  int at_depth = 6, at_trials = 200;
  bool at_grid = false;
  auto* attack = app.add_subcommand("attack", "Monte-Carlo history rewrite race");
  add_run_options(attack);
  attack->add_option("--share", at_share, "Adversary hash share");
  attack->add_option("--depth", at_depth, "Blocks to rewrite");
  attack->add_option("--trials", at_trials, "Monte-Carlo trials");
  attack->add_flag("--grid", at_grid, "Shares {0.2,0.3,0.4} x depths {1,3,6}");

  std::string vc_path;
  auto* verify = app.add_subcommand("verify-chain", "Re-validate a chain file from genesis");
  verify->add_option("chain", vc_path, "chain.json")->required();

  std::vector<std::string> sb_kinds;
  int sb_dim = 16, sb_b = 4, sb_trials = 10000;
  std::uint64_t sb_seed = 0;
  auto* bench = app.add_subcommand("sketch-bench", "Embedding statistics of the sketch families");
  bench->add_option("--kind", sb_kinds, "Sketch kinds (default all)");
  bench->add_option("--dim", sb_dim, "Vector dimension");
  bench->add_option("--b", sb_b, "Sketch size");
  bench->add_option("--trials", sb_trials, "Operator draws");
  bench->add_option("--seed", sb_seed, "Seed");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  }

  auto load_run_config = [&](CLI::App* sub) {
    RunConfig cfg = config_path.empty() ? default_run_config() : parse_run_config(io::read_json(config_path));
    if (sub->count("--seed")) ov.seed = ov_seed;
    if (sub->count("--rounds")) ov.rounds = ov_rounds;
    if (sub->count("--sketch")) ov.sketch = ov_sketch;
    if (sub->count("--difficulty")) ov.difficulty = ov_difficulty;
    if (sub->count("--out")) ov.out = ov_out;
    apply_overrides(cfg, ov);
    return cfg;
  };

  try {
    if (*gen) return cmd_gen(gen_n, gen_d, gen_seed, gen_out, out);
    if (*gc) return cmd_gradcheck(gc_instance, gc_seed, gc_points, gc_corrupt, out);
    if (*train_cmd) return cmd_train(load_run_config(train_cmd), out);
    if (*attack) return cmd_attack(load_run_config(attack), at_share, at_depth, at_trials, at_grid, out);
    if (*verify) return cmd_verify_chain(vc_path, out);
    if (*bench) return cmd_sketch_bench(sb_kinds, sb_dim, sb_b, sb_trials, sb_seed, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CapacityError& e) {
    err << "capacity error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitUsage;
}

}  // namespace gradchain::cli
