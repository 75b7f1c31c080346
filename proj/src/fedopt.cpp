#include "gradchain/fedopt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "gradchain/error.hpp"
#include "gradchain/rng.hpp"

namespace gradchain::fed {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double LocalObjective::value(const Vector& x) const {
  return attention::loss_blocks(*instance, x, block_ids);
}

Vector LocalObjective::gradient(const Vector& x) const {
  return attention::gradient_blocks(*instance, x, block_ids);
}

std::vector<LocalObjective> partition_data(const AttentionInstance& inst, int num_users,
                                           std::uint64_t seed) {
  if (num_users < 1) throw ConfigError("need at least one user");
  if (num_users > inst.n()) {
    throw ConfigError("cannot split " + std::to_string(inst.n()) + " blocks among " +
                      std::to_string(num_users) + " users");
  }
  std::vector<int> ids(inst.n());
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<int>(ids));

  std::vector<LocalObjective> out(num_users);
  for (int c = 0; c < num_users; ++c) {
    out[c].owner = c;
    out[c].instance = &inst;
  }
  for (std::size_t k = 0; k < ids.size(); ++k) out[k % num_users].block_ids.push_back(ids[k]);
  for (auto& obj : out) std::sort(obj.block_ids.begin(), obj.block_ids.end());
  return out;
}

Vector local_update(const GradientFn& grad, const Vector& x_start, int local_steps, double eta,
                    int round) {
  if (local_steps < 1) throw ConfigError("local_steps must be >= 1");
  Vector delta = Vector::Zero(x_start.size());
  for (int k = 0; k < local_steps; ++k) {
    const Vector g = k == 0 ? grad(x_start) : grad(x_start + delta);
    delta -= eta * g;
    if (!delta.allFinite()) {
      throw DivergenceError("local iterate became non-finite in round " + std::to_string(round), round);
    }
  }
  return delta;
}

Vector local_update(const LocalObjective& obj, const Vector& x_start, int local_steps, double eta,
                    int round) {
  return local_update([&obj](const Vector& x) { return obj.gradient(x); }, x_start, local_steps,
                      eta, round);
}

double choose_eta(double l_est, double alpha, int local_steps) {
  if (!(l_est > 0.0)) throw ConfigError("L estimate must be positive");
  if (local_steps < 1) throw ConfigError("local_steps must be >= 1");
  return 1.0 / (8.0 * (1.0 + alpha) * l_est * local_steps);
}

double convergence_bound(double l_est, double mu, double eta, int rounds, double init_sq_dist) {
  return 0.5 * l_est * init_sq_dist * std::exp(-mu * eta * rounds);
}

Vector minimize_newton(const AttentionInstance& inst, const Vector& x_init, double tol,
                       int max_iters) {
  Vector x = x_init;
  double f = attention::loss(inst, x).total;
  for (int it = 0; it < max_iters; ++it) {
    const Vector g = attention::gradient(inst, x);
    const double gnorm = g.norm();
    if (gnorm <= tol) return x;

    const Matrix h = attention::hessian(inst, x);
    Eigen::LDLT<Matrix> ldlt(h);
    Vector p;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) p = ldlt.solve(-g);
    if (p.size() == 0 || !p.allFinite() || p.dot(g) >= 0.0) p = -g;

    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector cand = x + step * p;
      const double f_cand = attention::loss(inst, cand).total;
      // Near the optimum f stalls at rounding level; fall back to the
      // gradient norm as the merit function there, ignoring rounding noise in f.
      if (f_cand <= f + 1e-4 * step * g.dot(p) ||
          (f_cand <= f + 1e-13 * (1.0 + std::abs(f)) &&
           attention::gradient(inst, cand).norm() < gnorm)) {
        x = cand;
        f = f_cand;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  if (attention::gradient(inst, x).norm() <= tol) return x;
  throw EstimationError("damped Newton did not reach |grad| <= " + format_double(tol));
}

Constants estimate_constants(const AttentionInstance& inst, int samples, double radius,
                             std::uint64_t seed) {
  if (samples < 0 || !(radius >= 0.0)) throw ConfigError("invalid sampling parameters");
  const int dim = inst.dim();
  if (dim > attention::kDefaultHessianMaxDim) {
    throw CapacityError("estimate_constants needs d^2 <= " +
                        std::to_string(attention::kDefaultHessianMaxDim));
  }
  Constants out;
  out.x_star = minimize_newton(inst, Vector::Zero(dim));
  out.f_star = attention::loss(inst, out.x_star).total;

  std::vector<Vector> points{Vector::Zero(dim), out.x_star};
  Rng rng(seed);
  for (int i = 0; i < samples; ++i) {
    Vector dir(dim);
    for (int k = 0; k < dim; ++k) dir(k) = rng.normal();
    const double norm = dir.norm();
    if (norm == 0.0) continue;
    const double r = radius * std::pow(rng.uniform(), 1.0 / dim);
    points.push_back(dir * (r / norm));
  }

  out.l_est = -std::numeric_limits<double>::infinity();
  out.mu_est = std::numeric_limits<double>::infinity();
  for (const Vector& p : points) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(attention::hessian(inst, p), Eigen::EigenvaluesOnly);
    out.l_est = std::max(out.l_est, eig.eigenvalues().maxCoeff());
    out.mu_est = std::min(out.mu_est, eig.eigenvalues().minCoeff());
  }
  return out;
}

FederatedTrainer::FederatedTrainer(const AttentionInstance& inst, FedConfig config)
    : inst_(&inst), config_(std::move(config)) {
  if (config_.local_steps < 1) throw ConfigError("local_steps must be >= 1");
  if (config_.global_rounds < 0) throw ConfigError("global_rounds must be >= 0");
  if (!(config_.eta > 0.0)) throw ConfigError("eta must be positive");
  objectives_ = partition_data(inst, config_.num_users,
                               derive_seed(config_.master_seed, "partition"));
  if (auto op = round_sketch(1)) alpha_ = op->alpha();
}

std::optional<sketch::SketchOperator> FederatedTrainer::round_sketch(int t) const {
  if (!config_.sketch) return std::nullopt;
  const SketchConfig& sc = *config_.sketch;
  const std::uint64_t seed =
      sc.per_round ? derive_seed(derive_seed(config_.master_seed, sc.seed), static_cast<std::uint64_t>(t))
                   : sc.seed;
  return sketch::SketchOperator::make(sc.kind, sc.b_sketch, inst_->dim(), seed, sc.s);
}

RoundOutput FederatedTrainer::global_round(const Vector& x_prev, int t, int winner) const {
  if (winner < 0 || winner >= config_.num_users) {
    throw IndexError("winner " + std::to_string(winner) + " is not a user");
  }
  const Vector delta = local_update(objectives_[winner], x_prev, config_.local_steps, config_.eta, t);
  RoundOutput out;
  if (auto op = round_sketch(t)) {
    out.payload = op->sk(delta);
    if (config_.scale_payload_by_eta) out.payload *= config_.eta;
    out.applied_delta = op->desk(out.payload);
  } else {
    out.payload = delta;
    if (config_.scale_payload_by_eta) out.payload *= config_.eta;
    out.applied_delta = out.payload;
  }
  out.x = x_prev + out.applied_delta;
  return out;
}

double FederatedTrainer::heterogeneity(const Vector& x) const {
  double sum = 0.0;
  for (const auto& obj : objectives_) sum += obj.gradient(x).squaredNorm();
  return sum / static_cast<double>(objectives_.size());
}

TraceRow make_trace_row(const AttentionInstance& inst, const Vector& x, int round, int winner,
                        double eta, double alpha, const Constants* constants) {
  TraceRow row;
  row.round = round;
  row.f = attention::loss(inst, x).total;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row.gap = constants ? row.f - constants->f_star : nan;
  row.dist_sq = constants ? (x - constants->x_star).squaredNorm() : nan;
  row.winner = winner;
  row.eta = eta;
  row.alpha = alpha;
  return row;
}

void write_trace_csv(std::ostream& out, const TrainTrace& trace) {
  out << "round,f,gap,dist_sq,winner,eta,alpha\n";
  for (const TraceRow& r : trace.rows) {
    out << r.round << ',' << format_double(r.f) << ',' << format_double(r.gap) << ','
        << format_double(r.dist_sq) << ',' << r.winner << ',' << format_double(r.eta) << ','
        << format_double(r.alpha) << '\n';
  }
}

void check_divergence(double f, double f0, int round) {
  if (!std::isfinite(f) || (f0 > 0.0 && f > 1e6 * f0)) {
    throw DivergenceError("training diverged at round " + std::to_string(round) + " (f = " +
                              format_double(f) + ")",
                          round);
  }
}

TrainResult run_training(const FederatedTrainer& trainer, const Vector& x0,
                         const std::function<int(int)>& winner_of, const Constants* constants) {
  const AttentionInstance& inst = trainer.instance();
  const FedConfig& cfg = trainer.config();
  TrainResult out;
  Vector x = x0;
  out.trace.rows.push_back(make_trace_row(inst, x, 0, -1, cfg.eta, trainer.alpha(), constants));
  const double f0 = out.trace.rows.front().f;
  for (int t = 1; t <= cfg.global_rounds; ++t) {
    const int winner = winner_of(t);
    RoundOutput r = trainer.global_round(x, t, winner);
    x = std::move(r.x);
    out.trace.rows.push_back(make_trace_row(inst, x, t, winner, cfg.eta, trainer.alpha(), constants));
    check_divergence(out.trace.rows.back().f, f0, t);
    out.applied_deltas.push_back(std::move(r.applied_delta));
  }
  out.trace.sigma_sq = constants ? trainer.heterogeneity(constants->x_star)
                                 : std::numeric_limits<double>::quiet_NaN();
  out.x_final = std::move(x);
  return out;
}

}  // namespace gradchain::fed
