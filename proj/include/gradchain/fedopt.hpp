#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "gradchain/attention_loss.hpp"
#include "gradchain/sketch.hpp"

namespace gradchain::fed {

using attention::AttentionInstance;
using attention::Matrix;
using attention::Vector;

struct SketchConfig {
  sketch::Kind kind = sketch::Kind::kGaussian;
  int b_sketch = 1;
  int s = 1;
  std::uint64_t seed = 0;
  // Fresh operator per round (seed derived from (seed, t)); when false the
  // same operator is reused every round.
  bool per_round = true;
};

struct FedConfig {
  int num_users = 1;
  int local_steps = 1;
  int global_rounds = 1;
  double eta = 0.0;
  std::optional<SketchConfig> sketch;
  std::uint64_t master_seed = 0;
  // Alternative reading of the broadcast step, which multiplies the sketched
  // delta by eta a second time. Off by default.
  bool scale_payload_by_eta = false;
};

// User c's share of the data: f_c(x) = sum_{j in block_ids} L_j(x). Block
// ids are sorted ascending so that a single user owning every block
// reproduces L exactly.
struct LocalObjective {
  int owner = 0;
  std::vector<int> block_ids;
  const AttentionInstance* instance = nullptr;

  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
};

// Shuffles [n] with the seed and deals blocks round-robin to N users.
std::vector<LocalObjective> partition_data(const AttentionInstance& inst, int num_users,
                                           std::uint64_t seed);

using GradientFn = std::function<Vector(const Vector&)>;

// K gradient steps from x_start; returns u^{K} - x_start. The displacement
// is accumulated directly, so K = 1 yields exactly -eta * grad(x_start).
// Throws DivergenceError naming `round` on a non-finite iterate.
Vector local_update(const GradientFn& grad, const Vector& x_start, int local_steps, double eta,
                    int round = 0);
Vector local_update(const LocalObjective& obj, const Vector& x_start, int local_steps, double eta,
                    int round = 0);

// 1 / (8 (1 + alpha) L K).
double choose_eta(double l_est, double alpha, int local_steps);

// (L / 2) * init_sq_dist * exp(-mu * eta * T).
double convergence_bound(double l_est, double mu, double eta, int rounds, double init_sq_dist);

struct Constants {
  double l_est = 0.0;
  double mu_est = 0.0;
  Vector x_star;
  double f_star = 0.0;
};

// L_est / mu_est are the extreme Hessian eigenvalues over `samples` points
// drawn uniformly from the radius-R ball (plus the origin and x*); x* comes
// from damped Newton run to |grad| <= 1e-10.
Constants estimate_constants(const AttentionInstance& inst, int samples, double radius,
                             std::uint64_t seed);

// Damped Newton on L from x_init. Throws EstimationError when the iteration
// cap is reached first.
Vector minimize_newton(const AttentionInstance& inst, const Vector& x_init, double tol = 1e-10,
                       int max_iters = 200);

struct RoundOutput {
  Vector x;              // x_t
  Vector payload;        // what the winner broadcasts (sketched or raw)
  Vector applied_delta;  // x_t - x_{t-1}, the delta stored in the block
};

/// The K-local-step sketched federated optimizer. Each round the PoW winner
/// runs K local steps on its own objective, broadcasts sk_t(delta), and every
/// user applies desk_t of the payload.
class FederatedTrainer {
 public:
  FederatedTrainer(const AttentionInstance& inst, FedConfig config);

  RoundOutput global_round(const Vector& x_prev, int t, int winner) const;

  // Sketch operator for round t, or nullopt without sketching.
  std::optional<sketch::SketchOperator> round_sketch(int t) const;

  const AttentionInstance& instance() const { return *inst_; }
  const FedConfig& config() const { return config_; }
  const std::vector<LocalObjective>& objectives() const { return objectives_; }
  // alpha of the configured sketch; 0 without sketching.
  double alpha() const { return alpha_; }
  // (1/N) sum_c |grad f_c(x)|^2.
  double heterogeneity(const Vector& x) const;

 private:
  const AttentionInstance* inst_;
  FedConfig config_;
  std::vector<LocalObjective> objectives_;
  double alpha_ = 0.0;
};

struct TraceRow {
  int round = 0;
  double f = 0.0;
  double gap = 0.0;
  double dist_sq = 0.0;
  int winner = -1;
  double eta = 0.0;
  double alpha = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  // (1/N) sum_c |grad f_c(x*)|^2 when x* is known, else NaN.
  double sigma_sq = 0.0;
};

TraceRow make_trace_row(const AttentionInstance& inst, const Vector& x, int round, int winner,
                        double eta, double alpha, const Constants* constants);

// CSV with header round,f,gap,dist_sq,winner,eta,alpha; doubles with 17
// significant digits.
void write_trace_csv(std::ostream& out, const TrainTrace& trace);

// Throws DivergenceError when f exceeds 1e6 * f(x_0).
void check_divergence(double f, double f0, int round);

struct TrainResult {
  TrainTrace trace;
  Vector x_final;
  std::vector<Vector> applied_deltas;
};

// Runs config.global_rounds rounds with winners from winner_of(t).
TrainResult run_training(const FederatedTrainer& trainer, const Vector& x0,
                         const std::function<int(int)>& winner_of, const Constants* constants);

}  // namespace gradchain::fed
