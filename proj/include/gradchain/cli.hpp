#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gradchain/attention_loss.hpp"
#include "gradchain/netsim.hpp"
#include "json.hpp"

namespace gradchain::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

// Everything a run needs. A run is reproducible from this struct alone.
struct RunConfig {
  // Instance file; when empty the instance is generated from (n, d,
  // instance_seed) exactly as `gen` would.
  std::string instance_path;
  int n = 6;
  int d = 2;
  std::uint64_t instance_seed = 1;

  // sim.fed.eta <= 0 means "pick 1 / (8 (1 + alpha) L_est K)".
  net::SimConfig sim;
  int estimate_samples = 200;
  double estimate_radius = 1.0;
  std::string out_dir = "out";
};

RunConfig default_run_config();

// Unknown keys are rejected so typos cannot silently change a run.
RunConfig parse_run_config(const json& j);
json run_config_to_json(const RunConfig& cfg);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> rounds;
  // "kind:b" or "none".
  std::optional<std::string> sketch;
  std::optional<int> difficulty;
  std::optional<std::string> out;
};

void apply_overrides(RunConfig& cfg, const Overrides& o);

// "kind:b" -> SketchConfig; "none" -> nullopt.
std::optional<fed::SketchConfig> parse_sketch_flag(const std::string& text);

// Seeded instance plus metadata describing which convexity certificate it
// carries and the reported mu.
struct GeneratedInstance {
  attention::AttentionInstance instance;
  json meta;
};
GeneratedInstance generate_instance(int n, int d, std::uint64_t seed);

struct GradcheckReport {
  double grad_error = 0.0;
  double hess_error = 0.0;
  // Worst offenders: point index and coordinate(s).
  int grad_point = -1;
  int grad_coord = -1;
  int hess_point = -1;
  int hess_row = -1;
  int hess_col = -1;
  bool hessian_checked = false;
  bool passed() const;
};

inline constexpr double kGradTolerance = 1e-6;
inline constexpr double kHessTolerance = 1e-5;
inline constexpr double kFdStep = 1e-5;

// Central differences of L (for the gradient) and of the gradient (for the
// Hessian) at x = 0 and `points` seeded random points. The error at a point
// is |analytic - fd| / (1 + |analytic|) (2-norm for the gradient, Frobenius
// for the Hessian); the worst offender is the largest entry of the
// difference at the worst point. corrupt_gradient adds 1e-3 to gradient
// coordinate 0 before comparing (a test hook).
GradcheckReport gradcheck(const attention::AttentionInstance& inst, std::uint64_t seed, int points = 3,
                          bool corrupt_gradient = false);

struct TrainSummary {
  double final_gap = 0.0;
  double bound = 0.0;
  bool bound_holds = false;
  bool reconstruct_matches = false;
  bool heads_agree = false;
  std::string head_hex;
  fed::Constants constants;
  double eta = 0.0;
  double alpha = 0.0;
  json to_json() const;
};

struct TrainArtifacts {
  std::string trace_csv;
  json chain_json;
  std::string events_jsonl;
  TrainSummary summary;
};

// Runs the whole simulation in memory. Writes nothing.
TrainArtifacts train(const RunConfig& cfg);

// Subcommands. Each returns an exit code and prints a report to `out`.
int cmd_gen(int n, int d, std::uint64_t seed, const std::filesystem::path& out_path, std::ostream& out);
int cmd_gradcheck(const std::filesystem::path& instance_path, std::uint64_t seed, int points,
                  bool corrupt_gradient, std::ostream& out);
int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_attack(const RunConfig& cfg, double share, int depth, int trials, bool grid, std::ostream& out);
int cmd_verify_chain(const std::filesystem::path& chain_path, std::ostream& out);
int cmd_sketch_bench(const std::vector<std::string>& kinds, int dim, int b_sketch, int trials,
                     std::uint64_t seed, std::ostream& out);

// Full command line (argv[0] included). Errors go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gradchain::cli
