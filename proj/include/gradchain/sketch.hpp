#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>

#include "gradchain/rng.hpp"

namespace gradchain::sketch {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Kind {
  kGaussian,
  kSrht,
  kAms,
  kCountSketch,
  kSparseEmbeddingI,
  kSparseEmbeddingII,
};

inline constexpr Kind kAllKinds[] = {Kind::kGaussian,    Kind::kSrht,
                                     Kind::kAms,         Kind::kCountSketch,
                                     Kind::kSparseEmbeddingI, Kind::kSparseEmbeddingII};

std::string_view kind_name(Kind kind);
// Accepts the names produced by kind_name ("gaussian", "srht", "ams",
// "countsketch", "sparse1", "sparse2"). Throws ConfigError otherwise.
Kind parse_kind(std::string_view name);

// Random polynomial of degree k-1 over GF(2^61 - 1): a k-wise independent
// hash family. Coefficients are drawn from rng in order a_0 .. a_{k-1}.
class PolyHash {
 public:
  static constexpr std::uint64_t kPrime = (std::uint64_t{1} << 61) - 1;

  PolyHash(Rng& rng, int independence);

  std::uint64_t operator()(std::uint64_t key) const;
  // Value reduced to [0, range).
  std::uint64_t bucket(std::uint64_t key, std::uint64_t range) const { return (*this)(key) % range; }
  // +1 / -1 from the low bit.
  int sign(std::uint64_t key) const { return ((*this)(key) & 1) ? -1 : 1; }

 private:
  std::uint64_t coeffs_[4] = {0, 0, 0, 0};
  int degree_ = 0;
};

// Coordinate-wise embedding parameter alpha = a * dim / b for each family.
double table_alpha(Kind kind, int b_sketch, int dim);

/// Seeded random linear map R in R^{b x dim} with sk(h) = R h and
/// desk(y) = R^T y.
///
/// The operator is immutable and fully determined by (kind, b_sketch, dim,
/// seed, s). SRHT works on the zero-padded power-of-two dimension m >= dim;
/// inputs are padded before sketching and outputs truncated after
/// de-sketching, and alpha uses m.
class SketchOperator {
 public:
  static SketchOperator make(Kind kind, int b_sketch, int dim, std::uint64_t seed, int s = 1);

  Vector sk(const Vector& h) const;
  Vector desk(const Vector& y) const;

  Kind kind() const { return kind_; }
  int b_sketch() const { return static_cast<int>(r_.rows()); }
  int dim() const { return dim_; }
  int padded_dim() const { return static_cast<int>(r_.cols()); }
  int sparsity() const { return s_; }
  std::uint64_t seed() const { return seed_; }
  double alpha() const { return alpha_; }
  // b x padded_dim.
  const Matrix& matrix() const { return r_; }

 private:
  SketchOperator(Kind kind, int dim, std::uint64_t seed, int s, Matrix r);

  Kind kind_;
  int dim_;
  std::uint64_t seed_;
  int s_;
  double alpha_;
  Matrix r_;
};

struct EmbeddingMoments {
  double mean_bilinear = 0.0;  // mean of h^T R^T R g
  double second_moment = 0.0;  // mean of (h^T R^T R g)^2
};

// Empirical moments over `trials` independent operators (trial i uses seed
// derive_seed(seed, i)). trials must be at least 1000.
EmbeddingMoments embedding_moments(Kind kind, int b_sketch, int dim, const Vector& g,
                                   const Vector& h, int trials, std::uint64_t seed, int s = 1);

// Monte-Carlo statistics of desk(sk(h)) over independent operators.
struct DeskStatistics {
  Vector mean;            // componentwise mean of desk(sk(h))
  Vector stddev;          // componentwise sample standard deviation
  double mean_sq_norm = 0.0;    // mean of |desk(sk(h))|^2
  double stddev_sq_norm = 0.0;  // sample standard deviation of |desk(sk(h))|^2
  double alpha = 0.0;
  int trials = 0;

  // |mean - h|_i / (stddev_i / sqrt(trials)), worst coordinate. Coordinates
  // with zero spread contribute 0 if exact and +inf otherwise.
  double max_standard_score(const Vector& h) const;
  // mean_sq_norm <= (1 + alpha) |h|^2 (1 + slack * relative standard error).
  bool variance_bound_holds(const Vector& h, double slack) const;
};

DeskStatistics desk_statistics(Kind kind, int b_sketch, int dim, const Vector& h, int trials,
                               std::uint64_t seed, int s = 1);

// Smallest seed >= start for which CountSketch with b = dim has an
// injective bucket map, so R is a signed permutation.
std::uint64_t find_injective_countsketch_seed(int dim, std::uint64_t start);

}  // namespace gradchain::sketch
