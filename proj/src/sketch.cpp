#include "gradchain/sketch.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "gradchain/error.hpp"

namespace gradchain::sketch {

namespace {

std::uint64_t mulmod61(std::uint64_t a, std::uint64_t b) {
  const __uint128_t prod = static_cast<__uint128_t>(a) * b;
  std::uint64_t r = static_cast<std::uint64_t>(prod & PolyHash::kPrime) +
                    static_cast<std::uint64_t>(prod >> 61);
  if (r >= PolyHash::kPrime) r -= PolyHash::kPrime;
  return r;
}

std::uint64_t addmod61(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = a + b;
  if (r >= PolyHash::kPrime) r -= PolyHash::kPrime;
  return r;
}

// First `count` entries of a seeded partial Fisher-Yates over [0, range).
std::vector<int> sample_without_replacement(Rng& rng, int range, int count) {
  std::vector<int> pool(range);
  std::iota(pool.begin(), pool.end(), 0);
  for (int k = 0; k < count; ++k) {
    const int j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(range - k)));
    std::swap(pool[k], pool[j]);
  }
  pool.resize(count);
  return pool;
}

int next_pow2(int v) { return static_cast<int>(std::bit_ceil(static_cast<unsigned>(v))); }

Matrix build_gaussian(Rng& rng, int b, int dim) {
  Matrix r(b, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(b));
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < dim; ++j) r(i, j) = scale * rng.normal();
  return r;
}

Matrix build_srht(Rng& rng, int b, int m) {
  std::vector<int> diag(m);
  for (int j = 0; j < m; ++j) diag[j] = rng.rademacher();
  const std::vector<int> rows = sample_without_replacement(rng, m, b);
  const double h_scale = 1.0 / std::sqrt(static_cast<double>(m));
  const double outer = std::sqrt(static_cast<double>(m) / b);
  Matrix r(b, m);
  for (int k = 0; k < b; ++k) {
    for (int j = 0; j < m; ++j) {
      const int parity = std::popcount(static_cast<unsigned>(rows[k] & j)) & 1;
      r(k, j) = outer * (parity ? -h_scale : h_scale) * diag[j];
    }
  }
  return r;
}

Matrix build_ams(Rng& rng, int b, int dim) {
  Matrix r(b, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(b));
  for (int i = 0; i < b; ++i) {
    const PolyHash h(rng, 4);
    for (int j = 0; j < dim; ++j) r(i, j) = h.sign(static_cast<std::uint64_t>(j)) * scale;
  }
  return r;
}

Matrix build_countsketch(Rng& rng, int b, int dim) {
  const PolyHash bucket(rng, 2);
  const PolyHash sign(rng, 4);
  Matrix r = Matrix::Zero(b, dim);
  for (int j = 0; j < dim; ++j) {
    const auto key = static_cast<std::uint64_t>(j);
    r(static_cast<Eigen::Index>(bucket.bucket(key, b)), j) = sign.sign(key);
  }
  return r;
}

Matrix build_sparse_i(Rng& rng, int b, int dim, int s) {
  Matrix r = Matrix::Zero(b, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(s));
  for (int j = 0; j < dim; ++j) {
    const std::vector<int> rows = sample_without_replacement(rng, b, s);
    for (int row : rows) r(row, j) = rng.rademacher() * scale;
  }
  return r;
}

Matrix build_sparse_ii(Rng& rng, int b, int dim, int s) {
  const PolyHash bucket(rng, 2);
  const PolyHash sign(rng, 4);
  const int block = b / s;
  const double scale = 1.0 / std::sqrt(static_cast<double>(s));
  Matrix r = Matrix::Zero(b, dim);
  for (int j = 0; j < dim; ++j) {
    for (int k = 0; k < s; ++k) {
      const auto key = static_cast<std::uint64_t>(j) * s + k;
      const auto row = static_cast<Eigen::Index>(k * block + bucket.bucket(key, block));
      r(row, j) = sign.sign(key) * scale;
    }
  }
  return r;
}

}  // namespace

std::string_view kind_name(Kind kind) {
  switch (kind) {
    case Kind::kGaussian: return "gaussian";
    case Kind::kSrht: return "srht";
    case Kind::kAms: return "ams";
    case Kind::kCountSketch: return "countsketch";
    case Kind::kSparseEmbeddingI: return "sparse1";
    case Kind::kSparseEmbeddingII: return "sparse2";
  }
  return "unknown";
}

Kind parse_kind(std::string_view name) {
  for (Kind k : kAllKinds) {
    if (kind_name(k) == name) return k;
  }
  throw ConfigError("unknown sketch kind '" + std::string(name) + "'");
}

PolyHash::PolyHash(Rng& rng, int independence) : degree_(independence - 1) {
  if (independence < 1 || independence > 4) throw ConfigError("PolyHash supports 1..4-wise independence");
  for (int i = 0; i < independence; ++i) coeffs_[i] = rng.next_u64() % kPrime;
}

std::uint64_t PolyHash::operator()(std::uint64_t key) const {
  const std::uint64_t x = key % kPrime;
  std::uint64_t acc = coeffs_[degree_];
  for (int i = degree_ - 1; i >= 0; --i) acc = addmod61(mulmod61(acc, x), coeffs_[i]);
  return acc;
}

double table_alpha(Kind kind, int b_sketch, int dim) {
  const double ratio = static_cast<double>(dim) / b_sketch;
  switch (kind) {
    case Kind::kGaussian:
    case Kind::kCountSketch:
      return 3.0 * ratio;
    case Kind::kSrht:
    case Kind::kAms:
    case Kind::kSparseEmbeddingI:
    case Kind::kSparseEmbeddingII:
      return 2.0 * ratio;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

SketchOperator::SketchOperator(Kind kind, int dim, std::uint64_t seed, int s, Matrix r)
    : kind_(kind), dim_(dim), seed_(seed), s_(s), r_(std::move(r)) {
  alpha_ = table_alpha(kind_, static_cast<int>(r_.rows()), static_cast<int>(r_.cols()));
}

SketchOperator SketchOperator::make(Kind kind, int b_sketch, int dim, std::uint64_t seed, int s) {
  if (b_sketch < 1) throw ConfigError("b_sketch must be positive");
  if (dim < 1) throw ConfigError("sketch dimension must be positive");
  if (b_sketch > dim) {
    throw ConfigError("b_sketch = " + std::to_string(b_sketch) + " exceeds dim = " + std::to_string(dim));
  }
  if (kind == Kind::kSparseEmbeddingI || kind == Kind::kSparseEmbeddingII) {
    if (s < 1 || s > b_sketch) throw ConfigError("sparse embedding needs 1 <= s <= b_sketch");
    if (kind == Kind::kSparseEmbeddingII && b_sketch % s != 0) {
      throw ConfigError("sparse embedding II needs s to divide b_sketch");
    }
  } else {
    s = 1;
  }
  Rng rng(seed);
  switch (kind) {
    case Kind::kGaussian: return SketchOperator(kind, dim, seed, s, build_gaussian(rng, b_sketch, dim));
    case Kind::kSrht: return SketchOperator(kind, dim, seed, s, build_srht(rng, b_sketch, next_pow2(dim)));
    case Kind::kAms: return SketchOperator(kind, dim, seed, s, build_ams(rng, b_sketch, dim));
    case Kind::kCountSketch: return SketchOperator(kind, dim, seed, s, build_countsketch(rng, b_sketch, dim));
    case Kind::kSparseEmbeddingI:
      return SketchOperator(kind, dim, seed, s, build_sparse_i(rng, b_sketch, dim, s));
    case Kind::kSparseEmbeddingII:
      return SketchOperator(kind, dim, seed, s, build_sparse_ii(rng, b_sketch, dim, s));
  }
  throw ConfigError("unhandled sketch kind");
}

Vector SketchOperator::sk(const Vector& h) const {
  if (h.size() != dim_) {
    throw DimensionError("sk: input has length " + std::to_string(h.size()) + ", expected " +
                         std::to_string(dim_));
  }
  if (padded_dim() == dim_) return r_ * h;
  Vector padded = Vector::Zero(padded_dim());
  padded.head(dim_) = h;
  return r_ * padded;
}

Vector SketchOperator::desk(const Vector& y) const {
  if (y.size() != b_sketch()) {
    throw DimensionError("desk: input has length " + std::to_string(y.size()) + ", expected " +
                         std::to_string(b_sketch()));
  }
  Vector full = r_.transpose() * y;
  if (padded_dim() == dim_) return full;
  return full.head(dim_);
}

EmbeddingMoments embedding_moments(Kind kind, int b_sketch, int dim, const Vector& g,
                                   const Vector& h, int trials, std::uint64_t seed, int s) {
  if (trials < 1000) throw ConfigError("embedding_moments needs at least 1000 trials");
  if (g.size() != dim || h.size() != dim) throw DimensionError("embedding_moments: vector length != dim");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < trials; ++i) {
    const SketchOperator op = SketchOperator::make(kind, b_sketch, dim, derive_seed(seed, i), s);
    const double v = op.sk(h).dot(op.sk(g));
    sum += v;
    sum_sq += v * v;
  }
  return {sum / trials, sum_sq / trials};
}

double DeskStatistics::max_standard_score(const Vector& h) const {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const double diff = std::abs(mean(i) - h(i));
    const double se = stddev(i) / std::sqrt(static_cast<double>(trials));
    double score;
    if (se > 0.0) {
      score = diff / se;
    } else {
      score = diff <= 1e-12 * (1.0 + std::abs(h(i))) ? 0.0 : std::numeric_limits<double>::infinity();
    }
    worst = std::max(worst, score);
  }
  return worst;
}

bool DeskStatistics::variance_bound_holds(const Vector& h, double slack) const {
  const double bound = (1.0 + alpha) * h.squaredNorm();
  if (mean_sq_norm == 0.0) return true;
  const double rel_se = stddev_sq_norm / (std::sqrt(static_cast<double>(trials)) * mean_sq_norm);
  return mean_sq_norm <= bound * (1.0 + slack * rel_se);
}

DeskStatistics desk_statistics(Kind kind, int b_sketch, int dim, const Vector& h, int trials,
                               std::uint64_t seed, int s) {
  if (trials < 2) throw ConfigError("desk_statistics needs at least 2 trials");
  if (h.size() != dim) throw DimensionError("desk_statistics: vector length != dim");
  // Welford accumulators.
  Vector mean = Vector::Zero(dim);
  Vector m2 = Vector::Zero(dim);
  double norm_mean = 0.0;
  double norm_m2 = 0.0;
  double alpha = 0.0;
  for (int i = 0; i < trials; ++i) {
    const SketchOperator op = SketchOperator::make(kind, b_sketch, dim, derive_seed(seed, i), s);
    alpha = op.alpha();
    const Vector v = op.desk(op.sk(h));
    const double k = i + 1.0;
    const Vector delta = v - mean;
    mean += delta / k;
    m2 += delta.cwiseProduct(v - mean);
    const double sq = v.squaredNorm();
    const double nd = sq - norm_mean;
    norm_mean += nd / k;
    norm_m2 += nd * (sq - norm_mean);
  }
  DeskStatistics out;
  out.mean = mean;
  out.stddev = (m2 / (trials - 1.0)).cwiseSqrt();
  out.mean_sq_norm = norm_mean;
  out.stddev_sq_norm = std::sqrt(norm_m2 / (trials - 1.0));
  out.alpha = alpha;
  out.trials = trials;
  return out;
}

std::uint64_t find_injective_countsketch_seed(int dim, std::uint64_t start) {
  for (std::uint64_t seed = start;; ++seed) {
    const SketchOperator op = SketchOperator::make(Kind::kCountSketch, dim, dim, seed);
    const Matrix& r = op.matrix();
    bool injective = true;
    for (Eigen::Index i = 0; i < r.rows() && injective; ++i) {
      injective = (r.row(i).array() != 0.0).count() == 1;
    }
    if (injective) return seed;
  }
}

}  // namespace gradchain::sketch
