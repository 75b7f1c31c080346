#include "gradchain/attention_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gradchain/error.hpp"
#include "gradchain/rng.hpp"

namespace gradchain::attention {

namespace {

void check_weights(const AttentionInstance& inst, const Vector& x) {
  if (x.size() != inst.dim()) {
    throw DimensionError("weight vector has length " + std::to_string(x.size()) +
                         ", expected d^2 = " + std::to_string(inst.dim()));
  }
}

void check_block(const AttentionInstance& inst, int j) {
  if (j < 0 || j >= inst.n()) {
    throw IndexError("block index " + std::to_string(j) + " outside [0, " +
                     std::to_string(inst.n()) + ")");
  }
}

std::vector<int> all_blocks(int n) {
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

SoftmaxBlock softmax_from_logits(Vector logits, int j) {
  if (!logits.allFinite()) {
    throw NumericError("non-finite logits in block " + std::to_string(j), j);
  }
  SoftmaxBlock out;
  out.shift = logits.maxCoeff();
  Vector e = (logits.array() - out.shift).exp().matrix();
  out.residual_sum = e.sum();
  out.probs = e / out.residual_sum;
  out.logits = std::move(logits);
  return out;
}

// Per-block quantities shared by gradient and Hessian.
struct BlockState {
  Matrix a;  // A_[j], n x d^2
  SoftmaxBlock soft;
  Vector c;  // f - b_[j]
};

BlockState block_state(const AttentionInstance& inst, const Vector& x, int j) {
  BlockState s;
  s.a = kron_block(inst, j);
  s.soft = softmax_from_logits(s.a * x, j);
  s.c = s.soft.probs - inst.target_block(j);
  return s;
}

double min_w_sq(const AttentionInstance& inst) { return inst.w().array().square().minCoeff(); }

double smallest_singular_value(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smin > 1e-10 * std::max(1.0, smax))) return 0.0;
  return smin;
}

}  // namespace

AttentionInstance::AttentionInstance(Matrix a1, Matrix a2, Vector b_target, Vector w)
    : a1_(std::move(a1)), a2_(std::move(a2)), b_(std::move(b_target)), w_(std::move(w)) {
  if (a1_.rows() < 1 || a1_.cols() < 1) throw DimensionError("A1 must be non-empty");
  if (a1_.rows() != a2_.rows() || a1_.cols() != a2_.cols()) {
    throw DimensionError("A1 and A2 must have identical shape n x d");
  }
  const Eigen::Index n = a1_.rows();
  if (b_.size() != n * n) throw DimensionError("target b must have length n^2");
  if (w_.size() != n) throw DimensionError("regularization weights w must have length n");
  if (!(w_.array() > 0.0).all()) throw ConfigError("regularization weights must be positive");
  if (!a1_.allFinite() || !a2_.allFinite() || !b_.allFinite() || !w_.allFinite()) {
    throw NumericError("instance contains non-finite entries");
  }
}

Eigen::Ref<const Vector> AttentionInstance::target_block(int j) const {
  return b_.segment(static_cast<Eigen::Index>(j) * n(), n());
}

AttentionInstance random_instance(int n, int d, std::uint64_t seed, double w_lo, double w_hi) {
  if (n < 1 || d < 1) throw ConfigError("n and d must be positive");
  Rng rng(seed);
  Matrix a1(n, d), a2(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) a1(i, k) = rng.uniform(-1.0, 1.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) a2(i, k) = rng.uniform(-1.0, 1.0);
  Vector b(static_cast<Eigen::Index>(n) * n);
  for (int j = 0; j < n; ++j) {
    Vector z(n);
    for (int i = 0; i < n; ++i) z(i) = rng.normal();
    b.segment(static_cast<Eigen::Index>(j) * n, n) = softmax_from_logits(z, j).probs;
  }
  Vector w(n);
  for (int i = 0; i < n; ++i) w(i) = rng.uniform(w_lo, w_hi);
  return AttentionInstance(std::move(a1), std::move(a2), std::move(b), std::move(w));
}

Matrix kron_block(const AttentionInstance& inst, int j) {
  check_block(inst, j);
  const int n = inst.n();
  const int d = inst.d();
  Matrix out(n, d * d);
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < d; ++p)
      for (int q = 0; q < d; ++q) out(i, p * d + q) = inst.a1()(j, p) * inst.a2()(i, q);
  return out;
}

Matrix kron_matrix(const AttentionInstance& inst) {
  const int n = inst.n();
  Matrix out(static_cast<Eigen::Index>(n) * n, inst.dim());
  for (int j = 0; j < n; ++j) out.middleRows(static_cast<Eigen::Index>(j) * n, n) = kron_block(inst, j);
  return out;
}

Matrix unvec(const Vector& x, int d) {
  if (x.size() != static_cast<Eigen::Index>(d) * d) throw DimensionError("unvec: length is not d^2");
  Matrix m(d, d);
  for (int p = 0; p < d; ++p)
    for (int q = 0; q < d; ++q) m(p, q) = x(p * d + q);
  return m;
}

Vector vec(const Matrix& m) {
  Vector x(m.rows() * m.cols());
  for (Eigen::Index p = 0; p < m.rows(); ++p)
    for (Eigen::Index q = 0; q < m.cols(); ++q) x(p * m.cols() + q) = m(p, q);
  return x;
}

bool vec_identity_check(const AttentionInstance& inst, const Vector& x) {
  check_weights(inst, x);
  const Vector lhs = vec(inst.a1() * unvec(x, inst.d()) * inst.a2().transpose());
  const Vector rhs = kron_matrix(inst) * x;
  const double scale = rhs.size() ? rhs.cwiseAbs().maxCoeff() : 0.0;
  return (lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + scale);
}

double SoftmaxBlock::alpha() const { return std::exp(shift) * residual_sum; }

std::optional<Vector> SoftmaxBlock::unshifted() const {
  if (logits.cwiseAbs().maxCoeff() > 500.0) return std::nullopt;
  return Vector(logits.array().exp().matrix());
}

SoftmaxBlock softmax_block(const AttentionInstance& inst, const Vector& x, int j) {
  check_weights(inst, x);
  check_block(inst, j);
  return softmax_from_logits(kron_block(inst, j) * x, j);
}

LossBreakdown loss(const AttentionInstance& inst, const Vector& x) {
  check_weights(inst, x);
  LossBreakdown out;
  out.per_block.resize(inst.n());
  for (int j = 0; j < inst.n(); ++j) {
    const BlockState s = block_state(inst, x, j);
    const double e = 0.5 * s.c.squaredNorm();
    const double r = 0.5 * inst.w().cwiseProduct(s.soft.logits).squaredNorm();
    if (!std::isfinite(r)) throw NumericError("regularization term overflows in block " + std::to_string(j), j);
    out.exp_part += e;
    out.reg_part += r;
    out.per_block(j) = e + r;
  }
  out.total = out.exp_part + out.reg_part;
  if (!std::isfinite(out.total)) throw NumericError("loss overflows");
  return out;
}

double loss_blocks(const AttentionInstance& inst, const Vector& x, std::span<const int> blocks) {
  check_weights(inst, x);
  double total = 0.0;
  for (int j : blocks) {
    const BlockState s = block_state(inst, x, j);
    total += 0.5 * s.c.squaredNorm() + 0.5 * inst.w().cwiseProduct(s.soft.logits).squaredNorm();
  }
  if (!std::isfinite(total)) throw NumericError("loss overflows");
  return total;
}

Vector gradient(const AttentionInstance& inst, const Vector& x) {
  const std::vector<int> ids = all_blocks(inst.n());
  return gradient_blocks(inst, x, ids);
}

Vector gradient_blocks(const AttentionInstance& inst, const Vector& x,
                       std::span<const int> blocks) {
  check_weights(inst, x);
  const Vector w_sq = inst.w().array().square().matrix();
  Vector g = Vector::Zero(inst.dim());
  for (int j : blocks) {
    check_block(inst, j);
    const BlockState s = block_state(inst, x, j);
    const Vector& f = s.soft.probs;
    // d/dz 0.5|softmax(z) - b|^2 = f o c - <f, c> f, then chain rule through A_[j].
    const Vector dz = f.cwiseProduct(s.c) - f.dot(s.c) * f + w_sq.cwiseProduct(s.soft.logits);
    g.noalias() += s.a.transpose() * dz;
  }
  if (!g.allFinite()) throw NumericError("gradient overflows");
  return g;
}

Matrix hessian(const AttentionInstance& inst, const Vector& x, int max_dim) {
  const std::vector<int> ids = all_blocks(inst.n());
  return hessian_blocks(inst, x, ids, max_dim);
}

Matrix hessian_blocks(const AttentionInstance& inst, const Vector& x, std::span<const int> blocks,
                      int max_dim) {
  check_weights(inst, x);
  if (inst.dim() > max_dim) {
    throw CapacityError("dense Hessian needs d^2 = " + std::to_string(inst.dim()) +
                        " <= " + std::to_string(max_dim));
  }
  const Vector w_sq = inst.w().array().square().matrix();
  Matrix h = Matrix::Zero(inst.dim(), inst.dim());
  for (int j : blocks) {
    check_block(inst, j);
    const BlockState s = block_state(inst, x, j);
    const Vector& f = s.soft.probs;
    const Vector& c = s.c;
    const Vector fc = f.cwiseProduct(c);
    const double cf = c.dot(f);

    // B1 = J^T J with J = diag(f) - f f^T, the softmax Jacobian.
    Matrix jac = -f * f.transpose();
    jac.diagonal() += f;
    Matrix b = jac.transpose() * jac;

    // B2 = sum_k c_k * Hess(f_k), expanded term by term.
    b += 2.0 * cf * (f * f.transpose());
    b.diagonal() -= cf * f;
    b -= fc * f.transpose();
    b -= f * fc.transpose();
    b.diagonal() += fc;

    b.diagonal() += w_sq;
    h.noalias() += s.a.transpose() * b * s.a;
  }
  Matrix sym = 0.5 * (h + h.transpose());
  if (!sym.allFinite()) throw NumericError("Hessian overflows");
  return sym;
}

Matrix regularization_hessian(const AttentionInstance& inst) {
  const Vector w_sq = inst.w().array().square().matrix();
  Matrix h = Matrix::Zero(inst.dim(), inst.dim());
  for (int j = 0; j < inst.n(); ++j) {
    const Matrix a = kron_block(inst, j);
    h.noalias() += a.transpose() * w_sq.asDiagonal() * a;
  }
  return 0.5 * (h + h.transpose());
}

double certified_mu(const AttentionInstance& inst, CertificateForm form) {
  const int n = inst.n();
  const double margin = min_w_sq(inst) - 4.0;
  if (form == CertificateForm::kPerBlock) {
    if (n < inst.dim()) {
      throw CertificateInapplicable("per-block certificate needs n >= d^2 (n = " +
                                    std::to_string(n) + ", d^2 = " + std::to_string(inst.dim()) + ")");
    }
    double smin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      const double s = smallest_singular_value(kron_block(inst, j));
      if (s == 0.0) {
        throw CertificateInapplicable("block " + std::to_string(j) +
                                      " of A1 (x) A2 is rank deficient");
      }
      smin = std::min(smin, s);
    }
    return margin * smin * smin * n;
  }
  if (n < inst.d()) {
    throw CertificateInapplicable("aggregate certificate needs n >= d");
  }
  const double s = smallest_singular_value(kron_matrix(inst));
  if (s == 0.0) throw CertificateInapplicable("A1 (x) A2 is rank deficient");
  return margin * s * s;
}

bool strong_convexity_certificate(const AttentionInstance& inst, double mu, CertificateForm form) {
  if (!(mu > 0.0)) throw ConfigError("mu must be positive");
  const int n = inst.n();
  const double lhs = min_w_sq(inst);
  if (form == CertificateForm::kPerBlock) {
    if (n < inst.dim()) {
      throw CertificateInapplicable("per-block certificate needs n >= d^2");
    }
    for (int j = 0; j < n; ++j) {
      const double s = smallest_singular_value(kron_block(inst, j));
      if (s == 0.0) {
        throw CertificateInapplicable("block " + std::to_string(j) +
                                      " of A1 (x) A2 is rank deficient");
      }
      if (lhs < 4.0 + mu / (s * s * n)) return false;
    }
    return true;
  }
  if (n < inst.d()) throw CertificateInapplicable("aggregate certificate needs n >= d");
  const double s = smallest_singular_value(kron_matrix(inst));
  if (s == 0.0) throw CertificateInapplicable("A1 (x) A2 is rank deficient");
  return lhs >= 4.0 + mu / (s * s);
}

}  // namespace gradchain::attention
