#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace gradchain::attention {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Problem data for the softmax attention-regression objective
///
///   L(x) = sum_j 0.5 |softmax(A_[j] x) - b_[j]|^2 + 0.5 |diag(w) A_[j] x|^2
///
/// where A = A1 (x) A2 is the n^2 x d^2 Kronecker matrix and A_[j] its j-th
/// row block of n rows. Weights x are the row-major vectorization of a d x d
/// matrix X: X(p, q) = x[p * d + q]. Block indices are 0-based.
class AttentionInstance {
 public:
  AttentionInstance(Matrix a1, Matrix a2, Vector b_target, Vector w);

  int n() const { return static_cast<int>(a1_.rows()); }
  int d() const { return static_cast<int>(a1_.cols()); }
  int dim() const { return d() * d(); }

  const Matrix& a1() const { return a1_; }
  const Matrix& a2() const { return a2_; }
  const Vector& b_target() const { return b_; }
  const Vector& w() const { return w_; }

  Eigen::Ref<const Vector> target_block(int j) const;

 private:
  Matrix a1_;
  Matrix a2_;
  Vector b_;
  Vector w_;
};

// Seeded instance: A1, A2 ~ U(-1, 1), each b_[j] the softmax of N(0, 1)
// logits, w_i ~ U(w_lo, w_hi).
AttentionInstance random_instance(int n, int d, std::uint64_t seed, double w_lo = 2.5,
                                  double w_hi = 3.5);

// Rows j*n .. j*n+n-1 of A1 (x) A2: entry (i, p*d + q) = A1(j, p) * A2(i, q).
Matrix kron_block(const AttentionInstance& inst, int j);

// The full n^2 x d^2 matrix A1 (x) A2.
Matrix kron_matrix(const AttentionInstance& inst);

// vec(X) <-> X, row-major.
Matrix unvec(const Vector& x, int d);
Vector vec(const Matrix& m);

// Compares vec(A1 mat(x) A2^T) against (A1 (x) A2) x, each computed on its
// own code path, within 1e-10 * (1 + |Ax|_inf).
bool vec_identity_check(const AttentionInstance& inst, const Vector& x);

// Softmax of one block. alpha = sum_i exp(logit_i) is kept as
// exp(shift) * residual_sum so it never overflows.
struct SoftmaxBlock {
  Vector logits;
  Vector probs;
  double shift = 0.0;
  double residual_sum = 0.0;

  // alpha(x)_j; may be +inf when the logits are large.
  double alpha() const;
  // u(x)_j = exp(logits); only when every |logit| <= 500.
  std::optional<Vector> unshifted() const;
};

SoftmaxBlock softmax_block(const AttentionInstance& inst, const Vector& x, int j);

struct LossBreakdown {
  double total = 0.0;
  double exp_part = 0.0;
  double reg_part = 0.0;
  Vector per_block;
};

LossBreakdown loss(const AttentionInstance& inst, const Vector& x);

// Sum of L_j over the given blocks, in the given order.
double loss_blocks(const AttentionInstance& inst, const Vector& x, std::span<const int> blocks);

Vector gradient(const AttentionInstance& inst, const Vector& x);

// Gradient of sum_{j in blocks} L_j, accumulated in the given order.
Vector gradient_blocks(const AttentionInstance& inst, const Vector& x,
                       std::span<const int> blocks);

inline constexpr int kDefaultHessianMaxDim = 64;

// Dense, exactly symmetric Hessian of L. Throws CapacityError when
// d^2 > max_dim.
Matrix hessian(const AttentionInstance& inst, const Vector& x,
               int max_dim = kDefaultHessianMaxDim);

Matrix hessian_blocks(const AttentionInstance& inst, const Vector& x,
                      std::span<const int> blocks, int max_dim = kDefaultHessianMaxDim);

// Constant Hessian of the regularization term, sum_j A_[j]^T W^2 A_[j].
Matrix regularization_hessian(const AttentionInstance& inst);

enum class CertificateForm {
  // min w^2 >= 4 + mu / (sigma_min^2(A_[j]) n) for every block j. Needs each
  // A_[j] to have full column rank, which only happens for d = 1.
  kPerBlock,
  // min w^2 >= 4 + mu / sigma_min^2(A). Implied by the per-block form.
  kAggregate,
};

// Throws CertificateInapplicable when the rank precondition fails.
bool strong_convexity_certificate(const AttentionInstance& inst, double mu,
                                  CertificateForm form = CertificateForm::kPerBlock);

// Largest mu for which the certificate holds (may be <= 0 if min w^2 <= 4).
// Throws CertificateInapplicable like strong_convexity_certificate.
double certified_mu(const AttentionInstance& inst,
                    CertificateForm form = CertificateForm::kPerBlock);

}  // namespace gradchain::attention
