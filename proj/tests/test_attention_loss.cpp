#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gradchain/attention_loss.hpp"
#include "gradchain/error.hpp"
#include "gradchain/rng.hpp"
#include "oracles.hpp"

namespace {

using namespace gradchain;
using namespace gradchain::attention;

AttentionInstance hand_instance() {
  Matrix a1(2, 1), a2(2, 1);
  a1 << 1, 1;
  a2 << 1, 2;
  Vector b = Vector::Constant(4, 0.5);
  Vector w = Vector::Constant(2, 3.0);
  return AttentionInstance(a1, a2, b, w);
}

Vector random_x(int dim, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  Vector x(dim);
  for (int i = 0; i < dim; ++i) x(i) = scale * rng.normal();
  return x;
}

double ref_loss(const AttentionInstance& inst, const Vector& x) {
  return oracle::loss(inst.a1(), inst.a2(), inst.b_target(), inst.w(), x);
}

TEST(AttentionInstance, RejectsBadShapes) {
  Matrix a1 = Matrix::Ones(2, 2);
  EXPECT_THROW(AttentionInstance(a1, Matrix::Ones(3, 2), Vector::Zero(4), Vector::Ones(2)), DimensionError);
  EXPECT_THROW(AttentionInstance(a1, a1, Vector::Zero(3), Vector::Ones(2)), DimensionError);
  EXPECT_THROW(AttentionInstance(a1, a1, Vector::Zero(4), Vector::Ones(3)), DimensionError);
}

TEST(KronBlock, HandExample) {
  const auto inst = hand_instance();
  Matrix expected(2, 1);
  expected << 1, 2;
  EXPECT_EQ(kron_block(inst, 0), expected);
}

TEST(KronBlock, ZeroA2GivesZero) {
  const auto r = random_instance(3, 2, 5);
  AttentionInstance inst(r.a1(), Matrix::Zero(3, 2), r.b_target(), r.w());
  for (int j = 0; j < 3; ++j) EXPECT_TRUE(kron_block(inst, j).isZero(0.0));
}

TEST(KronBlock, MatchesTextbookKronecker) {
  const auto inst = random_instance(4, 3, 11);
  const Matrix full = oracle::kron(inst.a1(), inst.a2());
  EXPECT_EQ(kron_matrix(inst), full);
  for (int j = 0; j < 4; ++j) EXPECT_EQ(kron_block(inst, j), full.middleRows(j * 4, 4));
}

TEST(KronBlock, UnitRowPlacesA2InColumnBlock) {
  const int n = 3, d = 2;
  Matrix a1 = Matrix::Zero(n, d);
  a1(1, 1) = 1.0;  // row j = 1 is e_1
  Matrix a2 = Matrix::Zero(n, d);
  a2.topRows(2) = Matrix::Identity(2, 2);
  AttentionInstance inst(a1, a2, Vector::Zero(n * n), Vector::Ones(n));
  const Matrix blk = kron_block(inst, 1);
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < d; ++p) {
      for (int q = 0; q < d; ++q) EXPECT_EQ(blk(i, p * d + q), p == 1 ? a2(i, q) : 0.0);
    }
  }
}

TEST(KronBlock, OutOfRangeThrows) {
  const auto inst = hand_instance();
  EXPECT_THROW(kron_block(inst, 2), IndexError);
  EXPECT_THROW(kron_block(inst, -1), IndexError);
}

TEST(VecIdentity, HoldsAtZeroRandomAndIdentity) {
  const auto inst = random_instance(3, 2, 9);
  EXPECT_TRUE(vec_identity_check(inst, Vector::Zero(4)));
  EXPECT_TRUE(vec_identity_check(inst, random_x(4, 3)));
  const Vector eye = oracle::vec_rows(Matrix::Identity(2, 2));
  EXPECT_TRUE(vec_identity_check(inst, eye));
  const Vector lhs = oracle::vec_rows(inst.a1() * inst.a2().transpose());
  EXPECT_LE((kron_matrix(inst) * eye - lhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(VecRoundTrip, RowMajorConvention) {
  Vector x(4);
  x << 1, 2, 3, 4;
  const Matrix m = unvec(x, 2);
  EXPECT_EQ(m(0, 1), 2.0);
  EXPECT_EQ(m(1, 0), 3.0);
  EXPECT_EQ(vec(m), x);
}

TEST(Softmax, ZeroInputIsUniform) {
  const auto inst = random_instance(4, 2, 1);
  const auto s = softmax_block(inst, Vector::Zero(4), 2);
  EXPECT_TRUE(s.logits.isZero(0.0));
  EXPECT_DOUBLE_EQ(s.alpha(), 4.0);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(s.probs(i), 0.25);
}

TEST(Softmax, HandExample) {
  const auto inst = hand_instance();
  Vector x(1);
  x << std::log(2.0);
  const auto s = softmax_block(inst, x, 0);
  const auto u = s.unshifted();
  ASSERT_TRUE(u.has_value());
  EXPECT_NEAR((*u)(0), 2.0, 1e-14);
  EXPECT_NEAR((*u)(1), 4.0, 1e-14);
  EXPECT_NEAR(s.alpha(), 6.0, 1e-14);
  EXPECT_NEAR(s.probs(0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.probs(1), 2.0 / 3.0, 1e-15);
}

TEST(Softmax, SingleRowIsOne) {
  const auto inst = random_instance(1, 1, 3);
  Vector x(1);
  x << 7.5;
  EXPECT_EQ(softmax_block(inst, x, 0).probs(0), 1.0);
}

TEST(Softmax, NormalizedAndPositiveForLargeLogits) {
  const auto inst = random_instance(4, 2, 17);
  for (double scale : {0.1, 10.0, 400.0}) {
    const Vector x = random_x(4, 23, scale);
    for (int j = 0; j < 4; ++j) {
      const auto s = softmax_block(inst, x, j);
      EXPECT_NEAR(s.probs.sum(), 1.0, 1e-12);
      EXPECT_GE(s.probs.minCoeff(), 0.0);
      EXPECT_LE(s.probs.maxCoeff(), 1.0);
    }
  }
  const auto big = softmax_block(inst, random_x(4, 23, 2000.0), 0);
  EXPECT_FALSE(big.unshifted().has_value());
}

TEST(Softmax, NonFiniteInputNamesBlock) {
  const auto inst = random_instance(3, 2, 2);
  Vector x = Vector::Zero(4);
  x(0) = std::nan("");
  try {
    softmax_block(inst, x, 1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.block(), 1);
  }
}

TEST(Loss, UniformTargetAtZeroIsZero) {
  const auto r = random_instance(3, 2, 4);
  AttentionInstance inst(r.a1(), r.a2(), Vector::Constant(9, 1.0 / 3.0), r.w());
  const auto lb = loss(inst, Vector::Zero(4));
  EXPECT_NEAR(lb.total, 0.0, 1e-30);
  EXPECT_TRUE(gradient(inst, Vector::Zero(4)).isZero(1e-300));
}

TEST(Loss, ZeroInputArbitraryTarget) {
  const auto inst = random_instance(4, 2, 8);
  const auto lb = loss(inst, Vector::Zero(4));
  double expected = 0.0;
  for (int k = 0; k < 16; ++k) expected += 0.5 * std::pow(0.25 - inst.b_target()(k), 2);
  EXPECT_NEAR(lb.exp_part, expected, 1e-15);
  EXPECT_EQ(lb.reg_part, 0.0);
}

TEST(Loss, MatchesStraightLineOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = random_instance(3, 2, seed);
    const Vector x = random_x(4, seed + 100);
    EXPECT_LE(oracle::rel_diff(loss(inst, x).total, ref_loss(inst, x)), 1e-12) << "seed " << seed;
  }
}

TEST(Loss, BreakdownIsConsistent) {
  const auto inst = random_instance(4, 3, 12);
  const auto lb = loss(inst, random_x(9, 5));
  EXPECT_LE(oracle::rel_diff(lb.total, lb.exp_part + lb.reg_part), 1e-12);
  EXPECT_LE(oracle::rel_diff(lb.total, lb.per_block.sum()), 1e-12);
  EXPECT_GE(lb.exp_part, 0.0);
  EXPECT_GE(lb.reg_part, 0.0);
  EXPECT_GE(lb.per_block.minCoeff(), 0.0);
  std::vector<int> all(4);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_LE(oracle::rel_diff(loss_blocks(inst, random_x(9, 5), all), lb.total), 1e-12);
}

TEST(Gradient, SingleRowHasOnlyRegularizationPart) {
  const auto r = random_instance(1, 2, 6);
  AttentionInstance inst(r.a1(), r.a2(), r.b_target(), Vector::Constant(1, 1e-6));
  const Vector x = random_x(4, 7);
  const Vector g = gradient(inst, x);
  const Vector reg = regularization_hessian(inst) * x;
  EXPECT_LE((g - reg).norm(), 1e-15);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = random_instance(4, 3, 1000 + seed);
    const Vector x = random_x(9, 2000 + seed);
    const Vector fd = oracle::fd_gradient([&](const Vector& y) { return ref_loss(inst, y); }, x, 1e-5);
    EXPECT_LE(oracle::rel_error(gradient(inst, x), fd), 1e-6) << "seed " << seed;
  }
}

TEST(Gradient, BlocksSumToFull) {
  const auto inst = random_instance(4, 2, 31);
  const Vector x = random_x(4, 32);
  const std::vector<int> a{0, 2}, b{1, 3};
  const Vector sum = gradient_blocks(inst, x, a) + gradient_blocks(inst, x, b);
  EXPECT_LE((sum - gradient(inst, x)).norm(), 1e-12 * (1 + sum.norm()));
}

TEST(Hessian, SingleRowIsRegularizationOnly) {
  const auto inst = random_instance(1, 2, 13);
  const Matrix h = hessian(inst, random_x(4, 14));
  EXPECT_LE((h - regularization_hessian(inst)).cwiseAbs().maxCoeff(), 1e-12);
  const Matrix k = kron_matrix(inst);
  const Matrix reg = k.transpose() * inst.w().array().square().matrix().asDiagonal() * k;
  EXPECT_LE((regularization_hessian(inst) - reg).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Hessian, MatchesFiniteDifferencesOfGradient) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = random_instance(3, 2, 300 + seed);
    const Vector x = random_x(4, 400 + seed);
    const Matrix fd = oracle::fd_jacobian([&](const Vector& y) { return gradient(inst, y); }, x, 1e-5);
    EXPECT_LE(oracle::rel_error(hessian(inst, x), fd), 1e-5) << "seed " << seed;
  }
}

TEST(Hessian, ExactlySymmetric) {
  const auto inst = random_instance(5, 3, 77);
  const Matrix h = hessian(inst, random_x(9, 78, 2.0));
  EXPECT_EQ((h - h.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Hessian, CapacityGuard) {
  const auto inst = random_instance(2, 9, 1);
  EXPECT_THROW(hessian(inst, Vector::Zero(81)), CapacityError);
  EXPECT_NO_THROW(hessian(inst, Vector::Zero(81), 81));
}

TEST(Hessian, LargestEigenvalueBoundedOverBall) {
  const auto inst = random_instance(4, 2, 50);
  double lmax = 0.0;
  for (std::uint64_t s = 0; s < 30; ++s) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian(inst, random_x(4, s, 1.0)));
    lmax = std::max(lmax, eig.eigenvalues().maxCoeff());
  }
  EXPECT_TRUE(std::isfinite(lmax));
  // Exp part contributes at most 2.5 |A_j|^2 per block on top of the regularizer.
  Eigen::SelfAdjointEigenSolver<Matrix> reg(regularization_hessian(inst));
  EXPECT_LE(lmax, reg.eigenvalues().maxCoeff() + 2.5 * kron_matrix(inst).squaredNorm());
}

TEST(Certificate, SingleColumnPerBlockForm) {
  const int n = 4;
  const auto r = random_instance(n, 1, 21);
  AttentionInstance inst(r.a1(), r.a2(), r.b_target(), Vector::Constant(n, 3.0));
  double smin2 = INFINITY;
  for (int j = 0; j < n; ++j) {
    Eigen::JacobiSVD<Matrix> svd(kron_block(inst, j));
    smin2 = std::min(smin2, std::pow(svd.singularValues().minCoeff(), 2));
  }
  const double mu = n * smin2 * 4.0;  // 4 + mu / (smin^2 n) = 8 <= 9
  EXPECT_TRUE(strong_convexity_certificate(inst, mu));
  EXPECT_FALSE(strong_convexity_certificate(inst, mu * 1.3));
}

TEST(Certificate, SmallWeightsFail) {
  const auto r = random_instance(4, 1, 22);
  AttentionInstance inst(r.a1(), r.a2(), r.b_target(), Vector::Ones(4));
  EXPECT_FALSE(strong_convexity_certificate(inst, 1e-9));
  EXPECT_FALSE(strong_convexity_certificate(inst, 1e-9, CertificateForm::kAggregate));
}

TEST(Certificate, RankDeficientBlocksAreInapplicable) {
  EXPECT_THROW(strong_convexity_certificate(random_instance(3, 2, 1), 0.1), CertificateInapplicable);
  // Each block a1_j^T (x) A2 has rank <= d < d^2 even when n >= d^2.
  EXPECT_THROW(strong_convexity_certificate(random_instance(6, 2, 1), 0.1), CertificateInapplicable);
  EXPECT_NO_THROW(strong_convexity_certificate(random_instance(6, 2, 1), 0.1, CertificateForm::kAggregate));
  EXPECT_THROW(strong_convexity_certificate(random_instance(1, 2, 1), 0.1, CertificateForm::kAggregate),
               CertificateInapplicable);
}

TEST(Certificate, NonPositiveMuRejected) {
  EXPECT_THROW(strong_convexity_certificate(random_instance(4, 1, 1), 0.0), ConfigError);
}

TEST(Certificate, AggregateFormIsRealized) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto inst = random_instance(5, 2, 900 + seed);
    const double mu = certified_mu(inst, CertificateForm::kAggregate);
    ASSERT_GT(mu, 0.0);
    EXPECT_TRUE(strong_convexity_certificate(inst, mu * 0.999, CertificateForm::kAggregate));
    for (std::uint64_t k = 0; k < 10; ++k) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian(inst, random_x(4, 50 * seed + k, 2.0)));
      EXPECT_GE(eig.eigenvalues().minCoeff(), mu - 1e-8);
    }
  }
}

}  // namespace
