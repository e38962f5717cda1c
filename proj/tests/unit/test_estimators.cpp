#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <memory>
#include <numeric>

using namespace kaf;

namespace {

KernelParams fixed_kernel(double eps, int knn)
{
  KernelParams p;
  p.epsilon = eps;
  p.fixed_rho = 1.0;
  p.alpha = 0.0;
  p.d = 1.0;
  p.knn = knn;
  return p;
}

struct Fit
{
  std::shared_ptr<const MarkovOperator> op;
  std::shared_ptr<const EigenBasis> basis;
};

Fit fit_basis(const RowMatrix& x, const KernelParams& p, int L,
              ProjectionMeasure m = ProjectionMeasure::stationary)
{
  Fit f;
  f.op = std::make_shared<const MarkovOperator>(build_markov(x, p));
  f.basis = std::make_shared<const EigenBasis>(eigendecompose(*f.op, L, m));
  return f;
}

//! Dense reference: right eigenvectors of P through the symmetric conjugate,
//! eigenvalues descending.
struct DenseEigen
{
  Vector values;
  Eigen::MatrixXd vectors;
};

DenseEigen dense_eigen(const MarkovOperator& op)
{
  const Eigen::MatrixXd p = test::dense(op.P);
  const Vector s = op.row_sum.array().sqrt();
  const Eigen::MatrixXd a = s.asDiagonal() * p * s.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  DenseEigen out;
  out.values = es.eigenvalues().reverse();
  out.vectors = s.cwiseInverse().asDiagonal() * es.eigenvectors().rowwise().reverse();
  return out;
}

} // namespace

TEST(Lanczos, MatchesDenseSolverOnRandomSymmetricMatrix)
{
  Rng rng(41);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index n = 300;
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      a(i, j) = normal(rng);
  a = (0.5 * (a + a.transpose())).eval();
  const LanczosResult r = lanczos_largest(
    [&](const Vector& x, Vector& y) { y.noalias() = a * x; }, n, 12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  for (int j = 0; j < 12; ++j) {
    EXPECT_NEAR(r.values[j], es.eigenvalues()[n - 1 - j], 1e-8);
    EXPECT_NEAR(std::abs(r.vectors.col(j).dot(es.eigenvectors().col(n - 1 - j))), 1.0, 1e-8);
  }
}

TEST(EigenBasis, TwoPointOperator)
{
  RowMatrix x(2, 1);
  x << 0.0, 0.0;
  const Fit f = fit_basis(x, fixed_kernel(1.0, 2), 1);
  EXPECT_NEAR(f.basis->eigenvalues[0], 1.0, 1e-14);
  EXPECT_NEAR(f.basis->eigenvalues[1], 0.0, 1e-14);
  EXPECT_NEAR(f.basis->phi(0, 0), f.basis->phi(1, 0), 1e-14);
}

TEST(EigenBasis, MatchesDenseOracleOnRandomGeometricGraphs)
{
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng = split_stream(42, static_cast<std::uint64_t>(trial));
    const RowMatrix x = test::uniform_cloud(50, 2, rng);
    KernelParams p;
    p.knn = 12;
    const int L = 15;
    const Fit f = fit_basis(x, p, L);
    const DenseEigen ref = dense_eigen(*f.op);
    const Vector& w = f.basis->weights;
    for (int j = 0; j <= L; ++j) {
      EXPECT_NEAR(f.basis->eigenvalues[j], ref.values[j], 1e-8);
      // Compare spectral projectors of the eigenvalue cluster containing j so
      // that nearly degenerate pairs are judged up to rotation.
      std::vector<int> block;
      for (int i = 0; i <= L; ++i)
        if (std::abs(ref.values[i] - ref.values[j]) < 1e-6)
          block.push_back(i);
      if (block.back() == L && block.size() > 1)
        continue;
      Eigen::MatrixXd a(50, static_cast<Eigen::Index>(block.size()));
      Eigen::MatrixXd b(50, static_cast<Eigen::Index>(block.size()));
      for (std::size_t c = 0; c < block.size(); ++c) {
        a.col(static_cast<Eigen::Index>(c)) = f.basis->phi.col(block[c]);
        Vector v = ref.vectors.col(block[c]);
        v /= std::sqrt(v.dot(w.asDiagonal() * v));
        b.col(static_cast<Eigen::Index>(c)) = v;
      }
      const Eigen::MatrixXd pa = a * a.transpose() * w.asDiagonal();
      const Eigen::MatrixXd pb = b * b.transpose() * w.asDiagonal();
      EXPECT_LT((pa - pb).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial << " j " << j;
    }
  }
}

TEST(EigenBasis, ResidualsAndNormalization)
{
  Rng rng(43);
  const Fit f = fit_basis(test::uniform_cloud(1000, 2, rng), KernelParams{}, 30);
  const Eigen::MatrixXd pphi = f.op->P * f.basis->phi;
  for (int j = 0; j <= 30; ++j) {
    const Vector r = pphi.col(j) - f.basis->eigenvalues[j] * f.basis->phi.col(j);
    EXPECT_LE(r.norm(), 1e-8 * f.basis->phi.col(j).norm());
  }
  EXPECT_TRUE(f.basis->gram().isIdentity(1e-8));
  EXPECT_NEAR(f.basis->weights.sum(), 1.0, 1e-12);
}

TEST(EigenBasis, SignRuleAndDeterminism)
{
  Rng rng(44);
  const RowMatrix x = test::uniform_cloud(500, 2, rng);
  const Fit a = fit_basis(x, KernelParams{}, 10);
  const Fit b = fit_basis(x, KernelParams{}, 10);
  EXPECT_EQ(a.basis->phi, b.basis->phi);
  for (int j = 0; j <= 10; ++j) {
    Eigen::Index at = 0;
    a.basis->phi.col(j).cwiseAbs().maxCoeff(&at);
    EXPECT_GT(a.basis->phi(at, j), 0.0);
  }
}

TEST(EigenBasis, UniformMeasureNormalization)
{
  Rng rng(45);
  const Fit f = fit_basis(test::uniform_cloud(400, 2, rng), KernelParams{}, 10,
                          ProjectionMeasure::uniform);
  EXPECT_TRUE((f.basis->weights.array() == 1.0 / 400.0).all());
  const Eigen::MatrixXd g = f.basis->gram();
  for (int j = 0; j <= 10; ++j)
    EXPECT_NEAR(g(j, j), 1.0, 1e-10);
}

class NystromMeasure : public ::testing::TestWithParam<ProjectionMeasure>
{};

TEST_P(NystromMeasure, EigenvectorResponseGivesUnitCoefficient)
{
  Rng rng(46);
  const Fit f = fit_basis(test::uniform_cloud(400, 2, rng), KernelParams{}, 12, GetParam());
  const NystromEstimator est = fit_nystrom(f.op, f.basis, RowMatrix(f.basis->phi.col(1)), 12);
  for (int j = 0; j < est.terms; ++j)
    EXPECT_NEAR(est.coefficients(j, 0), j == 1 ? 1.0 : 0.0, 1e-8);
}

TEST_P(NystromMeasure, ConstantResponse)
{
  Rng rng(47);
  const Fit f = fit_basis(test::uniform_cloud(400, 2, rng), KernelParams{}, 12, GetParam());
  const NystromEstimator est =
    fit_nystrom(f.op, f.basis, RowMatrix::Constant(400, 1, 2.5), 12);
  EXPECT_NEAR(est.coefficients(0, 0) * f.basis->phi(0, 0), 2.5, 1e-10);
  EXPECT_LT((est.fitted().array() - 2.5).abs().maxCoeff(), 1e-8);
  const RowMatrix pred = predict_nystrom(est, test::uniform_cloud(50, 2, rng));
  EXPECT_LT((pred.array() - 2.5).abs().maxCoeff(), 1e-6);
}

TEST_P(NystromMeasure, ResidualIsOrthogonalToBasis)
{
  Rng rng(48);
  const Fit f = fit_basis(test::uniform_cloud(600, 2, rng), KernelParams{}, 20, GetParam());
  RowMatrix y(600, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < 600; ++i)
    y(i, 0) = std::sin(5.0 * f.op->points(i, 0)) + normal(rng);
  const NystromEstimator est = fit_nystrom(f.op, f.basis, y, 20);
  const Eigen::MatrixXd r = y - est.fitted();
  const Vector inner =
    f.basis->phi.leftCols(est.terms).transpose() * f.basis->weights.asDiagonal() * r;
  EXPECT_LT(inner.cwiseAbs().maxCoeff(), 1e-10);
}

TEST_P(NystromMeasure, CompleteBasisReproducesResponses)
{
  RowMatrix x(30, 1);
  for (Eigen::Index i = 0; i < 30; ++i)
    x(i, 0) = double(i);
  const Fit f = fit_basis(x, fixed_kernel(0.5, 30), 29, GetParam());
  Rng rng(49);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix y(30, 2);
  for (Eigen::Index i = 0; i < 30; ++i)
    y.row(i) << normal(rng), normal(rng);
  const NystromEstimator est = fit_nystrom(f.op, f.basis, y, 29);
  EXPECT_EQ(est.terms, 30);
  EXPECT_LT((est.fitted() - y).cwiseAbs().maxCoeff(), 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Measures, NystromMeasure,
                         ::testing::Values(ProjectionMeasure::stationary,
                                           ProjectionMeasure::uniform),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Nystrom, EigenvalueFloorTruncates)
{
  RowMatrix x(40, 1);
  for (Eigen::Index i = 0; i < 40; ++i)
    x(i, 0) = 0.05 * double(i);
  const Fit f = fit_basis(x, fixed_kernel(4.0, 40), 39);
  const NystromEstimator est = fit_nystrom(f.op, f.basis, RowMatrix::Ones(40, 1), 39);
  EXPECT_LT(est.terms, 40);
  EXPECT_EQ(est.terms + est.dropped, 40);
  for (int j = 0; j < est.terms; ++j)
    EXPECT_GE(f.basis->eigenvalues[j], eigenvalue_floor * f.basis->eigenvalues[0]);
}

TEST(Nystrom, InterpolatesAtTrainingPoints)
{
  Rng rng(50);
  Vector th;
  const RowMatrix x = test::circle_points(2000, &rng, &th);
  const Fit f = fit_basis(x, KernelParams{}, 20);
  const NystromEstimator est = fit_nystrom(f.op, f.basis, RowMatrix(th.array().sin().matrix()), 20);
  const RowMatrix pred = predict_nystrom(est, RowMatrix(x.topRows(100)));
  EXPECT_LT((pred - est.fitted().topRows(100)).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Nystrom, SineOnCircleRegression)
{
  Rng rng(51);
  Vector th, th_out;
  const RowMatrix x = test::circle_points(4000, &rng, &th);
  const RowMatrix x_out = test::circle_points(1000, &rng, &th_out);
  const Fit f = fit_basis(x, KernelParams{}, 20);
  const NystromEstimator est = fit_nystrom(f.op, f.basis, RowMatrix(th.array().sin().matrix()), 20);
  const Vector pred = predict_nystrom(est, x_out).col(0);
  EXPECT_LT(rmse(pred, th_out.array().sin().matrix()), 0.02);
}

TEST(Nystrom, LeadZeroBeatsKernelSmoothingOnLorenz96)
{
  const SystemSpec spec = lorenz96_spec(5, 8.0, 1.0 / 64.0);
  Rng rng(52);
  const RowMatrix train = sample_invariant(spec, 4000, 50.0, rng);
  const RowMatrix test_pts = sample_invariant(spec, 500, 50.0, rng);
  const RowMatrix x = train.col(0);
  const RowMatrix xq = test_pts.col(0);
  auto op = std::make_shared<const MarkovOperator>(build_markov(x, KernelParams{}));
  auto basis = std::make_shared<const EigenBasis>(eigendecompose(*op, 300));
  const NystromEstimator ny = fit_nystrom(op, basis, x, 300);
  const SmoothingEstimator ks = fit_kernel_smoothing(op, x);
  const SparseRows ext = extend_rows(*op, xq);
  const double e_ny = rmse(predict_nystrom(ny, ext).col(0), xq.col(0));
  const double e_ks = rmse(predict_kernel_smoothing(ks, ext).col(0), xq.col(0));
  EXPECT_LT(e_ny, e_ks);
}

TEST(KernelSmoothing, ConstantAndIndicatorResponses)
{
  Rng rng(53);
  auto op = std::make_shared<const MarkovOperator>(
    build_markov(test::uniform_cloud(300, 2, rng), KernelParams{}));
  const SmoothingEstimator c = fit_kernel_smoothing(op, RowMatrix::Constant(300, 1, -1.5));
  EXPECT_LT((c.fitted().array() + 1.5).abs().maxCoeff(), 1e-12);
  RowMatrix e = RowMatrix::Zero(300, 1);
  e(42, 0) = 1.0;
  const SmoothingEstimator ind = fit_kernel_smoothing(op, e);
  EXPECT_LT((ind.fitted().col(0) - test::dense(op->P).col(42)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(KernelSmoothing, CircleBiasAndHeldOutRegression)
{
  Rng rng(54);
  Vector th, th_out;
  const RowMatrix x = test::circle_points(4000, &rng, &th);
  const RowMatrix x_out = test::circle_points(1000, &rng, &th_out);
  auto op = std::make_shared<const MarkovOperator>(build_markov(x, KernelParams{}));
  const SmoothingEstimator cos_est = fit_kernel_smoothing(op, RowMatrix(th.array().cos().matrix()));
  EXPECT_LT((cos_est.fitted().col(0) - Vector(th.array().cos())).cwiseAbs().maxCoeff(), 0.05);
  const SmoothingEstimator sin_est = fit_kernel_smoothing(op, RowMatrix(th.array().sin().matrix()));
  const Vector pred = predict_kernel_smoothing(sin_est, x_out).col(0);
  EXPECT_LT(rmse(pred, th_out.array().sin().matrix()), 0.05);
}

TEST(KernelSmoothing, TrainingPointAndConvexity)
{
  Rng rng(55);
  const RowMatrix x = test::uniform_cloud(500, 2, rng);
  auto op = std::make_shared<const MarkovOperator>(build_markov(x, KernelParams{}));
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix y(500, 2);
  for (Eigen::Index i = 0; i < 500; ++i)
    y.row(i) << normal(rng), normal(rng);
  const SmoothingEstimator est = fit_kernel_smoothing(op, y);
  const RowMatrix at_train = predict_kernel_smoothing(est, RowMatrix(x.topRows(20)));
  EXPECT_LT((at_train - est.fitted().topRows(20)).cwiseAbs().maxCoeff(), 1e-6);
  const RowMatrix out = predict_kernel_smoothing(est, test::uniform_cloud(200, 2, rng));
  for (int c = 0; c < 2; ++c) {
    EXPECT_GE(out.col(c).minCoeff(), y.col(c).minCoeff());
    EXPECT_LE(out.col(c).maxCoeff(), y.col(c).maxCoeff());
  }
}

TEST(KernelSmoothing, JointPermutationInvariance)
{
  Rng rng(56);
  const RowMatrix x = test::uniform_cloud(300, 2, rng);
  const RowMatrix q = test::uniform_cloud(40, 2, rng);
  RowMatrix y(300, 1);
  for (Eigen::Index i = 0; i < 300; ++i)
    y(i, 0) = x(i, 0) * x(i, 0) - x(i, 1);
  std::vector<Eigen::Index> perm(300);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  RowMatrix xp(300, 2), yp(300, 1);
  for (Eigen::Index i = 0; i < 300; ++i) {
    xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    yp.row(i) = y.row(perm[static_cast<std::size_t>(i)]);
  }
  KernelParams p;
  p.knn = 32;
  const RowMatrix a = predict_kernel_smoothing(
    fit_kernel_smoothing(std::make_shared<const MarkovOperator>(build_markov(x, p)), y), q);
  const RowMatrix b = predict_kernel_smoothing(
    fit_kernel_smoothing(std::make_shared<const MarkovOperator>(build_markov(xp, p)), yp), q);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Metrics, RmseCurve)
{
  RowMatrix truth(3, 2);
  truth << 1, 2, 3, 4, 5, 6;
  EXPECT_TRUE(rmse_curve(truth, truth).isZero(0.0));
  const Vector off = rmse_curve(RowMatrix(truth.array() + 0.25), truth);
  EXPECT_NEAR(off[0], 0.25, 1e-15);
  EXPECT_NEAR(off[1], 0.25, 1e-15);

  RowMatrix p(2, 2), t(2, 2);
  p << 1, 0, 2, 4;
  t << 0, 0, 0, 1;
  const Vector c = rmse_curve(p, t);
  EXPECT_DOUBLE_EQ(c[0], std::sqrt((1.0 + 4.0) / 2.0));
  EXPECT_DOUBLE_EQ(c[1], std::sqrt(9.0 / 2.0));
  // Two response components per lead.
  const Vector joint = rmse_curve(p, t, 2);
  ASSERT_EQ(joint.size(), 1);
  EXPECT_DOUBLE_EQ(joint[0], std::sqrt(14.0 / 4.0));
}
