#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace kaf;

namespace {

struct NoisyLorenz63
{
  Vector truth;
  Vector noisy;
};

NoisyLorenz63 lorenz63_series(Eigen::Index n, double variance, std::uint64_t seed)
{
  Rng rng(seed);
  const Trajectory t = attractor_trajectory(lorenz63_spec(), n, 50.0, rng);
  return { t.states.col(0), apply_noise(t, 0, NoiseModel{ GaussianNoise{ variance }, seed + 1 }) };
}

} // namespace

TEST(Smoother, NoiseFreeSelfConsistency)
{
  const NoisyLorenz63 train = lorenz63_series(12000, 0.0, 61);
  const NoisyLorenz63 test = lorenz63_series(2000, 0.0, 62);
  // The truncated expansion of a coordinate function converges slowly in L:
  // RMSE is about 0.29 at L = 120, 0.10 at L = 1000 and 0.07 at L = 1500.
  const SmootherModel model = fit_smoother(train.noisy, 5, 5, 1500, KernelParams{});
  const DenoisedSequence d = denoise_sequence(model, test.noisy);
  EXPECT_LT(smoother_rmse(d, test.truth), 0.1);
}

TEST(Smoother, ConstantSeriesGivesConstant)
{
  KernelParams p;
  p.fixed_rho = 1.0;
  p.epsilon = 1.0;
  p.d = 1.0;
  p.knn = 20;
  const SmootherModel model = fit_smoother(Vector::Constant(50, 3.25), 4, 2, 3, p);
  const DenoisedSequence d = denoise_sequence(model, Vector::Constant(10, 3.25));
  EXPECT_LT((d.estimates.array() - 3.25).abs().maxCoeff(), 1e-10);
}

TEST(Smoother, WindowAlignment)
{
  const NoisyLorenz63 train = lorenz63_series(1500, 4.0, 63);
  const SmootherModel model = fit_smoother(train.noisy, 5, 2, 30, KernelParams{});
  const DenoisedSequence single = denoise_sequence(model, Vector(train.noisy.head(5)));
  ASSERT_EQ(single.estimates.size(), 1);
  EXPECT_EQ(single.first_index_1based(), 2);
  EXPECT_EQ(single.last_index_1based(), 2);

  const DenoisedSequence full = denoise_sequence(model, Vector(train.noisy.head(100)));
  EXPECT_EQ(full.estimates.size(), 96);
  // Covered range is [k, T - (m_s - k)] in 1-based indices.
  EXPECT_EQ(full.first_index_1based(), 2);
  EXPECT_EQ(full.last_index_1based(), 100 - 3);
}

TEST(Smoother, InSampleNotWorseThanOutOfSample)
{
  const NoisyLorenz63 train = lorenz63_series(3000, 4.0, 64);
  const NoisyLorenz63 test = lorenz63_series(3000, 4.0, 65);
  const SmootherModel model = fit_smoother(train.noisy, 5, 2, 60, KernelParams{});
  const double in = smoother_rmse(denoise_sequence(model, train.noisy), train.truth);
  const double out = smoother_rmse(denoise_sequence(model, test.noisy), test.truth);
  EXPECT_LE(in, 1.1 * out);
  // Denoising gain over the raw noise level.
  EXPECT_LT(out, 2.0);
}

TEST(Smoother, SharedFitMatchesIndividualFits)
{
  const NoisyLorenz63 train = lorenz63_series(1500, 4.0, 66);
  const NoisyLorenz63 test = lorenz63_series(300, 4.0, 67);
  const std::vector<SmootherModel> models =
    fit_smoothers(train.noisy, 5, { 1, 3 }, 30, KernelParams{});
  const SmootherModel single = fit_smoother(train.noisy, 5, 3, 30, KernelParams{});
  const WindowRows rows = window_rows(models.front(), test.noisy);
  EXPECT_EQ(denoise_sequence(models[1], rows).estimates,
            denoise_sequence(single, test.noisy).estimates);
  EXPECT_EQ(denoise_sequence(models[0], rows).first, 0);
}

TEST(Smoother, WindowBatchesMatchSequence)
{
  const NoisyLorenz63 train = lorenz63_series(1500, 4.0, 68);
  const NoisyLorenz63 test = lorenz63_series(400, 4.0, 69);
  const SmootherModel model = fit_smoother(train.noisy, 5, 2, 30, KernelParams{});
  const Vector seq = denoise_sequence(model, test.noisy).estimates;
  const Vector win = denoise_windows(model, series_windows(test.noisy, 5), 37);
  EXPECT_LT((seq - win).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Smoother, IsDeterministic)
{
  const NoisyLorenz63 train = lorenz63_series(1200, 4.0, 70);
  const SmootherModel a = fit_smoother(train.noisy, 5, 2, 30, KernelParams{});
  const SmootherModel b = fit_smoother(train.noisy, 5, 2, 30, KernelParams{});
  EXPECT_EQ(denoise_sequence(a, train.noisy).estimates, denoise_sequence(b, train.noisy).estimates);
}

TEST(Smoother, RejectsBadTargetPosition)
{
  const Vector s = Vector::LinSpaced(50, 0.0, 1.0);
  EXPECT_THROW(fit_smoother(s, 5, 6, 10, KernelParams{}), Error);
  EXPECT_THROW(fit_smoother(s, 5, 0, 10, KernelParams{}), Error);
}

TEST(SmootherRmse, IdenticalIsZero)
{
  const Vector truth = Vector::LinSpaced(10, 0.0, 9.0);
  EXPECT_EQ(smoother_rmse(Vector(truth.segment(1, 6)), truth, 1), 0.0);
}

TEST(SmootherRmse, RangeExcludesWindowEdges)
{
  // m_s = 5, k = 2 on T = 10: estimates cover 1-based indices 2..7.
  Vector truth = Vector::Zero(10);
  truth[0] = 100.0;
  truth.tail(3).setConstant(100.0);
  DenoisedSequence d;
  d.first = 1;
  d.estimates = Vector::Zero(6);
  EXPECT_EQ(d.first_index_1based(), 2);
  EXPECT_EQ(d.last_index_1based(), 10 - (5 - 2));
  EXPECT_EQ(smoother_rmse(d, truth), 0.0);
}

TEST(SmootherRmse, HandThreePointCase)
{
  Vector truth(5);
  truth << 9, 1, 2, 3, 9;
  Vector est(3);
  est << 2, 2, 1;
  EXPECT_DOUBLE_EQ(smoother_rmse(est, truth, 1), std::sqrt((1.0 + 0.0 + 4.0) / 3.0));
}

TEST(SmootherRmse, SkipsUnsupportedWindows)
{
  Vector truth(4);
  truth << 1, 2, 3, 4;
  DenoisedSequence d;
  d.first = 0;
  d.estimates = Vector(4);
  d.estimates << 1, 50, 3, 5;
  d.unsupported = { 0, 1, 0, 0 };
  EXPECT_DOUBLE_EQ(smoother_rmse(d, truth), std::sqrt(1.0 / 3.0));
}
