#include "test_util.hpp"

#include "vadvae/errors.hpp"
#include "vadvae/vclub.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

using namespace vadvae;
using vadvae::testing::check_gradients;

namespace {

double log_density(const Matrix& y, Index row, const Matrix& mean, const Matrix& logvar, Index k) {
  double s = 0.0;
  for (Index j = 0; j < y.cols(); ++j) {
    const double d = y(row, j) - mean(k, j);
    s += -0.5 * (d * d * std::exp(-logvar(k, j)) + logvar(k, j) + std::log(2.0 * std::numbers::pi));
  }
  return s;
}

// Direct O(N^2) evaluation of every pairwise log q(y_l | x_k).
double brute_force_vclub(const PairEstimator& est, const Matrix& x, const Matrix& y) {
  NoGradGuard guard;
  const auto [m, lv] = est.conditional(Tensor::constant(x), true);
  const Index n = x.rows();
  double total = 0.0;
  for (Index k = 0; k < n; ++k) {
    double marginal = 0.0;
    for (Index l = 0; l < n; ++l) marginal += log_density(y, l, m.value(), lv.value(), k);
    total += log_density(y, k, m.value(), lv.value(), k) - marginal / static_cast<double>(n);
  }
  return total / static_cast<double>(n);
}

struct EstimatorFixture : ::testing::Test {
  Rng rng{8};
  PairEstimator est{Factor::Valence, Factor::Arousal, 3, 2, 6, rng, 1e-2};
};

}  // namespace

TEST_F(EstimatorFixture, ClosedFormMatchesBruteForce) {
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = rng.normal_matrix(17, 3);
    const Matrix y = rng.normal_matrix(17, 2) + x.leftCols(2);
    EXPECT_NEAR(vclub_estimate(est, x, y), brute_force_vclub(est, x, y), 1e-10);
    for (int s = 0; s < 20; ++s) estimator_ascent_step(est, x, y);
  }
}

TEST_F(EstimatorFixture, ConstantTargetGivesZero) {
  const Matrix x = rng.normal_matrix(32, 3);
  const Matrix y = Matrix::Constant(32, 2, 0.7);
  EXPECT_NEAR(vclub_estimate(est, x, y), 0.0, 1e-12);
}

TEST_F(EstimatorFixture, InvariantToJointRowPermutation) {
  const Matrix x = rng.normal_matrix(40, 3);
  const Matrix y = rng.normal_matrix(40, 2);
  std::vector<int> order(40);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  Matrix xp(40, 3), yp(40, 2);
  for (Index i = 0; i < 40; ++i) {
    xp.row(i) = x.row(order[static_cast<std::size_t>(i)]);
    yp.row(i) = y.row(order[static_cast<std::size_t>(i)]);
  }
  EXPECT_NEAR(vclub_estimate(est, x, y), vclub_estimate(est, xp, yp), 1e-12);
}

TEST_F(EstimatorFixture, LoglikMatchesGaussianDensity) {
  const Matrix x = rng.normal_matrix(5, 3);
  const Matrix y = rng.normal_matrix(5, 2);
  NoGradGuard guard;
  const auto [m, lv] = est.conditional(Tensor::constant(x), true);
  double expected = 0.0;
  for (Index k = 0; k < 5; ++k) expected += log_density(y, k, m.value(), lv.value(), k);
  EXPECT_NEAR(estimator_loglik(est, Tensor::constant(x), Tensor::constant(y)).item(), expected / 5.0,
              1e-12);
}

TEST_F(EstimatorFixture, AscentIncreasesLoglik) {
  const auto [x, y] = correlated_gaussians(0.8, 256, 3, rng);
  const Matrix y2 = y.leftCols(2);
  const double first = estimator_ascent_step(est, x, y2);
  double last = first;
  for (int s = 0; s < 200; ++s) last = estimator_ascent_step(est, x, y2);
  EXPECT_GT(last, first);
  EXPECT_TRUE(Tape::current().empty());
}

TEST_F(EstimatorFixture, GradientsMatchFiniteDifferences) {
  Tensor x = Tensor::parameter(rng.normal_matrix(6, 3));
  Tensor y = Tensor::parameter(rng.normal_matrix(6, 2));
  auto frozen = [&] { return vclub_tensor(est, x, y, true); };
  auto r = check_gradients(frozen, {x, y});
  EXPECT_TRUE(r.ok()) << r.first_failure;

  std::vector<Tensor> leaves{x};
  for (const auto& p : est.parameters()) leaves.push_back(p.tensor);
  auto loglik = [&] { return estimator_loglik(est, x, y); };
  r = check_gradients(loglik, leaves);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST_F(EstimatorFixture, FrozenLeavesEstimatorUntouched) {
  Tensor x = Tensor::parameter(rng.normal_matrix(6, 3));
  Tensor y = Tensor::parameter(rng.normal_matrix(6, 2));
  TapeScope scope;
  backward(vclub_tensor(est, x, y, true));
  for (const auto& p : est.parameters()) EXPECT_FALSE(p.tensor.has_grad() && !p.tensor.grad().isZero());
  EXPECT_FALSE(x.grad().isZero());
}

TEST_F(EstimatorFixture, Errors) {
  EXPECT_THROW(vclub_estimate(est, rng.normal_matrix(1, 3), rng.normal_matrix(1, 2)), UsageError);
  EXPECT_THROW(vclub_estimate(est, rng.normal_matrix(4, 3), rng.normal_matrix(3, 2)), DimensionError);
  EXPECT_THROW(correlated_gaussians(1.0, 4, 1, rng), UsageError);
}

// With the exact conditional N(rho x, 1 - rho^2) the bound evaluates to
// rho^2 / (1 - rho^2) per dimension.
TEST(Vclub, ExactConditionalClosedForm) {
  for (double rho : {0.0, 0.5, 0.9}) {
    Rng rng(31);
    const auto [x, y] = correlated_gaussians(rho, 4000, 1, rng);
    const double var = 1.0 - rho * rho;
    const Index n = x.rows();
    // l-average via moments, k-term directly.
    const double ybar = y.mean(), y2bar = y.array().square().mean();
    double total = 0.0;
    for (Index k = 0; k < n; ++k) {
      const double m = rho * x(k, 0);
      const double own = (y(k, 0) - m) * (y(k, 0) - m);
      const double cross = y2bar - 2.0 * m * ybar + m * m;
      total += 0.5 * (cross - own) / var;
    }
    const double estimate = total / static_cast<double>(n);
    EXPECT_NEAR(estimate, rho * rho / var, 0.1 + 0.1 * rho * rho / var) << "rho " << rho;
  }
}

TEST(Vclub, FittedEstimatorOrdersByCorrelation) {
  Rng rng(4);
  double previous = -1.0;
  for (double rho : {0.0, 0.5, 0.9}) {
    const auto [x, y] = correlated_gaussians(rho, 512, 1, rng);
    const double est = fit_vclub(x, y, 4, 1e-2, 600, 9);
    EXPECT_GT(est, previous) << "rho " << rho;
    previous = est;
  }
}

TEST(Vclub, IndependentPairsEstimateNearZero) {
  Rng rng(6);
  const auto [x, y] = correlated_gaussians(0.0, 1024, 1, rng);
  EXPECT_NEAR(fit_vclub(x, y, 4, 1e-2, 600, 3), 0.0, 0.1);
}

TEST(MiEstimators, ReportAveragesPairs) {
  Rng rng(2);
  MiEstimators est({2, 3, 4}, 2, 1e-2, rng);
  const std::array<Matrix, 3> z{rng.normal_matrix(20, 2), rng.normal_matrix(20, 3), rng.normal_matrix(20, 4)};
  const MiReport r = est.report(z);
  EXPECT_NEAR(r.average, (r.pairs[0] + r.pairs[1] + r.pairs[2]) / 3.0, 1e-15);
  EXPECT_EQ(pair_name(0), "V-A");
  EXPECT_EQ(pair_name(1), "V-D");
  EXPECT_EQ(pair_name(2), "A-D");
  NoGradGuard guard;
  const Tensor loss = est.mi_loss({Tensor::constant(z[0]), Tensor::constant(z[1]), Tensor::constant(z[2])});
  EXPECT_NEAR(loss.item(), r.pairs[0] + r.pairs[1] + r.pairs[2], 1e-12);
}

TEST(MiEstimators, RefitIsDeterministic) {
  Rng rng(2);
  const std::array<Matrix, 3> z{rng.normal_matrix(30, 2), rng.normal_matrix(30, 2), rng.normal_matrix(30, 2)};
  const MiReport a = refit_mi_report(z, 2, 1e-2, 50, 77);
  const MiReport b = refit_mi_report(z, 2, 1e-2, 50, 77);
  EXPECT_EQ(a.pairs, b.pairs);
}
