#pragma once

#include "vadvae/factor.hpp"
#include "vadvae/nn.hpp"

#include <array>
#include <memory>
#include <string>
#include <utility>

namespace vadvae {

// Variational conditional q(y|x) = N(mean(x), diag(exp(logvar(x)))) for one
// ordered pair of latent factors, with its own optimizer. Both heads are
// two-layer tanh perceptrons; logvar is clamped to [-8, 8].
class PairEstimator {
 public:
  PairEstimator(Factor source, Factor target, Index source_dim, Index target_dim, Index hidden,
                Rng& rng, double lr);

  Factor source() const { return source_; }
  Factor target() const { return target_; }
  std::string name() const;

  // (mean, logvar) of q(.|x). With frozen set, gradients stop at the
  // estimator's parameters but still reach x.
  std::pair<Tensor, Tensor> conditional(const Tensor& x, bool frozen) const;

  ParameterList parameters() const;
  Adam& optimizer() { return *optimizer_; }

 private:
  Factor source_;
  Factor target_;
  Linear mean_in_;
  Linear mean_out_;
  Linear logvar_in_;
  Linear logvar_out_;
  std::unique_ptr<Adam> optimizer_;
};

// Mean log q(y_k|x_k) over the batch, full Gaussian density.
Tensor estimator_loglik(const PairEstimator& est, const Tensor& x, const Tensor& y,
                        bool frozen = false);

// (1/N) sum_k [log q(y_k|x_k) - (1/N) sum_l log q(y_l|x_k)] as a tape value.
// The l-average is taken in closed form through the batch moments of y.
Tensor vclub_tensor(const PairEstimator& est, const Tensor& x, const Tensor& y, bool frozen);

// Value-only estimate (no tape). Requires N >= 2.
double vclub_estimate(const PairEstimator& est, const Matrix& x, const Matrix& y);

// One Adam ascent step on the estimator log-likelihood.
double estimator_ascent_step(PairEstimator& est, const Matrix& x, const Matrix& y);

struct MiReport {
  // V->A, V->D, A->D
  std::array<double, 3> pairs{};
  double average = 0.0;
};

inline constexpr std::array<std::pair<Factor, Factor>, 3> kMiPairs = {
    std::pair{Factor::Valence, Factor::Arousal}, std::pair{Factor::Valence, Factor::Dominance},
    std::pair{Factor::Arousal, Factor::Dominance}};

std::string pair_name(std::size_t pair_index);

// The three pair estimators over V, A, D latents.
class MiEstimators {
 public:
  MiEstimators(const std::array<Index, 3>& dims, int hidden_scale, double lr, Rng& rng);

  PairEstimator& pair(std::size_t i) { return *pairs_[i]; }
  const PairEstimator& pair(std::size_t i) const { return *pairs_[i]; }

  // latents are the detached V, A, D samples of the current batch.
  void update_step(const std::array<Matrix, 3>& latents);
  // Sum of the three pair estimates; gradient reaches the latents only.
  Tensor mi_loss(const std::array<Tensor, 3>& latents) const;
  MiReport report(const std::array<Matrix, 3>& latents) const;
  ParameterList parameters() const;

 private:
  std::array<std::unique_ptr<PairEstimator>, 3> pairs_;
};

// Fits fresh estimators on frozen latents (full batch) and reports the
// resulting estimates.
MiReport refit_mi_report(const std::array<Matrix, 3>& latents, int hidden_scale, double lr,
                         int steps, std::uint64_t seed);

// Rows of (x, y) with x ~ N(0, I) and y = rho x + sqrt(1 - rho^2) eps, so each
// coordinate pair is jointly Gaussian with correlation rho.
std::pair<Matrix, Matrix> correlated_gaussians(double rho, Index n, Index dim, Rng& rng);

// Trains a fresh x -> y estimator for `steps` full-batch ascent steps and
// returns its vCLUB estimate on the same samples.
double fit_vclub(const Matrix& x, const Matrix& y, Index hidden, double lr, int steps,
                 std::uint64_t seed);

}  // namespace vadvae
