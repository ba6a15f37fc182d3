#include "vadvae/vclub.hpp"

#include "vadvae/errors.hpp"

#include <cmath>
#include <numbers>

namespace vadvae {

namespace {

constexpr double kLogVarBound = 8.0;

Tensor apply(const Linear& layer, const Tensor& x, bool frozen) {
  if (!frozen) return layer(x);
  return add_row(matmul(x, detach(layer.weight)), detach(layer.bias));
}

AdamOptions estimator_options(double lr) {
  AdamOptions o;
  o.peak_lr = lr;
  o.warmup_ratio = 0.0;
  o.weight_decay = 0.0;
  return o;
}

}  // namespace

PairEstimator::PairEstimator(Factor source, Factor target, Index source_dim, Index target_dim,
                             Index hidden, Rng& rng, double lr)
    : source_(source),
      target_(target),
      mean_in_(source_dim, hidden, rng),
      mean_out_(hidden, target_dim, rng),
      logvar_in_(source_dim, hidden, rng),
      logvar_out_(hidden, target_dim, rng),
      optimizer_(std::make_unique<Adam>(parameters(), estimator_options(lr), 1)) {}

std::string PairEstimator::name() const {
  return std::string(short_name(source_)) + "-" + std::string(short_name(target_));
}

std::pair<Tensor, Tensor> PairEstimator::conditional(const Tensor& x, bool frozen) const {
  Tensor mean = apply(mean_out_, tanh(apply(mean_in_, x, frozen)), frozen);
  Tensor logvar = clamp(apply(logvar_out_, tanh(apply(logvar_in_, x, frozen)), frozen),
                        -kLogVarBound, kLogVarBound);
  return {mean, logvar};
}

ParameterList PairEstimator::parameters() const {
  ParameterList out;
  append_parameters(out, "mean_in", mean_in_.parameters());
  append_parameters(out, "mean_out", mean_out_.parameters());
  append_parameters(out, "logvar_in", logvar_in_.parameters());
  append_parameters(out, "logvar_out", logvar_out_.parameters());
  return out;
}

Tensor estimator_loglik(const PairEstimator& est, const Tensor& x, const Tensor& y, bool frozen) {
  if (x.rows() != y.rows()) throw DimensionError("estimator_loglik: batch sizes differ");
  auto [cond_mean, logvar] = est.conditional(x, frozen);
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  // -1/2 [ (y-m)^2 / e^lv + lv + ln 2pi ], summed over dims, averaged over rows
  Tensor per_entry = square(y - cond_mean) * exp(-logvar) + logvar;
  return add_scalar(scale(sum(per_entry), -0.5 / static_cast<double>(x.rows())),
                    -0.5 * log_2pi * static_cast<double>(y.cols()));
}

Tensor vclub_tensor(const PairEstimator& est, const Tensor& x, const Tensor& y, bool frozen) {
  const Index n = x.rows();
  if (n < 2) throw UsageError("vclub: need at least 2 samples");
  if (y.rows() != n) throw DimensionError("vclub: batch sizes differ");
  auto [cond_mean, logvar] = est.conditional(x, frozen);
  // The logvar and ln 2pi terms appear in both halves and cancel; the
  // l-average of (y_l - m_k)^2 expands into the batch moments of y.
  Tensor ones = Tensor::constant(Matrix::Ones(n, 1));
  Tensor y_mean = matmul(ones, mean(y, 0));
  Tensor y_sq = square(y);
  Tensor y_sq_mean = matmul(ones, mean(y_sq, 0));
  Tensor inner = (y_sq - y_sq_mean) - scale(cond_mean * (y - y_mean), 2.0);
  return scale(sum(exp(-logvar) * inner), -0.5 / static_cast<double>(n));
}

double vclub_estimate(const PairEstimator& est, const Matrix& x, const Matrix& y) {
  NoGradGuard no_grad;
  return vclub_tensor(est, Tensor::constant(x), Tensor::constant(y), true).item();
}

double estimator_ascent_step(PairEstimator& est, const Matrix& x, const Matrix& y) {
  Tape& tape = Tape::current();
  const std::size_t mark = tape.size();
  est.optimizer().zero_grad();
  Tensor loglik = estimator_loglik(est, Tensor::constant(x), Tensor::constant(y));
  backward(neg(loglik));
  est.optimizer().step();
  tape.truncate(mark);
  return loglik.item();
}

std::string pair_name(std::size_t pair_index) {
  const auto& [s, t] = kMiPairs.at(pair_index);
  return std::string(short_name(s)) + "-" + std::string(short_name(t));
}

MiEstimators::MiEstimators(const std::array<Index, 3>& dims, int hidden_scale, double lr, Rng& rng) {
  for (std::size_t i = 0; i < kMiPairs.size(); ++i) {
    const auto [s, t] = kMiPairs[i];
    const Index in = dims[index_of(s)];
    const Index out = dims[index_of(t)];
    pairs_[i] = std::make_unique<PairEstimator>(s, t, in, out, hidden_scale * in, rng, lr);
  }
}

void MiEstimators::update_step(const std::array<Matrix, 3>& latents) {
  for (auto& p : pairs_) {
    estimator_ascent_step(*p, latents[index_of(p->source())], latents[index_of(p->target())]);
  }
}

Tensor MiEstimators::mi_loss(const std::array<Tensor, 3>& latents) const {
  Tensor total;
  for (const auto& p : pairs_) {
    Tensor est = vclub_tensor(*p, latents[index_of(p->source())], latents[index_of(p->target())], true);
    total = total.defined() ? total + est : est;
  }
  return total;
}

MiReport MiEstimators::report(const std::array<Matrix, 3>& latents) const {
  MiReport r;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const auto& p = *pairs_[i];
    r.pairs[i] = vclub_estimate(p, latents[index_of(p.source())], latents[index_of(p.target())]);
  }
  r.average = (r.pairs[0] + r.pairs[1] + r.pairs[2]) / 3.0;
  return r;
}

ParameterList MiEstimators::parameters() const {
  ParameterList out;
  for (const auto& p : pairs_) append_parameters(out, p->name(), p->parameters());
  return out;
}

MiReport refit_mi_report(const std::array<Matrix, 3>& latents, int hidden_scale, double lr,
                         int steps, std::uint64_t seed) {
  Rng rng(seed);
  std::array<Index, 3> dims{latents[0].cols(), latents[1].cols(), latents[2].cols()};
  MiEstimators estimators(dims, hidden_scale, lr, rng);
  for (int s = 0; s < steps; ++s) estimators.update_step(latents);
  return estimators.report(latents);
}

std::pair<Matrix, Matrix> correlated_gaussians(double rho, Index n, Index dim, Rng& rng) {
  if (!(rho > -1.0 && rho < 1.0)) throw UsageError("correlated_gaussians: |rho| must be < 1");
  Matrix x = rng.normal_matrix(n, dim);
  Matrix noise = rng.normal_matrix(n, dim);
  Matrix y = rho * x + std::sqrt(1.0 - rho * rho) * noise;
  return {std::move(x), std::move(y)};
}

double fit_vclub(const Matrix& x, const Matrix& y, Index hidden, double lr, int steps,
                 std::uint64_t seed) {
  Rng rng(seed);
  PairEstimator est(Factor::Valence, Factor::Arousal, x.cols(), y.cols(), hidden, rng, lr);
  for (int s = 0; s < steps; ++s) estimator_ascent_step(est, x, y);
  return vclub_estimate(est, x, y);
}

}  // namespace vadvae
