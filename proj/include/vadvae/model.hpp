#pragma once

#include "vadvae/config.hpp"
#include "vadvae/data.hpp"
#include "vadvae/factor.hpp"
#include "vadvae/nn.hpp"
#include "vadvae/vclub.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <vector>

namespace vadvae {

inline constexpr double kLatentLogVarBound = 8.0;

enum class Mode { Train, Eval };

using Batch = std::vector<const ModelInput*>;

// z = mu + exp(logvar / 2) * eps, eps ~ N(0, I) drawn from rng.
Tensor reparameterize(const Tensor& mu, const Tensor& logvar, Rng& rng);

// 1/2 sum_j (mu^2 + e^logvar - logvar - 1), averaged over rows.
Tensor kl_to_standard_normal(const Tensor& mu, const Tensor& logvar);

// Maps the encoder output to one Gaussian posterior.
struct LatentHead {
  LatentHead() = default;
  LatentHead(Factor factor, Index hidden, Index dim, Rng& rng)
      : factor(factor), mu_net(hidden, dim, rng), logvar_net(hidden, dim, rng) {}

  Factor factor = Factor::Content;
  Linear mu_net;
  Linear logvar_net;
};

// Per-factor posteriors and samples for a batch. In the entangled baseline
// only the Content slot is populated and it spans the whole latent.
struct LatentBlock {
  std::array<Tensor, 4> mu;
  std::array<Tensor, 4> logvar;
  std::array<Tensor, 4> z;
  Tensor joint;  // [z_V; z_A; z_D; z_C]
  bool entangled = false;

  const Tensor& sample(Factor f) const { return z[index_of(f)]; }
};

struct VadPrediction {
  Tensor valence;  // [B x 1], each in (0, 1)
  Tensor arousal;
  Tensor dominance;

  const Tensor& operator[](Factor f) const {
    return f == Factor::Valence ? valence : f == Factor::Arousal ? arousal : dominance;
  }
};

// Which factors of the supervision loss are active.
struct SupervisionMask {
  bool valence = true;
  bool arousal = true;
  bool dominance = true;

  bool any() const { return valence || arousal || dominance; }
  bool active(Factor f) const {
    return f == Factor::Valence ? valence : f == Factor::Arousal ? arousal : dominance;
  }
};

// (1/N) sum_i sum_{active R} (P_i^R - t_i^R)^2 against rows of `targets` [N x 3].
Tensor info_loss(const VadPrediction& pred, const Matrix& targets, SupervisionMask mask = {});

// Components in nats. Absent optionals were ablated or weighted to zero and
// never computed.
struct LossBreakdown {
  double l_erc = 0.0;
  std::optional<double> l_recon;
  std::optional<std::array<double, 4>> kl;
  std::optional<double> l_info;
  std::optional<double> l_mi;
  double total = 0.0;

  // l_erc + mu_E (l_recon + sum alpha_R kl_R) + mu_I l_info + mu_MI l_mi
  double weighted_sum(const TrainConfig& config) const;
  nlohmann::json to_json() const;
};

struct ForwardOutput {
  LatentBlock block;
  Tensor logits;
  Tensor total;
  LossBreakdown breakdown;
};

class VadVae {
 public:
  VadVae(const TrainConfig& config, Index vocab, int num_labels, Rng& rng);

  const TrainConfig& config() const { return config_; }
  int num_labels() const { return static_cast<int>(classifier_.out_features()); }
  Index vocab() const { return embedding_.vocab(); }

  // Encoder output with dropout in training mode; [B x hidden].
  Tensor encode_context(const Batch& batch, Mode mode, Rng& rng) const;
  LatentBlock latents(const Tensor& encoded, Mode mode, Rng& rng) const;
  LatentBlock encode(const Batch& batch, Mode mode, Rng& rng) const;

  // Joint latent assembled from per-factor rows; used by the swap demo.
  static Tensor join(const std::array<Tensor, 4>& parts);

  VadPrediction predict_vad(const LatentBlock& block) const;
  Tensor classify(const LatentBlock& block) const;
  Tensor reconstruction_loss(const Batch& batch, const LatentBlock& block) const;
  std::vector<int> greedy_reconstruct(const Tensor& joint_row, std::size_t max_len) const;

  // Multi-task loss on an already encoded block. estimators may be null when
  // the MI term is disabled.
  ForwardOutput losses(const Batch& batch, LatentBlock block, const MiEstimators* estimators) const;
  ForwardOutput forward_loss(const Batch& batch, const MiEstimators* estimators, Mode mode,
                             Rng& rng) const;

  ParameterList parameters() const;
  // Parameters of one latent head (mu and logvar networks).
  ParameterList head_parameters(Factor f) const;
  std::array<Index, 3> vad_dims() const {
    return {config_.d_v, config_.d_a, config_.d_d};
  }

 private:
  TrainConfig config_;
  Embedding embedding_;
  GruCell encoder_;
  std::vector<LatentHead> heads_;
  std::array<Linear, 3> vad_predictors_;
  Linear classifier_;
  GruCell decoder_;
  Linear init_proj_;
  Linear out_proj_;
};

Matrix vad_targets(const Batch& batch);

}  // namespace vadvae
