#include "vadvae/model.hpp"

#include "vadvae/errors.hpp"

namespace vadvae {

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, Rng& rng) {
  Tensor eps = Tensor::constant(rng.normal_matrix(mu.rows(), mu.cols()));
  return mu + exp(scale(logvar, 0.5)) * eps;
}

Tensor kl_to_standard_normal(const Tensor& mu, const Tensor& logvar) {
  Tensor per_entry = add_scalar(square(mu) + exp(logvar) - logvar, -1.0);
  return scale(sum(per_entry), 0.5 / static_cast<double>(mu.rows()));
}

Tensor info_loss(const VadPrediction& pred, const Matrix& targets, SupervisionMask mask) {
  if (targets.cols() != 3 || targets.rows() != pred.valence.rows()) {
    throw DimensionError("info_loss: targets must be [N x 3] matching predictions");
  }
  if ((targets.array() < 0.0).any() || (targets.array() > 1.0).any()) {
    throw DataError("info_loss: VAD target outside [0,1]");
  }
  if (!mask.any()) throw UsageError("info_loss: no active factor");
  Tensor total;
  for (Factor f : kVadFactors) {
    if (!mask.active(f)) continue;
    Tensor t = Tensor::constant(targets.col(static_cast<Index>(index_of(f))));
    Tensor term = sum(square(pred[f] - t));
    total = total.defined() ? total + term : term;
  }
  return scale(total, 1.0 / static_cast<double>(targets.rows()));
}

double LossBreakdown::weighted_sum(const TrainConfig& c) const {
  double out = l_erc;
  if (l_recon || kl) {
    double elbo = l_recon.value_or(0.0);
    if (kl) {
      const std::array<double, 4> alpha{c.alpha_v, c.alpha_a, c.alpha_d, c.alpha_c};
      for (std::size_t i = 0; i < 4; ++i) elbo += alpha[i] * (*kl)[i];
    }
    out += c.mu_e * elbo;
  }
  if (l_info) out += c.mu_i * *l_info;
  if (l_mi) out += c.mu_mi * *l_mi;
  return out;
}

nlohmann::json LossBreakdown::to_json() const {
  nlohmann::json j;
  j["l_erc"] = l_erc;
  if (l_recon) j["l_recon"] = *l_recon;
  if (kl) {
    for (Factor f : kAllFactors) j["kl_" + std::string(short_name(f))] = (*kl)[index_of(f)];
  }
  if (l_info) j["l_info"] = *l_info;
  if (l_mi) j["l_mi"] = *l_mi;
  j["total"] = total;
  return j;
}

VadVae::VadVae(const TrainConfig& config, Index vocab, int num_labels, Rng& rng)
    : config_(config),
      embedding_(vocab, config.embed, rng),
      encoder_(config.embed, config.hidden, rng) {
  validate(config_);
  if (num_labels < 1) throw UsageError("model: need at least one label");
  if (config_.entangled_baseline) {
    heads_.emplace_back(Factor::Content, config_.hidden, config_.latent_total(), rng);
  } else {
    const std::array<int, 4> dims{config_.d_v, config_.d_a, config_.d_d, config_.d_c};
    for (Factor f : kAllFactors) heads_.emplace_back(f, config_.hidden, dims[index_of(f)], rng);
    for (Factor f : kVadFactors) vad_predictors_[index_of(f)] = Linear(dims[index_of(f)], 1, rng);
  }
  classifier_ = Linear(config_.latent_total(), num_labels, rng);
  decoder_ = GruCell(config_.embed, config_.hidden, rng);
  init_proj_ = Linear(config_.latent_total(), config_.hidden, rng);
  out_proj_ = Linear(config_.hidden, vocab, rng);
}

Tensor VadVae::encode_context(const Batch& batch, Mode mode, Rng& rng) const {
  std::vector<std::vector<int>> seqs;
  seqs.reserve(batch.size());
  for (const auto* in : batch) seqs.push_back(in->ids);
  Tensor encoded = encode_batch(embedding_, encoder_, seqs);
  if (mode == Mode::Train) encoded = dropout(encoded, config_.dropout, rng);
  return encoded;
}

LatentBlock VadVae::latents(const Tensor& encoded, Mode mode, Rng& rng) const {
  LatentBlock block;
  block.entangled = config_.entangled_baseline;
  std::vector<Tensor> parts;
  for (const auto& head : heads_) {
    const std::size_t i = index_of(head.factor);
    block.mu[i] = head.mu_net(encoded);
    block.logvar[i] = clamp(head.logvar_net(encoded), -kLatentLogVarBound, kLatentLogVarBound);
    block.z[i] = mode == Mode::Train ? reparameterize(block.mu[i], block.logvar[i], rng) : block.mu[i];
    parts.push_back(block.z[i]);
  }
  block.joint = parts.size() == 1 ? parts[0] : concat(std::span<const Tensor>(parts), 1);
  return block;
}

LatentBlock VadVae::encode(const Batch& batch, Mode mode, Rng& rng) const {
  return latents(encode_context(batch, mode, rng), mode, rng);
}

Tensor VadVae::join(const std::array<Tensor, 4>& parts) {
  return concat({parts[0], parts[1], parts[2], parts[3]}, 1);
}

VadPrediction VadVae::predict_vad(const LatentBlock& block) const {
  if (block.entangled) throw UsageError("predict_vad: entangled model has no VAD heads");
  VadPrediction p;
  p.valence = sigmoid(vad_predictors_[0](block.sample(Factor::Valence)));
  p.arousal = sigmoid(vad_predictors_[1](block.sample(Factor::Arousal)));
  p.dominance = sigmoid(vad_predictors_[2](block.sample(Factor::Dominance)));
  return p;
}

Tensor VadVae::classify(const LatentBlock& block) const { return classifier_(block.joint); }

Tensor VadVae::reconstruction_loss(const Batch& batch, const LatentBlock& block) const {
  std::vector<std::vector<int>> gold;
  gold.reserve(batch.size());
  for (const auto* in : batch) gold.push_back(in->gold);
  return decode_autoregressive(embedding_, decoder_, init_proj_, out_proj_, block.joint, gold);
}

std::vector<int> VadVae::greedy_reconstruct(const Tensor& joint_row, std::size_t max_len) const {
  return greedy_decode(embedding_, decoder_, init_proj_, out_proj_, joint_row, Tokenizer::kCls,
                       Tokenizer::kEos, max_len);
}

Matrix vad_targets(const Batch& batch) {
  Matrix t(static_cast<Index>(batch.size()), 3);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vad& v = batch[i]->vad;
    t.row(static_cast<Index>(i)) << v.valence, v.arousal, v.dominance;
  }
  return t;
}

ForwardOutput VadVae::losses(const Batch& batch, LatentBlock block,
                             const MiEstimators* estimators) const {
  const TrainConfig& c = config_;
  ForwardOutput out;
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const auto* in : batch) labels.push_back(in->label);

  out.logits = classify(block);
  Tensor erc = softmax_cross_entropy(out.logits, labels);
  out.breakdown.l_erc = erc.item();
  Tensor total = erc;

  if (c.uses_decoder() && c.mu_e > 0.0) {
    Tensor recon = reconstruction_loss(batch, block);
    Tensor elbo = recon;
    std::array<double, 4> kl_values{};
    // The entangled latent sits in the Content slot and takes alpha_C.
    const std::array<double, 4> alpha{c.alpha_v, c.alpha_a, c.alpha_d, c.alpha_c};
    for (const auto& head : heads_) {
      const std::size_t i = index_of(head.factor);
      Tensor kl = kl_to_standard_normal(block.mu[i], block.logvar[i]);
      kl_values[i] = kl.item();
      elbo = elbo + scale(kl, alpha[i]);
    }
    out.breakdown.l_recon = recon.item();
    out.breakdown.kl = kl_values;
    total = total + scale(elbo, c.mu_e);
  }

  const SupervisionMask mask{!c.no_v_sup, !c.no_a_sup, !c.no_d_sup};
  if (c.uses_vad_heads() && c.mu_i > 0.0 && mask.any()) {
    Tensor info = info_loss(predict_vad(block), vad_targets(batch), mask);
    out.breakdown.l_info = info.item();
    total = total + scale(info, c.mu_i);
  }

  if (c.uses_mi() && estimators != nullptr && batch.size() >= 2) {
    Tensor mi = estimators->mi_loss({block.sample(Factor::Valence), block.sample(Factor::Arousal),
                                     block.sample(Factor::Dominance)});
    out.breakdown.l_mi = mi.item();
    total = total + scale(mi, c.mu_mi);
  }

  out.breakdown.total = total.item();
  out.total = total;
  out.block = std::move(block);
  return out;
}

ForwardOutput VadVae::forward_loss(const Batch& batch, const MiEstimators* estimators, Mode mode,
                                   Rng& rng) const {
  return losses(batch, encode(batch, mode, rng), estimators);
}

ParameterList VadVae::parameters() const {
  ParameterList out;
  append_parameters(out, "embedding", embedding_.parameters());
  append_parameters(out, "encoder", encoder_.parameters());
  for (const auto& head : heads_) {
    const std::string prefix = "head_" + std::string(short_name(head.factor));
    append_parameters(out, prefix + ".mu", head.mu_net.parameters());
    append_parameters(out, prefix + ".logvar", head.logvar_net.parameters());
  }
  if (config_.uses_vad_heads()) {
    for (Factor f : kVadFactors) {
      append_parameters(out, "vad_" + std::string(short_name(f)),
                        vad_predictors_[index_of(f)].parameters());
    }
  }
  append_parameters(out, "classifier", classifier_.parameters());
  if (config_.uses_decoder()) {
    append_parameters(out, "decoder", decoder_.parameters());
    append_parameters(out, "init_proj", init_proj_.parameters());
    append_parameters(out, "out_proj", out_proj_.parameters());
  }
  return out;
}

ParameterList VadVae::head_parameters(Factor f) const {
  for (const auto& head : heads_) {
    if (head.factor != f) continue;
    ParameterList out;
    append_parameters(out, "mu", head.mu_net.parameters());
    append_parameters(out, "logvar", head.logvar_net.parameters());
    return out;
  }
  throw UsageError("head_parameters: factor not present");
}

}  // namespace vadvae
