#include "vadvae/config.hpp"

#include "vadvae/errors.hpp"

#include <array>
#include <cstdio>
#include <fstream>

namespace vadvae {

namespace {

#define FIELD(name, help) ConfigField{#name, &TrainConfig::name, help}

const std::array kFields = {
    FIELD(d_v, "valence latent dimension"),
    FIELD(d_a, "arousal latent dimension"),
    FIELD(d_d, "dominance latent dimension"),
    FIELD(d_c, "content latent dimension"),
    FIELD(hidden, "encoder/decoder hidden size"),
    FIELD(embed, "token embedding size"),
    FIELD(alpha_v, "KL weight, valence"),
    FIELD(alpha_a, "KL weight, arousal"),
    FIELD(alpha_d, "KL weight, dominance"),
    FIELD(alpha_c, "KL weight, content"),
    FIELD(mu_e, "ELBO weight"),
    FIELD(mu_i, "VAD supervision weight"),
    FIELD(mu_mi, "vCLUB weight"),
    FIELD(window_past, "past context utterances (-1 = all)"),
    FIELD(window_future, "future context utterances (-1 = all)"),
    FIELD(max_len, "maximum input tokens"),
    FIELD(min_freq, "minimum token frequency for the vocabulary"),
    FIELD(peak_lr, "peak learning rate"),
    FIELD(warmup_ratio, "fraction of steps spent in linear warm-up"),
    FIELD(weight_decay, "decoupled weight decay"),
    FIELD(dropout, "dropout on the encoder output"),
    FIELD(estimator_lr_scale, "estimator learning rate as a multiple of peak_lr"),
    FIELD(estimator_hidden_scale, "estimator hidden width as a multiple of latent dim"),
    FIELD(mi_refit_steps, "estimator refit steps for MI reports"),
    FIELD(epochs, "training epochs"),
    FIELD(batch_size, "utterances per batch"),
    FIELD(seed, "random seed"),
    FIELD(log_every, "steps between training log records"),
    FIELD(label_noise, "fraction of training labels replaced, in [0, 0.5]"),
    FIELD(no_vclub, "ablation: drop the MI loss"),
    FIELD(no_decoder, "ablation: drop reconstruction and KL"),
    FIELD(no_v_sup, "ablation: drop valence supervision"),
    FIELD(no_a_sup, "ablation: drop arousal supervision"),
    FIELD(no_d_sup, "ablation: drop dominance supervision"),
    FIELD(entangled_baseline, "single undivided latent, no VAD heads or MI"),
    FIELD(lexicon, "built-in lexicon (iemocap|meld|dailydialog) or TSV path"),
};

#undef FIELD

}  // namespace

std::span<const ConfigField> config_fields() { return kFields; }

void validate(const TrainConfig& c) {
  for (int dim : {c.d_v, c.d_a, c.d_d, c.d_c, c.hidden, c.embed}) {
    if (dim < 1) throw UsageError("config: dimensions must be >= 1");
  }
  for (double w : {c.alpha_v, c.alpha_a, c.alpha_d, c.alpha_c, c.mu_e, c.mu_i, c.mu_mi}) {
    if (!(w >= 0.0)) throw UsageError("config: loss weights must be >= 0");
  }
  if (!(c.warmup_ratio >= 0.0 && c.warmup_ratio <= 1.0)) {
    throw UsageError("config: warmup_ratio must lie in [0,1]");
  }
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw UsageError("config: dropout must lie in [0,1)");
  if (c.peak_lr <= 0.0 || c.weight_decay < 0.0 || c.estimator_lr_scale <= 0.0) {
    throw UsageError("config: bad optimizer settings");
  }
  if (c.epochs < 1 || c.batch_size < 1 || c.max_len < 8 || c.min_freq < 1 || c.log_every < 1 ||
      c.estimator_hidden_scale < 1 || c.mi_refit_steps < 0) {
    throw UsageError("config: bad schedule settings");
  }
  if (!(c.label_noise >= 0.0 && c.label_noise <= 0.5)) {
    throw UsageError("config: label_noise must lie in [0, 0.5]");
  }
  if (c.window_past < -1 || c.window_future < -1) throw UsageError("config: bad context window");
}

nlohmann::json to_json(const TrainConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : kFields) {
    std::visit([&](auto member) { j[f.key] = config.*member; }, f.member);
  }
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base) {
  if (!j.is_object()) throw SchemaError("config: expected a flat JSON object");
  for (const auto& [key, value] : j.items()) {
    const ConfigField* field = nullptr;
    for (const auto& f : kFields) {
      if (key == f.key) field = &f;
    }
    if (!field) throw SchemaError("config: unknown key '" + key + "'");
    try {
      std::visit(
          [&](auto member) {
            TrainConfig& target = base;
            auto& slot = target.*member;
            slot = value.get<std::remove_reference_t<decltype(slot)>>();
          },
          field->member);
    } catch (const nlohmann::json::exception&) {
      throw SchemaError("config: wrong type for '" + key + "'");
    }
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return config_from_json(j, base);
}

void save_config(const std::filesystem::path& path, const TrainConfig& config) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write config " + path.string());
  out << to_json(config).dump(2) << '\n';
}

std::uint64_t config_hash(const TrainConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash_hex(const TrainConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash(config)));
  return buf;
}

int default_batch_size(const std::string& lexicon) { return lexicon == "dailydialog" ? 16 : 4; }

}  // namespace vadvae
