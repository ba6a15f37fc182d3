#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>

namespace vadvae {

struct TrainConfig {
  // Latent and network dimensions. Default latents scale 64/64/64/832 down by 8.
  int d_v = 8;
  int d_a = 8;
  int d_d = 8;
  int d_c = 104;
  int hidden = 128;
  int embed = 64;

  // Loss weights.
  double alpha_v = 1.0;
  double alpha_a = 1.0;
  double alpha_d = 1.0;
  double alpha_c = 1.0;
  double mu_e = 0.8;
  double mu_i = 1.0;
  double mu_mi = 0.005;

  // Context windows; -1 takes the whole dialogue.
  int window_past = 1;
  int window_future = 1;
  int max_len = 128;
  int min_freq = 1;

  // Optimizer.
  double peak_lr = 1e-3;
  double warmup_ratio = 0.2;
  double weight_decay = 0.01;
  double dropout = 0.1;
  double estimator_lr_scale = 10.0;
  int estimator_hidden_scale = 2;
  int mi_refit_steps = 500;

  // Schedule.
  int epochs = 10;
  int batch_size = 4;
  int seed = 0;
  int log_every = 50;
  // Fraction of training labels replaced before training.
  double label_noise = 0.0;

  // Ablations.
  bool no_vclub = false;
  bool no_decoder = false;
  bool no_v_sup = false;
  bool no_a_sup = false;
  bool no_d_sup = false;
  bool entangled_baseline = false;

  // Built-in lexicon name or TSV path.
  std::string lexicon = "iemocap";

  int latent_total() const { return d_v + d_a + d_d + d_c; }
  bool uses_decoder() const { return !no_decoder; }
  bool uses_vad_heads() const { return !entangled_baseline; }
  bool uses_mi() const { return !entangled_baseline && !no_vclub && mu_mi > 0.0; }

  bool operator==(const TrainConfig&) const = default;
};

using ConfigMember = std::variant<int TrainConfig::*, double TrainConfig::*, bool TrainConfig::*,
                                  std::string TrainConfig::*>;

struct ConfigField {
  const char* key;
  ConfigMember member;
  const char* help;
};

// Every configurable field, in canonical order.
std::span<const ConfigField> config_fields();

// Throws UsageError on negative weights, non-positive dims, etc.
void validate(const TrainConfig& config);

nlohmann::json to_json(const TrainConfig& config);
// Missing keys keep their defaults; unknown keys are a schema error.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
void save_config(const std::filesystem::path& path, const TrainConfig& config);

// FNV-1a over the canonical JSON form.
std::uint64_t config_hash(const TrainConfig& config);
std::string config_hash_hex(const TrainConfig& config);

// 4 everywhere except DailyDialog (16).
int default_batch_size(const std::string& lexicon);

}  // namespace vadvae
