#pragma once

#include "vadvae/metrics.hpp"
#include "vadvae/model.hpp"
#include "vadvae/vclub.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace vadvae {

struct EvalOptions {
  // Refit fresh estimators on the evaluated latents and report their MI.
  bool mi_report = true;
  int refit_steps = 500;
  int hidden_scale = 2;
  double estimator_lr = 1e-2;
  std::uint64_t seed = 0;
  std::size_t batch_size = 64;
};

EvalOptions eval_options(const TrainConfig& config);

// Evaluation-mode forward results, one row per input.
struct ModelOutputs {
  std::vector<int> preds;
  std::vector<int> golds;
  Matrix vad_pred;    // [N x 3], empty for the entangled baseline
  Matrix vad_target;  // [N x 3]
  Matrix mu;          // [N x latent_total], factor blocks V|A|D|C
};

ModelOutputs run_model(const VadVae& model, const std::vector<ModelInput>& inputs,
                       std::size_t batch_size = 64);

struct EvalReport {
  std::vector<std::string> labels;
  std::size_t n = 0;
  double weighted_f1 = 0.0;
  FlaggedValue micro_f1_no_neutral{0.0, false};
  std::array<FlaggedValue, 3> pearson{};
  std::optional<MiReport> mi;
  std::vector<ClassScores> per_class;

  nlohmann::json to_json() const;
};

EvalReport evaluate(const VadVae& model, const std::vector<ModelInput>& inputs,
                    const std::vector<std::string>& labels, const EvalOptions& options);

// V, A, D blocks of the mean latents.
std::array<Matrix, 3> vad_blocks(const Matrix& mu, const TrainConfig& config);

// CSV: utterance_id, emotion, mu_V_0.., mu_A_0.., mu_D_0.., mu_C_0..
void export_latents(const VadVae& model, const std::vector<ModelInput>& inputs,
                    const std::vector<std::string>& labels, const std::filesystem::path& path);

struct RetentionRow {
  std::string variant;
  double alpha = 0.0;
  double mean_f1 = 0.0;
  double retention = 1.0;  // mean over seeds of F1(alpha) / F1(0)
  std::size_t seeds = 0;
};

inline const std::vector<double> kNoiseFractions = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};

// train_fn(variant, alpha, seed) -> test F1. Variants are "vadvae" and
// "entangled"; the curve always includes alpha = 0.
using TrainFn = std::function<double(const std::string&, double, std::uint64_t)>;
std::vector<RetentionRow> robustness_curve(const TrainFn& train_fn,
                                           const std::vector<double>& fractions,
                                           const std::vector<std::uint64_t>& seeds);

void write_retention_csv(std::ostream& out, const std::vector<RetentionRow>& rows);

}  // namespace vadvae
