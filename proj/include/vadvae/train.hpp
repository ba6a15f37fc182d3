#pragma once

#include "vadvae/config.hpp"
#include "vadvae/data.hpp"
#include "vadvae/eval.hpp"
#include "vadvae/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vadvae {

// Built-in lexicon by dataset name, otherwise a TSV file path.
VadLexicon resolve_lexicon(const std::string& name_or_path);

// Independent stream seed for (run seed, purpose).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// "<config hash>-s<seed>"
std::string run_dir_name(const TrainConfig& config);

struct TrainOptions {
  // Artifacts go to out_root / run_dir_name(config) when write_artifacts is set.
  std::filesystem::path out_root = "runs";
  bool write_artifacts = true;
  bool evaluate_test = true;
};

struct TrainResult {
  std::filesystem::path run_dir;
  int best_epoch = 0;
  EvalReport best_valid;
  std::optional<EvalReport> test;
  std::vector<nlohmann::json> log;
};

// Per iteration: encode, one estimator ascent step on the detached V/A/D
// samples, then the model step on the multi-task loss. Validation after every
// epoch; the best validation weighted-F1 parameters are kept. Throws
// NumericError when the loss stops being finite.
TrainResult train(const TrainConfig& config, const CorpusSplits& data,
                  const TrainOptions& options = {});

// A trained model with everything needed to featurize new dialogues.
struct LoadedModel {
  TrainConfig config;
  VadLexicon lexicon;
  Tokenizer tokenizer;
  std::unique_ptr<VadVae> model;
  int best_epoch = 0;

  std::vector<ModelInput> assemble(const Corpus& corpus) const;
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

// Throws SchemaError unless `labels` equals the model's label set.
void check_labels(const LoadedModel& loaded, const std::vector<std::string>& labels);

}  // namespace vadvae
