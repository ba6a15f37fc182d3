#include "vadvae/train.hpp"

#include "vadvae/checkpoint.hpp"
#include "vadvae/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace vadvae {

namespace {

enum Stream : std::uint64_t { kInitStream = 0, kEstimatorStream = 1, kTrainStream = 2, kNoiseStream = 3 };

ContextWindow window_of(const TrainConfig& c) { return {c.window_past, c.window_future}; }

std::vector<Matrix> snapshot(const ParameterList& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor.value());
  return out;
}

void restore(const ParameterList& params, const std::vector<Matrix>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    t.mutable_value() = values[i];
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot write " + path.string());
  out << text;
  if (!out) throw FileError("failed writing " + path.string());
}

}  // namespace

VadLexicon resolve_lexicon(const std::string& name_or_path) {
  if (name_or_path == "iemocap" || name_or_path == "meld" || name_or_path == "dailydialog") {
    return VadLexicon::builtin(name_or_path);
  }
  return VadLexicon::load_tsv(name_or_path);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + stream + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string run_dir_name(const TrainConfig& config) {
  return config_hash_hex(config) + "-s" + std::to_string(config.seed);
}

TrainResult train(const TrainConfig& config, const CorpusSplits& data, const TrainOptions& options) {
  validate(config);
  if (data.train.empty() || data.valid.empty()) {
    throw UsageError("train: training and validation splits must be non-empty");
  }
  const auto seed = static_cast<std::uint64_t>(config.seed);
  const VadLexicon lexicon = resolve_lexicon(config.lexicon);
  const auto& labels = lexicon.labels();

  const Corpus train_corpus =
      config.label_noise > 0.0
          ? inject_label_noise(data.train, config.label_noise, labels, derive_seed(seed, kNoiseStream))
          : data.train;
  const Tokenizer tokenizer = Tokenizer::build(train_corpus, static_cast<std::size_t>(config.min_freq));
  const auto max_len = static_cast<std::size_t>(config.max_len);
  const auto train_inputs = assemble_all(train_corpus, window_of(config), tokenizer, lexicon, max_len);
  const auto valid_inputs = assemble_all(data.valid, window_of(config), tokenizer, lexicon, max_len);

  Rng init_rng(derive_seed(seed, kInitStream));
  VadVae model(config, static_cast<Index>(tokenizer.size()), static_cast<int>(labels.size()), init_rng);
  std::optional<MiEstimators> estimators;
  if (config.uses_mi()) {
    Rng est_rng(derive_seed(seed, kEstimatorStream));
    estimators.emplace(model.vad_dims(), config.estimator_hidden_scale,
                       config.peak_lr * config.estimator_lr_scale, est_rng);
  }
  Rng rng(derive_seed(seed, kTrainStream));

  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (train_inputs.size() + batch_size - 1) / batch_size;
  AdamOptions adam_options;
  adam_options.peak_lr = config.peak_lr;
  adam_options.warmup_ratio = config.warmup_ratio;
  adam_options.weight_decay = config.weight_decay;
  const ParameterList params = model.parameters();
  Adam adam(params, adam_options, static_cast<long>(steps_per_epoch) * config.epochs);

  EvalOptions valid_options = eval_options(config);
  valid_options.mi_report = false;

  TrainResult result;
  std::vector<Matrix> best_params = snapshot(params);
  double best_f1 = -1.0;
  std::vector<std::size_t> order(train_inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  long global_step = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      TapeScope scope;
      Batch batch;
      for (std::size_t i = begin; i < std::min(order.size(), begin + batch_size); ++i) {
        batch.push_back(&train_inputs[order[i]]);
      }
      LatentBlock block = model.encode(batch, Mode::Train, rng);
      if (estimators && batch.size() >= 2) {
        estimators->update_step({block.sample(Factor::Valence).value(),
                                 block.sample(Factor::Arousal).value(),
                                 block.sample(Factor::Dominance).value()});
      }
      ForwardOutput out = model.losses(batch, std::move(block), estimators ? &*estimators : nullptr);
      if (!std::isfinite(out.breakdown.total)) {
        spdlog::error("non-finite loss at epoch {} step {}: {}", epoch, global_step + 1,
                      out.breakdown.to_json().dump());
        throw NumericError("training aborted: non-finite loss " + out.breakdown.to_json().dump());
      }
      adam.zero_grad();
      backward(out.total);
      adam.step();
      ++global_step;
      loss_sum += out.breakdown.total;

      if (global_step % config.log_every == 0) {
        nlohmann::json record = out.breakdown.to_json();
        record["type"] = "step";
        record["epoch"] = epoch;
        record["step"] = global_step;
        record["lr"] = adam.lr_at(global_step);
        result.log.push_back(std::move(record));
      }
    }

    EvalReport valid = evaluate(model, valid_inputs, labels, valid_options);
    nlohmann::json record;
    record["type"] = "epoch";
    record["epoch"] = epoch;
    record["train_loss"] = loss_sum / static_cast<double>(steps_per_epoch);
    record["valid"] = valid.to_json();
    result.log.push_back(std::move(record));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    spdlog::info("epoch {}/{}: train loss {:.4f}, valid weighted-F1 {:.4f} ({:.1f}s)", epoch,
                 config.epochs, loss_sum / static_cast<double>(steps_per_epoch), valid.weighted_f1,
                 secs);
    if (valid.weighted_f1 > best_f1) {
      best_f1 = valid.weighted_f1;
      result.best_epoch = epoch;
      result.best_valid = std::move(valid);
      best_params = snapshot(params);
    }
  }
  restore(params, best_params);

  if (options.evaluate_test && !data.test.empty()) {
    const auto test_inputs = assemble_all(data.test, window_of(config), tokenizer, lexicon, max_len);
    result.test = evaluate(model, test_inputs, labels, eval_options(config));
    nlohmann::json record;
    record["type"] = "test";
    record["best_epoch"] = result.best_epoch;
    record["report"] = result.test->to_json();
    result.log.push_back(std::move(record));
  }

  if (options.write_artifacts) {
    result.run_dir = options.out_root / run_dir_name(config);
    std::filesystem::create_directories(result.run_dir);
    save_config(result.run_dir / "config.json", config);
    std::string log_text;
    for (const auto& r : result.log) log_text += r.dump() + "\n";
    write_text(result.run_dir / "train_log.jsonl", log_text);
    nlohmann::json header;
    header["seed"] = config.seed;
    header["config_hash"] = config_hash_hex(config);
    header["config"] = to_json(config);
    header["lexicon"] = lexicon.to_json();
    header["tokenizer"] = tokenizer.to_json();
    header["best_epoch"] = result.best_epoch;
    header["valid_weighted_f1"] = result.best_valid.weighted_f1;
    save_checkpoint(result.run_dir / "checkpoint.bin", header, params);
    if (result.test) write_text(result.run_dir / "eval.json", result.test->to_json().dump(2) + "\n");
  }
  return result;
}

std::vector<ModelInput> LoadedModel::assemble(const Corpus& corpus) const {
  return assemble_all(corpus, window_of(config), tokenizer, lexicon,
                      static_cast<std::size_t>(config.max_len));
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  const CheckpointData data = read_checkpoint(checkpoint);
  LoadedModel loaded;
  try {
    loaded.config = config_from_json(data.header.at("config"));
    loaded.lexicon = VadLexicon::from_json(data.header.at("lexicon"));
    loaded.tokenizer = Tokenizer::from_json(data.header.at("tokenizer"));
    loaded.best_epoch = data.header.value("best_epoch", 0);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint header: ") + e.what());
  }
  Rng rng(0);
  loaded.model = std::make_unique<VadVae>(loaded.config, static_cast<Index>(loaded.tokenizer.size()),
                                          static_cast<int>(loaded.lexicon.size()), rng);
  load_parameters(data, loaded.model->parameters());
  return loaded;
}

void check_labels(const LoadedModel& loaded, const std::vector<std::string>& labels) {
  if (labels != loaded.lexicon.labels()) {
    throw SchemaError("label set does not match the checkpoint's label set");
  }
}

}  // namespace vadvae
