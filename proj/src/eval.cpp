#include "vadvae/eval.hpp"

#include "vadvae/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

namespace vadvae {

EvalOptions eval_options(const TrainConfig& config) {
  EvalOptions o;
  o.mi_report = config.uses_vad_heads();
  o.refit_steps = config.mi_refit_steps;
  o.hidden_scale = config.estimator_hidden_scale;
  o.estimator_lr = config.peak_lr * config.estimator_lr_scale;
  o.seed = static_cast<std::uint64_t>(config.seed);
  return o;
}

ModelOutputs run_model(const VadVae& model, const std::vector<ModelInput>& inputs,
                       std::size_t batch_size) {
  if (inputs.empty()) throw UsageError("evaluate: no inputs");
  NoGradGuard no_grad;
  TapeScope scope;
  const auto n = static_cast<Index>(inputs.size());
  const bool vad = model.config().uses_vad_heads();
  ModelOutputs out;
  out.preds.reserve(inputs.size());
  out.golds.reserve(inputs.size());
  out.vad_target.resize(n, 3);
  out.mu.resize(n, model.config().latent_total());
  if (vad) out.vad_pred.resize(n, 3);
  Rng unused(0);

  for (std::size_t begin = 0; begin < inputs.size(); begin += batch_size) {
    const std::size_t end = std::min(inputs.size(), begin + batch_size);
    Batch batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&inputs[i]);
    const LatentBlock block = model.encode(batch, Mode::Eval, unused);
    const Matrix logits = model.classify(block).value();
    const auto b = static_cast<Index>(begin);
    const auto rows = static_cast<Index>(end - begin);
    out.mu.middleRows(b, rows) = block.joint.value();
    out.vad_target.middleRows(b, rows) = vad_targets(batch);
    if (vad) {
      const VadPrediction p = model.predict_vad(block);
      out.vad_pred.block(b, 0, rows, 1) = p.valence.value();
      out.vad_pred.block(b, 1, rows, 1) = p.arousal.value();
      out.vad_pred.block(b, 2, rows, 1) = p.dominance.value();
    }
    for (Index r = 0; r < rows; ++r) {
      Index arg = 0;
      logits.row(r).maxCoeff(&arg);
      out.preds.push_back(static_cast<int>(arg));
      out.golds.push_back(batch[static_cast<std::size_t>(r)]->label);
    }
  }
  return out;
}

std::array<Matrix, 3> vad_blocks(const Matrix& mu, const TrainConfig& c) {
  return {mu.middleCols(0, c.d_v), mu.middleCols(c.d_v, c.d_a),
          mu.middleCols(c.d_v + c.d_a, c.d_d)};
}

nlohmann::json EvalReport::to_json() const {
  auto flagged = [](const FlaggedValue& f) -> nlohmann::json {
    return f.defined ? nlohmann::json(f.value) : nlohmann::json(nullptr);
  };
  nlohmann::json j;
  j["n"] = n;
  j["weighted_f1"] = weighted_f1;
  j["micro_f1_no_neutral"] = flagged(micro_f1_no_neutral);
  j["pearson"] = {{"valence", flagged(pearson[0])},
                  {"arousal", flagged(pearson[1])},
                  {"dominance", flagged(pearson[2])}};
  if (mi) {
    nlohmann::json m;
    for (std::size_t i = 0; i < kMiPairs.size(); ++i) m[pair_name(i)] = mi->pairs[i];
    m["average"] = mi->average;
    j["mi"] = m;
  }
  nlohmann::json classes = nlohmann::json::object();
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    classes[labels.at(c)] = {{"precision", per_class[c].precision},
                             {"recall", per_class[c].recall},
                             {"f1", per_class[c].f1},
                             {"support", per_class[c].support}};
  }
  j["per_class"] = classes;
  return j;
}

EvalReport evaluate(const VadVae& model, const std::vector<ModelInput>& inputs,
                    const std::vector<std::string>& labels, const EvalOptions& options) {
  const int k = static_cast<int>(labels.size());
  if (k != model.num_labels()) throw SchemaError("evaluate: label set does not match the model");
  const ModelOutputs out = run_model(model, inputs, options.batch_size);

  EvalReport r;
  r.labels = labels;
  r.n = inputs.size();
  r.weighted_f1 = weighted_f1(out.preds, out.golds, k);
  r.per_class = per_class_scores(confusion_matrix(out.preds, out.golds, k));
  const auto neutral = std::find(labels.begin(), labels.end(), "neutral");
  if (neutral != labels.end()) {
    r.micro_f1_no_neutral = micro_f1_excluding(out.preds, out.golds, k,
                                               static_cast<int>(neutral - labels.begin()));
  }
  if (out.vad_pred.size() != 0) {
    for (Index f = 0; f < 3; ++f) {
      r.pearson[static_cast<std::size_t>(f)] = pearson(out.vad_pred.col(f), out.vad_target.col(f));
    }
  } else {
    r.pearson.fill({0.0, false});
  }
  if (options.mi_report && model.config().uses_vad_heads() && inputs.size() >= 2) {
    r.mi = refit_mi_report(vad_blocks(out.mu, model.config()), options.hidden_scale,
                           options.estimator_lr, options.refit_steps, options.seed);
  }
  return r;
}

void export_latents(const VadVae& model, const std::vector<ModelInput>& inputs,
                    const std::vector<std::string>& labels, const std::filesystem::path& path) {
  const ModelOutputs out = run_model(model, inputs);
  std::ofstream file(path);
  if (!file) throw FileError("cannot write latents to " + path.string());
  const TrainConfig& c = model.config();
  file << "utterance_id,emotion";
  if (c.entangled_baseline) {
    for (int j = 0; j < c.latent_total(); ++j) file << ",mu_C_" << j;
  } else {
    const std::array<std::pair<const char*, int>, 4> blocks{
        {{"V", c.d_v}, {"A", c.d_a}, {"D", c.d_d}, {"C", c.d_c}}};
    for (const auto& [name, dim] : blocks) {
      for (int j = 0; j < dim; ++j) file << ",mu_" << name << '_' << j;
    }
  }
  file << '\n';
  char buf[32];
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    file << inputs[i].utterance_id << ',' << labels.at(static_cast<std::size_t>(inputs[i].label));
    for (Index j = 0; j < out.mu.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", out.mu(static_cast<Index>(i), j));
      file << buf;
    }
    file << '\n';
  }
  if (!file) throw FileError("write failed for " + path.string());
}

std::vector<RetentionRow> robustness_curve(const TrainFn& train_fn,
                                           const std::vector<double>& fractions,
                                           const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw UsageError("robustness_curve: need at least one seed");
  std::vector<double> alphas = fractions;
  if (std::find(alphas.begin(), alphas.end(), 0.0) == alphas.end()) alphas.push_back(0.0);
  std::sort(alphas.begin(), alphas.end());

  std::vector<RetentionRow> rows;
  for (const std::string variant : {"vadvae", "entangled"}) {
    std::map<std::uint64_t, double> clean;
    for (double alpha : alphas) {
      RetentionRow row{variant, alpha, 0.0, 0.0, seeds.size()};
      for (std::uint64_t seed : seeds) {
        const double f1 = train_fn(variant, alpha, seed);
        if (alpha == 0.0) clean[seed] = f1;
        const double base = clean.at(seed);
        row.mean_f1 += f1;
        row.retention += base > 0.0 ? f1 / base : 0.0;
      }
      row.mean_f1 /= static_cast<double>(seeds.size());
      row.retention /= static_cast<double>(seeds.size());
      rows.push_back(row);
    }
  }
  return rows;
}

void write_retention_csv(std::ostream& out, const std::vector<RetentionRow>& rows) {
  out << "variant,alpha,mean_f1,retention,seeds\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.2f,%.6f,%.6f,%zu\n", r.variant.c_str(), r.alpha,
                  r.mean_f1, r.retention, r.seeds);
    out << buf;
  }
}

}  // namespace vadvae
