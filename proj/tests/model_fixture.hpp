#pragma once

#include "test_util.hpp"

#include "vadvae/model.hpp"

#include <memory>
#include <vector>

namespace vadvae::testing {

inline TrainConfig small_config() {
  TrainConfig c;
  c.d_v = 2;
  c.d_a = 2;
  c.d_d = 2;
  c.d_c = 3;
  c.hidden = 6;
  c.embed = 5;
  c.dropout = 0.0;
  return c;
}

// A tiny model over tiny_corpus() with every input assembled.
struct SmallModel {
  explicit SmallModel(TrainConfig c = small_config(), std::uint64_t seed = 0)
      : config(c), lexicon(VadLexicon::builtin("iemocap")) {
    corpus = tiny_corpus();
    tokenizer = Tokenizer::build(corpus, 1);
    inputs = assemble_all(corpus, {c.window_past, c.window_future}, tokenizer, lexicon,
                          static_cast<std::size_t>(c.max_len));
    Rng rng(seed);
    model = std::make_unique<VadVae>(config, static_cast<Index>(tokenizer.size()),
                                     static_cast<int>(lexicon.size()), rng);
    if (config.uses_mi()) {
      estimators = std::make_unique<MiEstimators>(model->vad_dims(), config.estimator_hidden_scale,
                                                  1e-2, rng);
    }
  }

  Batch batch(std::size_t n) const {
    Batch b;
    for (std::size_t i = 0; i < n && i < inputs.size(); ++i) b.push_back(&inputs[i]);
    return b;
  }

  TrainConfig config;
  VadLexicon lexicon;
  Corpus corpus;
  Tokenizer tokenizer;
  std::vector<ModelInput> inputs;
  std::unique_ptr<VadVae> model;
  std::unique_ptr<MiEstimators> estimators;
};

inline std::vector<Tensor> tensors_of(const ParameterList& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

inline bool all_grads_zero(const ParameterList& params) {
  for (const auto& p : params) {
    if (p.tensor.has_grad() && !p.tensor.grad().isZero()) return false;
  }
  return true;
}

}  // namespace vadvae::testing
