#pragma once

#include "vadvae/tensor.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace vadvae {

// Seeded random source shared by initialization, sampling and dropout.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  Matrix normal_matrix(Index rows, Index cols);
  Matrix uniform_matrix(Index rows, Index cols, double bound);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

void append_parameters(ParameterList& out, const std::string& prefix, const ParameterList& in);
void zero_grad(const ParameterList& params);

// y = x W + b, W uniform in +-1/sqrt(in), b zero.
struct Linear {
  Linear() = default;
  Linear(Index in, Index out, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  Index in_features() const { return weight.rows(); }
  Index out_features() const { return weight.cols(); }
  ParameterList parameters() const { return {{"weight", weight}, {"bias", bias}}; }

  Tensor weight;
  Tensor bias;
};

struct Embedding {
  Embedding() = default;
  Embedding(Index vocab, Index dim, Rng& rng);

  Tensor lookup(std::span<const int> ids) const { return gather_rows(table, ids); }
  Index vocab() const { return table.rows(); }
  Index dim() const { return table.cols(); }
  ParameterList parameters() const { return {{"table", table}}; }

  Tensor table;
};

// Gated recurrent unit. Gate blocks are laid out [reset | update | candidate].
struct GruCell {
  GruCell() = default;
  GruCell(Index input, Index hidden, Rng& rng);

  // One step given the precomputed input projection x W_in + b_in.
  Tensor step(const Tensor& input_proj, const Tensor& h) const;
  Index hidden() const { return w_hidden.rows(); }
  Index input() const { return w_input.rows(); }
  ParameterList parameters() const;

  Tensor w_input;   // [input x 3H]
  Tensor w_hidden;  // [H x 3H]
  Tensor b_input;   // [1 x 3H]
  Tensor b_hidden;  // [1 x 3H]
};

// Fused recurrence over time-major inputs: step t reads rows [tB, (t+1)B) of
// input_proj and row b stops updating after lengths[b] steps. Returns every
// hidden state stacked the same way, [T*B x H]. Matches repeated step() calls.
Tensor gru_sequence(const GruCell& cell, const Tensor& input_proj, const Tensor& h0,
                    std::span<const std::size_t> lengths);

// Runs the cell left to right over each embedded sequence from a zero state
// and returns the final hidden states, one row per sequence.
Tensor encode_batch(const Embedding& embedding, const GruCell& cell,
                    const std::vector<std::vector<int>>& sequences);
// Single-sequence form, result [1 x H].
Tensor encode_sequence(const Embedding& embedding, const GruCell& cell, std::span<const int> tokens);

// Teacher-forced reconstruction loss. Each gold sequence is <start> ... <end>;
// the hidden state starts at init_proj(z). Returns the per-sequence mean token
// NLL averaged over the batch.
Tensor decode_autoregressive(const Embedding& embedding, const GruCell& cell,
                             const Linear& init_proj, const Linear& out_proj, const Tensor& z,
                             const std::vector<std::vector<int>>& gold);

// Greedy decode of a single latent row; stops at end_id or max_len tokens.
std::vector<int> greedy_decode(const Embedding& embedding, const GruCell& cell,
                               const Linear& init_proj, const Linear& out_proj, const Tensor& z,
                               int start_id, int end_id, std::size_t max_len);

// Inverted dropout with keep-probability 1-p.
Tensor dropout(const Tensor& x, double p, Rng& rng);

struct AdamOptions {
  double peak_lr = 1e-3;
  double warmup_ratio = 0.2;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with decoupled weight decay and a linear warm-up to a constant peak.
class Adam {
 public:
  Adam(ParameterList params, AdamOptions options, long total_steps);

  // Learning rate at update number `step` (0 before any update).
  double lr_at(long step) const;
  long warmup_steps() const { return warmup_steps_; }
  long steps_taken() const { return step_; }
  const AdamOptions& options() const { return options_; }

  void step();
  void zero_grad() const;

 private:
  ParameterList params_;
  AdamOptions options_;
  long warmup_steps_;
  long step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace vadvae
