#include "vadvae/nn.hpp"

#include "vadvae/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace vadvae {

Matrix Rng::normal_matrix(Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal();
  return m;
}

Matrix Rng::uniform_matrix(Index rows, Index cols, double bound) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(-bound, bound);
  return m;
}

void append_parameters(ParameterList& out, const std::string& prefix, const ParameterList& in) {
  for (const auto& p : in) out.push_back({prefix + "." + p.name, p.tensor});
}

void zero_grad(const ParameterList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

Linear::Linear(Index in, Index out, Rng& rng)
    : weight(Tensor::parameter(rng.uniform_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in))))),
      bias(Tensor::parameter(Matrix::Zero(1, out))) {}

Tensor Linear::operator()(const Tensor& x) const {
  if (x.cols() != weight.rows()) {
    throw DimensionError("linear: input " + x.shape_string() + " does not match weight " +
                         weight.shape_string());
  }
  return add_row(matmul(x, weight), bias);
}

// A lookup reads one row, so the fan-in is 1.
Embedding::Embedding(Index vocab, Index dim, Rng& rng)
    : table(Tensor::parameter(rng.uniform_matrix(vocab, dim, 1.0))) {}

GruCell::GruCell(Index input, Index hidden, Rng& rng) {
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(input));
  const double h_bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_input = Tensor::parameter(rng.uniform_matrix(input, 3 * hidden, in_bound));
  w_hidden = Tensor::parameter(rng.uniform_matrix(hidden, 3 * hidden, h_bound));
  b_input = Tensor::parameter(Matrix::Zero(1, 3 * hidden));
  b_hidden = Tensor::parameter(Matrix::Zero(1, 3 * hidden));
}

ParameterList GruCell::parameters() const {
  return {{"w_input", w_input}, {"w_hidden", w_hidden}, {"b_input", b_input}, {"b_hidden", b_hidden}};
}

Tensor GruCell::step(const Tensor& input_proj, const Tensor& h) const {
  const Index H = hidden();
  Tensor hidden_proj = add_row(matmul(h, w_hidden), b_hidden);
  Tensor gates = sigmoid(slice(input_proj, 1, 0, 2 * H) + slice(hidden_proj, 1, 0, 2 * H));
  Tensor reset = slice(gates, 1, 0, H);
  Tensor update = slice(gates, 1, H, 2 * H);
  Tensor candidate =
      tanh(slice(input_proj, 1, 2 * H, 3 * H) + reset * slice(hidden_proj, 1, 2 * H, 3 * H));
  // h' = (1 - u) * n + u * h
  return candidate + update * (h - candidate);
}

namespace {

struct GruTrace {
  Index batch = 0;
  std::vector<Matrix> h_prev, reset, update, candidate, hidden_cand;
  std::vector<Eigen::Array<double, Eigen::Dynamic, 1>> live;
};

Eigen::Array<double, Eigen::Dynamic, 1> live_mask(std::span<const std::size_t> lengths, std::size_t t) {
  Eigen::Array<double, Eigen::Dynamic, 1> m(static_cast<Index>(lengths.size()));
  for (std::size_t b = 0; b < lengths.size(); ++b) m(static_cast<Index>(b)) = t < lengths[b] ? 1.0 : 0.0;
  return m;
}

}  // namespace

Tensor gru_sequence(const GruCell& cell, const Tensor& input_proj, const Tensor& h0,
                    std::span<const std::size_t> lengths) {
  const Index H = cell.hidden();
  const Index B = h0.rows();
  if (static_cast<Index>(lengths.size()) != B || h0.cols() != H || input_proj.cols() != 3 * H ||
      B == 0 || input_proj.rows() % B != 0) {
    throw DimensionError("gru_sequence: inputs " + input_proj.shape_string() + " and state " +
                         h0.shape_string() + " do not fit the cell");
  }
  const std::size_t steps = static_cast<std::size_t>(input_proj.rows() / B);
  const Matrix& xp = input_proj.value();
  const Matrix& w = cell.w_hidden.value();
  const auto bias = cell.b_hidden.value().row(0);

  auto trace = std::make_shared<GruTrace>();
  trace->batch = B;
  Matrix out(input_proj.rows(), H);
  Matrix h = h0.value();
  Matrix hp(B, 3 * H);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto x = xp.middleRows(static_cast<Index>(t) * B, B);
    hp.noalias() = h * w;
    hp.rowwise() += bias;
    Matrix r = (1.0 + (-(x.leftCols(H) + hp.leftCols(H)).array()).exp()).inverse().matrix();
    Matrix u = (1.0 + (-(x.middleCols(H, H) + hp.middleCols(H, H)).array()).exp()).inverse().matrix();
    Matrix hc = hp.rightCols(H);
    Matrix n = (x.rightCols(H).array() + r.array() * hc.array()).tanh().matrix();
    auto live = live_mask(lengths, t);
    Matrix next = n.array() + u.array() * (h.array() - n.array());
    Matrix h_new = h.array() + (next.array() - h.array()).colwise() * live;
    out.middleRows(static_cast<Index>(t) * B, B) = h_new;
    trace->h_prev.push_back(std::move(h));
    trace->reset.push_back(std::move(r));
    trace->update.push_back(std::move(u));
    trace->candidate.push_back(std::move(n));
    trace->hidden_cand.push_back(std::move(hc));
    trace->live.push_back(std::move(live));
    h = std::move(h_new);
  }
  if (NoGradGuard::active()) return Tensor::constant(std::move(out));

  return custom_op(std::move(out), {input_proj, h0, cell.w_hidden, cell.b_hidden},
                   [trace, w_node = cell.w_hidden.node()](Node& self) {
    const Index B = trace->batch;
    const Index H = self.value.cols();
    const std::size_t steps = trace->h_prev.size();
    const Matrix& w = w_node->value;
    Matrix d_hp(self.value.rows(), 3 * H);
    Matrix d_xp(self.value.rows(), 3 * H);
    Matrix h_prev_all(self.value.rows(), H);
    Matrix dh = Matrix::Zero(B, H);
    for (std::size_t t = steps; t-- > 0;) {
      const Index row = static_cast<Index>(t) * B;
      dh += self.grad.middleRows(row, B);
      const auto& live = trace->live[t];
      const auto r = trace->reset[t].array();
      const auto u = trace->update[t].array();
      const auto n = trace->candidate[t].array();
      const auto hp = trace->h_prev[t].array();
      const Eigen::ArrayXXd d_next = dh.array().colwise() * live;
      const Eigen::ArrayXXd d_n = d_next * (1.0 - u) * (1.0 - n.square());
      const Eigen::ArrayXXd d_r = d_n * trace->hidden_cand[t].array() * r * (1.0 - r);
      const Eigen::ArrayXXd d_u = d_next * (hp - n) * u * (1.0 - u);
      auto hp_rows = d_hp.middleRows(row, B);
      auto xp_rows = d_xp.middleRows(row, B);
      hp_rows.leftCols(H) = d_r.matrix();
      hp_rows.middleCols(H, H) = d_u.matrix();
      hp_rows.rightCols(H) = (d_n * r).matrix();
      xp_rows.leftCols(2 * H) = hp_rows.leftCols(2 * H);
      xp_rows.rightCols(H) = d_n.matrix();
      h_prev_all.middleRows(row, B) = trace->h_prev[t];
      // Carried rows pass dh straight through; live rows go through the gate.
      dh = (dh.array().colwise() * (1.0 - live)).matrix();
      dh.array() += d_next * u;
      dh.noalias() += hp_rows * w.transpose();
    }
    Node& x = *self.parents[0];
    Node& h0 = *self.parents[1];
    Node& wn = *self.parents[2];
    Node& bn = *self.parents[3];
    if (x.requires_grad) x.accumulate(d_xp);
    if (h0.requires_grad) h0.accumulate(dh);
    if (wn.requires_grad) {
      if (wn.grad.size() == 0) wn.grad = Matrix::Zero(w.rows(), w.cols());
      wn.grad.noalias() += h_prev_all.transpose() * d_hp;
    }
    if (bn.requires_grad) bn.accumulate(d_hp.colwise().sum());
  });
}

namespace {

// Runs the cell over time-major padded inputs and returns the stacked hidden
// states [T*B x H]; rows past a sequence's end carry its last state forward.
Tensor run_cell(const Embedding& embedding, const GruCell& cell,
                const std::vector<std::vector<int>>& sequences, const Tensor& h0) {
  std::size_t steps = 0;
  std::vector<std::size_t> lengths;
  for (const auto& s : sequences) {
    steps = std::max(steps, s.size());
    lengths.push_back(s.size());
  }
  std::vector<int> ids;
  ids.reserve(steps * sequences.size());
  for (std::size_t t = 0; t < steps; ++t) {
    for (const auto& s : sequences) ids.push_back(t < s.size() ? s[t] : s.back());
  }
  Tensor projected = add_row(matmul(embedding.lookup(ids), cell.w_input), cell.b_input);
  return gru_sequence(cell, projected, h0, lengths);
}

}  // namespace

Tensor encode_batch(const Embedding& embedding, const GruCell& cell,
                    const std::vector<std::vector<int>>& sequences) {
  if (sequences.empty()) throw UsageError("encode: empty batch");
  for (const auto& s : sequences) {
    if (s.empty()) throw UsageError("encode: empty token sequence");
    for (int id : s) {
      if (id < 0 || id >= embedding.vocab()) {
        throw DataError("encode: token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(embedding.vocab()));
      }
    }
  }
  const Index batch = static_cast<Index>(sequences.size());
  Tensor states = run_cell(embedding, cell, sequences, Tensor::zeros(batch, cell.hidden()));
  return states.rows() == batch ? states : slice(states, 0, states.rows() - batch, states.rows());
}

Tensor encode_sequence(const Embedding& embedding, const GruCell& cell,
                       std::span<const int> tokens) {
  return encode_batch(embedding, cell, {std::vector<int>(tokens.begin(), tokens.end())});
}

Tensor decode_autoregressive(const Embedding& embedding, const GruCell& cell,
                             const Linear& init_proj, const Linear& out_proj, const Tensor& z,
                             const std::vector<std::vector<int>>& gold) {
  if (gold.empty() || static_cast<Index>(gold.size()) != z.rows()) {
    throw UsageError("decode: need one gold sequence per latent row");
  }
  std::vector<std::vector<int>> inputs;
  inputs.reserve(gold.size());
  for (const auto& g : gold) {
    if (g.size() < 2) throw UsageError("decode: gold sequence needs start and end tokens");
    inputs.emplace_back(g.begin(), g.end() - 1);
  }
  const Index batch = z.rows();
  Tensor logits = out_proj(run_cell(embedding, cell, inputs, init_proj(z)));
  const std::size_t steps = static_cast<std::size_t>(logits.rows() / batch);

  // Row t*B + b predicts gold[b][t+1].
  std::vector<int> targets(steps * gold.size(), 0);
  std::vector<double> weights(targets.size(), 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < gold.size(); ++b) {
      const std::size_t row = t * gold.size() + b;
      if (t + 1 < gold[b].size()) {
        targets[row] = gold[b][t + 1];
        weights[row] = 1.0 / (static_cast<double>(gold[b].size() - 1) * static_cast<double>(batch));
      }
    }
  }
  return weighted_softmax_cross_entropy(logits, targets, weights);
}

std::vector<int> greedy_decode(const Embedding& embedding, const GruCell& cell,
                               const Linear& init_proj, const Linear& out_proj, const Tensor& z,
                               int start_id, int end_id, std::size_t max_len) {
  NoGradGuard no_grad;
  Tensor h = init_proj(z);
  int token = start_id;
  std::vector<int> out;
  while (out.size() < max_len) {
    const std::vector<int> id{token};
    Tensor x = add_row(matmul(embedding.lookup(id), cell.w_input), cell.b_input);
    h = cell.step(x, h);
    Index best = 0;
    out_proj(h).value().row(0).maxCoeff(&best);
    token = static_cast<int>(best);
    if (token == end_id) break;
    out.push_back(token);
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 - p;
  for (Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform(0.0, 1.0) < keep ? 1.0 / keep : 0.0;
  }
  return x * Tensor::constant(std::move(mask));
}

Adam::Adam(ParameterList params, AdamOptions options, long total_steps)
    : params_(std::move(params)),
      options_(options),
      warmup_steps_(static_cast<long>(std::lround(options.warmup_ratio * static_cast<double>(total_steps)))) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    v_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
  }
}

double Adam::lr_at(long step) const {
  if (warmup_steps_ <= 0) return options_.peak_lr;
  const double ramp = static_cast<double>(step) / static_cast<double>(warmup_steps_);
  return options_.peak_lr * std::min(ramp, 1.0);
}

void Adam::step() {
  ++step_;
  const double lr = lr_at(step_);
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  bool any_grad = false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    Matrix& w = t.mutable_value();
    if (options_.weight_decay > 0.0) w *= (1.0 - lr * options_.weight_decay);
    if (!t.has_grad()) {
      m_[i] *= options_.beta1;
      v_[i] *= options_.beta2;
    } else {
      any_grad = true;
      const Matrix& g = t.node()->grad;
      m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
      v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
    }
    w.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.eps);
  }
  if (!any_grad && !params_.empty()) {
    spdlog::warn("adam step {} taken with no gradients populated", step_);
  }
}

void Adam::zero_grad() const { vadvae::zero_grad(params_); }

}  // namespace vadvae
