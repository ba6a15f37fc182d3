#include "vadvae/tensor.hpp"

#include "vadvae/errors.hpp"

#include <cmath>
#include <sstream>

namespace vadvae {

namespace {

using BackwardFn = std::function<void(Node&)>;

thread_local bool g_no_grad = false;

Tensor make_op(Matrix value, std::vector<NodePtr> parents, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_no_grad) return Tensor(std::move(node));
  bool requires_grad = false;
  for (const auto& p : parents) requires_grad = requires_grad || p->requires_grad;
  if (requires_grad) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
    Tape::current().record(node);
  }
  return Tensor(std::move(node));
}

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

void require_nonempty(const Tensor& x, const char* op) {
  if (x.size() == 0) throw DomainError(std::string(op) + ": empty tensor");
}

void require_axis(int axis, const char* op) {
  if (axis != 0 && axis != 1) {
    throw UsageError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank 2");
  }
}

// Writes straight into the gradient buffer, with no temporary for the product.
template <typename Product>
void accumulate_product(Node& n, const Product& product) {
  if (n.grad.size() == 0) {
    n.grad.noalias() = product;
  } else {
    n.grad.noalias() += product;
  }
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

// Reduces a result-shaped gradient back onto a (possibly broadcast) operand.
void accumulate_broadcast(Node& parent, const Matrix& g) {
  if (!parent.requires_grad) return;
  if (is_scalar(parent.value) && !is_scalar(g)) {
    parent.accumulate(Matrix::Constant(1, 1, g.sum()));
  } else {
    parent.accumulate(g);
  }
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

Tensor Tensor::row(std::initializer_list<double> values) {
  Matrix m(1, static_cast<Index>(values.size()));
  Index j = 0;
  for (double v : values) m(0, j++) = v;
  return constant(std::move(m));
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return requires_grad ? parameter(Matrix::Zero(rows, cols)) : constant(Matrix::Zero(rows, cols));
}

Matrix Tensor::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

std::string Tensor::shape_string() const { return shape_of(node_->value); }

double Tensor::item() const {
  if (size() != 1) throw UsageError("item() on non-scalar tensor " + shape_string());
  return node_->value(0, 0);
}

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(const NodePtr& node) {
  node->tape_index = static_cast<std::ptrdiff_t>(nodes_.size());
  nodes_.push_back(node);
}

void Tape::reset() {
  for (auto& n : nodes_) n->tape_index = -1;
  nodes_.clear();
}

void Tape::truncate(std::size_t size) {
  for (std::size_t i = size; i < nodes_.size(); ++i) nodes_[i]->tape_index = -1;
  if (size < nodes_.size()) nodes_.resize(size);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward: loss must be a scalar, got " +
                     (loss.defined() ? loss.shape_string() : std::string("undefined")));
  }
  const NodePtr& root = loss.node();
  const auto idx = root->tape_index;
  const bool on_tape = idx >= 0 && static_cast<std::size_t>(idx) < nodes_.size() &&
                       nodes_[static_cast<std::size_t>(idx)] == root;
  if (!on_tape) {
    if (root->requires_grad && root->parents.empty()) {
      root->accumulate(Matrix::Ones(1, 1));
      return;
    }
    throw UsageError("backward: loss is not recorded on this thread's tape");
  }
  for (auto& n : nodes_) n->grad.resize(0, 0);
  root->grad = Matrix::Ones(1, 1);
  for (auto i = idx; i >= 0; --i) {
    Node& n = *nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) continue;
    n.backward_fn(n);
  }
}

std::string to_string(UnaryKind kind) {
  switch (kind) {
    case UnaryKind::Exp: return "exp";
    case UnaryKind::Log: return "log";
    case UnaryKind::Tanh: return "tanh";
    case UnaryKind::Sigmoid: return "sigmoid";
    case UnaryKind::Square: return "square";
    case UnaryKind::Neg: return "neg";
  }
  return "?";
}

std::string to_string(BinaryKind kind) {
  switch (kind) {
    case BinaryKind::Add: return "add";
    case BinaryKind::Sub: return "sub";
    case BinaryKind::Mul: return "mul";
  }
  return "?";
}

Tensor elementwise(UnaryKind kind, const Tensor& x) {
  const Matrix& v = x.value();
  switch (kind) {
    case UnaryKind::Exp: {
      Matrix out = v.array().exp().matrix();
      return make_op(out, {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        p.accumulate((self.grad.array() * self.value.array()).matrix());
      });
    }
    case UnaryKind::Log: {
      if (v.size() > 0 && !(v.array() > 0.0).all()) {
        throw DomainError("log: non-positive input");
      }
      return make_op(v.array().log().matrix(), {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        p.accumulate((self.grad.array() / p.value.array()).matrix());
      });
    }
    case UnaryKind::Tanh: {
      return make_op(v.array().tanh().matrix(), {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        p.accumulate((self.grad.array() * (1.0 - self.value.array().square())).matrix());
      });
    }
    case UnaryKind::Sigmoid: {
      Matrix out = (1.0 / (1.0 + (-v.array()).exp())).matrix();
      return make_op(std::move(out), {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        const auto s = self.value.array();
        p.accumulate((self.grad.array() * s * (1.0 - s)).matrix());
      });
    }
    case UnaryKind::Square: {
      return make_op(v.array().square().matrix(), {x.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        p.accumulate((2.0 * self.grad.array() * p.value.array()).matrix());
      });
    }
    case UnaryKind::Neg: {
      return make_op(-v, {x.node()}, [](Node& self) { self.parents[0]->accumulate(-self.grad); });
    }
  }
  throw UsageError("elementwise: unknown unary kind");
}

Tensor elementwise(BinaryKind kind, const Tensor& a, const Tensor& b) {
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const bool same = va.rows() == vb.rows() && va.cols() == vb.cols();
  if (!same && !is_scalar(va) && !is_scalar(vb)) {
    throw DimensionError(to_string(kind) + ": shape mismatch " + shape_of(va) + " vs " +
                         shape_of(vb));
  }
  // Broadcast the scalar operand, if any, to the result shape.
  const Index rows = std::max(va.rows(), vb.rows());
  const Index cols = std::max(va.cols(), vb.cols());
  auto expand = [&](const Matrix& m) -> Matrix {
    return (m.rows() == rows && m.cols() == cols) ? m : Matrix::Constant(rows, cols, m(0, 0));
  };

  switch (kind) {
    case BinaryKind::Add:
      return make_op(expand(va) + expand(vb), {a.node(), b.node()}, [](Node& self) {
        accumulate_broadcast(*self.parents[0], self.grad);
        accumulate_broadcast(*self.parents[1], self.grad);
      });
    case BinaryKind::Sub:
      return make_op(expand(va) - expand(vb), {a.node(), b.node()}, [](Node& self) {
        accumulate_broadcast(*self.parents[0], self.grad);
        accumulate_broadcast(*self.parents[1], -self.grad);
      });
    case BinaryKind::Mul: {
      Matrix ea = expand(va);
      Matrix eb = expand(vb);
      Matrix out = (ea.array() * eb.array()).matrix();
      return make_op(std::move(out), {a.node(), b.node()},
                     [rows, cols](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       auto full = [&](const Matrix& m) -> Matrix {
                         return is_scalar(m) && !(rows == 1 && cols == 1)
                                    ? Matrix::Constant(rows, cols, m(0, 0))
                                    : m;
                       };
                       if (pa.requires_grad) {
                         accumulate_broadcast(pa, (self.grad.array() * full(pb.value).array()).matrix());
                       }
                       if (pb.requires_grad) {
                         accumulate_broadcast(pb, (self.grad.array() * full(pa.value).array()).matrix());
                       }
                     });
    }
  }
  throw UsageError("elementwise: unknown binary kind");
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryKind::Mul, a, b); }
Tensor exp(const Tensor& x) { return elementwise(UnaryKind::Exp, x); }
Tensor log(const Tensor& x) { return elementwise(UnaryKind::Log, x); }
Tensor tanh(const Tensor& x) { return elementwise(UnaryKind::Tanh, x); }
Tensor sigmoid(const Tensor& x) { return elementwise(UnaryKind::Sigmoid, x); }
Tensor square(const Tensor& x) { return elementwise(UnaryKind::Square, x); }
Tensor neg(const Tensor& x) { return elementwise(UnaryKind::Neg, x); }

Tensor scale(const Tensor& x, double factor) {
  return make_op(x.value() * factor, {x.node()},
                 [factor](Node& self) { self.parents[0]->accumulate(self.grad * factor); });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return make_op((x.value().array() + offset).matrix(), {x.node()},
                 [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return make_op(x.value().cwiseMax(lo).cwiseMin(hi), {x.node()}, [lo, hi](Node& self) {
    Node& p = *self.parents[0];
    const auto inside = (p.value.array() >= lo && p.value.array() <= hi).cast<double>();
    p.accumulate((self.grad.array() * inside).matrix());
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + a.shape_string() + " x " +
                         b.shape_string());
  }
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accumulate_product(pa, self.grad * pb.value.transpose());
    if (pb.requires_grad) accumulate_product(pb, pa.value.transpose() * self.grad);
  });
}

Tensor transpose(const Tensor& x) {
  Matrix out = x.value().transpose();
  return make_op(std::move(out), {x.node()},
                 [](Node& self) { self.parents[0]->accumulate(self.grad.transpose()); });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_row: bias " + bias.shape_string() + " does not match " +
                         x.shape_string());
  }
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return make_op(std::move(out), {x.node(), bias.node()}, [](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    if (px.requires_grad) px.accumulate(self.grad);
    if (pb.requires_grad) pb.accumulate(self.grad.colwise().sum());
  });
}

Tensor sum(const Tensor& x) {
  require_nonempty(x, "sum");
  const Index r = x.rows();
  const Index c = x.cols();
  return make_op(Matrix::Constant(1, 1, x.value().sum()), {x.node()}, [r, c](Node& self) {
    self.parents[0]->accumulate(Matrix::Constant(r, c, self.grad(0, 0)));
  });
}

Tensor sum(const Tensor& x, int axis) {
  require_axis(axis, "sum");
  require_nonempty(x, "sum");
  const Index r = x.rows();
  const Index c = x.cols();
  if (axis == 0) {
    return make_op(x.value().colwise().sum(), {x.node()}, [r](Node& self) {
      self.parents[0]->accumulate(self.grad.replicate(r, 1));
    });
  }
  return make_op(x.value().rowwise().sum(), {x.node()}, [c](Node& self) {
    self.parents[0]->accumulate(self.grad.replicate(1, c));
  });
}

Tensor mean(const Tensor& x) {
  require_nonempty(x, "mean");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor mean(const Tensor& x, int axis) {
  require_axis(axis, "mean");
  require_nonempty(x, "mean");
  const double count = static_cast<double>(axis == 0 ? x.rows() : x.cols());
  return scale(sum(x, axis), 1.0 / count);
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  require_axis(axis, "concat");
  if (parts.empty()) throw UsageError("concat: no parts");
  Index rows = 0;
  Index cols = 0;
  for (const auto& p : parts) {
    if (axis == 0) {
      if (p.cols() != parts[0].cols()) {
        throw DimensionError("concat: column extents differ " + parts[0].shape_string() + " vs " +
                             p.shape_string());
      }
      rows += p.rows();
      cols = p.cols();
    } else {
      if (p.rows() != parts[0].rows()) {
        throw DimensionError("concat: row extents differ " + parts[0].shape_string() + " vs " +
                             p.shape_string());
      }
      cols += p.cols();
      rows = p.rows();
    }
  }
  Matrix out(rows, cols);
  std::vector<NodePtr> parents;
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    if (axis == 0) {
      out.middleRows(off, p.rows()) = p.value();
      off += p.rows();
    } else {
      out.middleCols(off, p.cols()) = p.value();
      off += p.cols();
    }
    parents.push_back(p.node());
  }
  return make_op(std::move(out), std::move(parents), [axis, offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      if (!p.requires_grad) continue;
      if (axis == 0) {
        p.accumulate(self.grad.middleRows(offsets[i], p.value.rows()));
      } else {
        p.accumulate(self.grad.middleCols(offsets[i], p.value.cols()));
      }
    }
  });
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, int axis, Index begin, Index end) {
  require_axis(axis, "slice");
  const Index extent = axis == 0 ? x.rows() : x.cols();
  if (begin < 0 || end > extent || begin >= end) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + x.shape_string());
  }
  const Index r = x.rows();
  const Index c = x.cols();
  Matrix out = axis == 0 ? Matrix(x.value().middleRows(begin, end - begin))
                         : Matrix(x.value().middleCols(begin, end - begin));
  return make_op(std::move(out), {x.node()}, [axis, begin, r, c](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.size() == 0) p.grad = Matrix::Zero(r, c);
    if (axis == 0) {
      p.grad.middleRows(begin, self.grad.rows()) += self.grad;
    } else {
      p.grad.middleCols(begin, self.grad.cols()) += self.grad;
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const int> indices) {
  const Index n = static_cast<Index>(indices.size());
  Matrix out(n, table.cols());
  for (Index i = 0; i < n; ++i) {
    const int id = indices[static_cast<std::size_t>(i)];
    if (id < 0 || id >= table.rows()) {
      throw DataError("gather_rows: index " + std::to_string(id) + " outside table of " +
                      std::to_string(table.rows()) + " rows");
    }
    out.row(i) = table.value().row(id);
  }
  std::vector<int> ids(indices.begin(), indices.end());
  const Index r = table.rows();
  const Index c = table.cols();
  return make_op(std::move(out), {table.node()}, [ids = std::move(ids), r, c](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.size() == 0) p.grad = Matrix::Zero(r, c);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      p.grad.row(ids[i]) += self.grad.row(static_cast<Index>(i));
    }
  });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

Tensor weighted_softmax_cross_entropy(const Tensor& logits, std::span<const int> targets,
                                      std::span<const double> weights) {
  const Matrix& z = logits.value();
  const Index n = z.rows();
  const Index k = z.cols();
  if (static_cast<Index>(targets.size()) != n || static_cast<Index>(weights.size()) != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + logits.shape_string());
  }
  if (!z.allFinite()) throw NumericError("softmax_cross_entropy: non-finite logits");
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int t = tgt[static_cast<std::size_t>(i)];
    if (t < 0 || t >= k) {
      throw UsageError("softmax_cross_entropy: class " + std::to_string(t) + " not in [0, " +
                       std::to_string(k) + ")");
    }
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    loss += w[static_cast<std::size_t>(i)] * (lse - z(i, t));
  }
  return make_op(Matrix::Constant(1, 1, loss), {logits.node()},
                 [tgt = std::move(tgt), w = std::move(w)](Node& self) {
                   Node& p = *self.parents[0];
                   Matrix g = softmax_rows(p.value);
                   for (Index i = 0; i < g.rows(); ++i) {
                     g(i, tgt[static_cast<std::size_t>(i)]) -= 1.0;
                     g.row(i) *= w[static_cast<std::size_t>(i)];
                   }
                   p.accumulate(g * self.grad(0, 0));
                 });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rows() == 0) throw DomainError("softmax_cross_entropy: empty batch");
  std::vector<double> w(static_cast<std::size_t>(logits.rows()),
                        1.0 / static_cast<double>(logits.rows()));
  return weighted_softmax_cross_entropy(logits, targets, w);
}

Tensor detach(const Tensor& x) { return Tensor::constant(x.value()); }

Tensor custom_op(Matrix value, const std::vector<Tensor>& inputs,
                 std::function<void(Node&)> backward) {
  std::vector<NodePtr> parents;
  parents.reserve(inputs.size());
  for (const auto& t : inputs) parents.push_back(t.node());
  return make_op(std::move(value), std::move(parents), std::move(backward));
}

}  // namespace vadvae
