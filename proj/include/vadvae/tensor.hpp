#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vadvae {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One value in the computation graph. Leaves (parameters, inputs) live outside
// the tape; every op result that depends on a requires_grad input is recorded.
struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;
  std::ptrdiff_t tape_index = -1;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

// Dense row-major tensor of rank <= 2 with reverse-mode participation.
// Rank-1 data is stored as a single row; scalars are 1x1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double v);
  static Tensor row(std::initializer_list<double> values);
  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  // Parameter storage for optimizers and checkpoint loading.
  Matrix& mutable_value() { return node_->value; }

  bool has_grad() const { return node_->grad.size() != 0; }
  // Gradient, or zeros of the value's shape when nothing has flowed in.
  Matrix grad() const;
  void zero_grad() { node_->grad.resize(0, 0); }

  bool requires_grad() const { return node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }
  std::string shape_string() const;
  double item() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Ordered record of differentiable operations for the current thread.
// Nodes are appended at creation, so tape order is a topological order.
class Tape {
 public:
  static Tape& current();

  void record(const NodePtr& node);
  void reset();
  // Drops every node recorded after the first `size` entries.
  void truncate(std::size_t size);
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  // Leaf gradients accumulate across calls; intermediate gradients are
  // recomputed on every call.
  void backward(const Tensor& loss);

 private:
  std::vector<NodePtr> nodes_;
};

inline void backward(const Tensor& loss) { Tape::current().backward(loss); }

// While alive, ops on this thread produce constants and record nothing.
class NoGradGuard {
 public:
  NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  ~NoGradGuard();
  static bool active();

 private:
  bool previous_;
};

// RAII guard that clears the thread's tape on scope exit.
class TapeScope {
 public:
  TapeScope() = default;
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope() { Tape::current().reset(); }
};

enum class UnaryKind { Exp, Log, Tanh, Sigmoid, Square, Neg };
enum class BinaryKind { Add, Sub, Mul };

inline constexpr UnaryKind kUnaryKinds[] = {UnaryKind::Exp,     UnaryKind::Log,
                                            UnaryKind::Tanh,    UnaryKind::Sigmoid,
                                            UnaryKind::Square,  UnaryKind::Neg};
inline constexpr BinaryKind kBinaryKinds[] = {BinaryKind::Add, BinaryKind::Sub,
                                              BinaryKind::Mul};

std::string to_string(UnaryKind kind);
std::string to_string(BinaryKind kind);

Tensor elementwise(UnaryKind kind, const Tensor& x);
// Operands must have equal shapes, or one of them must be 1x1.
Tensor elementwise(BinaryKind kind, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor square(const Tensor& x);
Tensor neg(const Tensor& x);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
// Values outside [lo, hi] are clipped and pass no gradient.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
// x[N x d] + bias[1 x d] added to every row.
Tensor add_row(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, int axis);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, Index begin, Index end);

// Rows of table selected by index; gradient scatters into the selected rows.
Tensor gather_rows(const Tensor& table, std::span<const int> indices);

// Mean cross-entropy of softmax(logits) against class indices.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets);
// Cross-entropy with per-row weights: sum_i w_i * CE_i.
Tensor weighted_softmax_cross_entropy(const Tensor& logits, std::span<const int> targets,
                                      std::span<const double> weights);
Matrix softmax_rows(const Matrix& logits);

Tensor detach(const Tensor& x);

// Records a composite op whose backward is written by hand: `backward` reads
// self.grad and accumulates into self.parents, which mirror `inputs`.
Tensor custom_op(Matrix value, const std::vector<Tensor>& inputs,
                 std::function<void(Node&)> backward);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

}  // namespace vadvae
