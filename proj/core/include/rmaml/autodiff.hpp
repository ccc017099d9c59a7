#pragma once

// Reverse-mode automatic differentiation on an explicit tape.
//
// A Graph records primitive operations in creation order. Tensors are cheap
// handles: either a node of one graph, or a detached constant that owns its
// value. Backward functions are themselves written in terms of the public ops,
// so `grad(..., create_graph = true)` records the derivative computation on the
// tape and the result can be differentiated again (needed for the MAML
// meta-gradient through K inner gradient steps).
//
// Only a small op set is supported; broadcasting is explicit (`broadcast_to`)
// except for the scalar-with-tensor case handled by the binary operators.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rmaml::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major block of doubles with a shape. Rank 0 is a scalar.
class Array {
 public:
  Array() : data_(1, 0.0) {}
  Array(Shape shape, std::vector<double> values);

  static Array zeros(Shape shape);
  static Array filled(Shape shape, double value);
  static Array scalar(double value);
  /// Row-major [rows, cols] matrix from a flat value list.
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double item() const;

  bool all_finite() const noexcept;
  Array reshaped(Shape shape) const;

  friend bool operator==(const Array&, const Array&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class Op : std::uint8_t {
  Constant,
  Input,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  Shift,
  MatMul,
  Transpose,
  Reshape,
  BroadcastTo,
  Relu,
  Tanh,
  Exp,
  Log,
  Sign,
  Clip,
  Sum,
  Mean,
  SumRows,
  SumCols,
  MaxCols,
  StopGradient,
};

const char* op_name(Op op);

class Graph;

/// Handle to a value that may participate in a computation graph.
class Tensor {
 public:
  Tensor() = default;
  /// Detached constant.
  explicit Tensor(Array value);

  bool valid() const noexcept { return value_ != nullptr; }
  const Array& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  std::size_t size() const { return value_->size(); }
  double item() const { return value_->item(); }

  bool attached() const noexcept { return graph_ != nullptr; }
  Graph* graph() const noexcept { return graph_; }
  /// Node index inside the owning graph, or -1 for a detached constant.
  std::int64_t node() const noexcept { return node_; }

  /// Same value, no graph membership. O(1): the value buffer is shared.
  Tensor detach() const;

 private:
  friend class Graph;
  Tensor(std::shared_ptr<const Array> value, Graph* graph, std::int64_t node)
      : value_(std::move(value)), graph_(graph), node_(node) {}

  std::shared_ptr<const Array> value_;
  Graph* graph_ = nullptr;
  std::int64_t node_ = -1;
};

/// Non-value payload carried by a node (scalar factors, bounds, target shape).
struct Attrs {
  double a = 0.0;
  double b = 0.0;
  Shape shape;
};

struct Node {
  Op op = Op::Constant;
  std::int64_t lhs = -1;
  std::int64_t rhs = -1;
  Attrs attrs;
  std::shared_ptr<const Array> value;
};

/// Computes an op's value from its operand values. Shared by recording and
/// replay, which is what makes replay bit-identical to the recorded pass.
Array evaluate(Op op, const Array* lhs, const Array* rhs, const Attrs& attrs);

/// Tape of primitive operations. Not thread-safe; confine each graph to one
/// thread. Independent graphs may be used concurrently.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Differentiable leaf with no name.
  Tensor variable(Array value);
  /// Named leaf; can be rebound when replaying with `forward`.
  Tensor input(const std::string& name, Array value);
  /// Non-differentiable leaf (still a node so it can be mixed with others).
  Tensor constant(Array value);
  /// Attaches a detached tensor as a constant leaf; attached tensors of this
  /// graph pass through unchanged.
  Tensor adopt(const Tensor& t);

  void set_output(const std::string& name, const Tensor& t);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::int64_t id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  /// d(output)/d(wrt[i]). `output` must be a scalar of this graph. A `wrt`
  /// tensor the output does not depend on gets a zero gradient and an entry in
  /// `warnings()`. With `create_graph` the results are nodes of this graph.
  std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt,
                           bool create_graph = false);

  /// Replays the tape with new values for the named inputs and returns the
  /// named outputs. Every named input must be bound. The graph is not mutated.
  std::map<std::string, Array> forward(const std::map<std::string, Array>& inputs) const;

  /// Replay returning the values of arbitrary nodes, keyed by input node id.
  std::vector<Array> replay(const std::map<std::int64_t, Array>& bindings,
                            std::span<const Tensor> outputs) const;

  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  // Used by the op functions.
  Tensor record(Op op, const Tensor& lhs, const Tensor& rhs, Attrs attrs);
  Tensor record(Op op, const Tensor& operand, Attrs attrs);

 private:
  Tensor push(Node node);
  /// Tensor for node `id`: attached to this graph, or a detached view of its value.
  Tensor handle(std::int64_t id, bool attached);
  std::vector<Tensor> backward_rule(std::int64_t id, const Tensor& upstream, bool create,
                                    bool want_lhs, bool want_rhs);

  std::vector<Node> nodes_;
  std::map<std::string, std::int64_t> inputs_;
  std::map<std::string, std::int64_t> outputs_;
  std::vector<std::string> warnings_;
};

// Elementwise binary ops: equal shapes, or one operand with a single element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor shift(const Tensor& a, double offset);

/// [n, k] x [k, m] -> [n, m].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Single-element -> any shape; [1, m] -> [n, m]; [n, 1] -> [n, m].
Tensor broadcast_to(const Tensor& a, Shape shape);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
/// Zero derivative everywhere; sign(0) = 0.
Tensor sign(const Tensor& a);
/// Gradient passes strictly inside (lo, hi).
Tensor clip(const Tensor& a, double lo, double hi);

/// Full reductions to a scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [n, m] -> [1, m].
Tensor sum_rows(const Tensor& a);
/// [n, m] -> [n, 1].
Tensor sum_cols(const Tensor& a);
/// Row-wise maximum, [n, m] -> [n, 1]; gradient routed to the first argmax.
Tensor max_cols(const Tensor& a);

/// Identity forward, zero gradient. Recorded on the tape so replay sees it.
Tensor stop_gradient(const Tensor& a);

/// Row-wise softmax / log-softmax of an [n, m] matrix.
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

/// Max over coordinates of |analytic - central difference| / (|analytic| + 1e-8)
/// for d(output)/d(wrt). `wrt` must be an `input` node of `graph`; the
/// numerical side replays the tape, so it needs no extra user code.
double finite_diff_check(Graph& graph, const Tensor& output, const Tensor& wrt,
                         double step);

}  // namespace rmaml::ad
