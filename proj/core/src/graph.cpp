#include <algorithm>
#include <limits>

#include "rmaml/autodiff.hpp"
#include "rmaml/error.hpp"

namespace rmaml::ad {

Tensor::Tensor(Array value) : value_(std::make_shared<const Array>(std::move(value))) {}

Tensor Tensor::detach() const { return Tensor(value_, nullptr, -1); }

Tensor Graph::push(Node node) {
  const auto id = static_cast<std::int64_t>(nodes_.size());
  auto value = node.value;
  nodes_.push_back(std::move(node));
  return Tensor(std::move(value), this, id);
}

Tensor Graph::variable(Array value) {
  Node n;
  n.op = Op::Input;
  n.value = std::make_shared<const Array>(std::move(value));
  return push(std::move(n));
}

Tensor Graph::input(const std::string& name, Array value) {
  if (inputs_.contains(name)) throw ConfigError("duplicate graph input '" + name + "'");
  Tensor t = variable(std::move(value));
  inputs_[name] = t.node();
  return t;
}

Tensor Graph::constant(Array value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::make_shared<const Array>(std::move(value));
  return push(std::move(n));
}

Tensor Graph::adopt(const Tensor& t) {
  if (!t.valid()) throw Error("adopt: invalid tensor");
  if (t.graph_ == this) return t;
  if (t.graph_ != nullptr) throw Error("adopt: tensor belongs to another graph");
  Node n;
  n.op = Op::Constant;
  n.value = t.value_;
  return push(std::move(n));
}

void Graph::set_output(const std::string& name, const Tensor& t) {
  if (t.graph_ != this) throw Error("set_output: tensor '" + name + "' is not part of this graph");
  outputs_[name] = t.node();
}

Tensor Graph::handle(std::int64_t id, bool attached) {
  const auto& value = nodes_[static_cast<std::size_t>(id)].value;
  return attached ? Tensor(value, this, id) : Tensor(value, nullptr, -1);
}

namespace {

[[noreturn]] void rethrow_at(std::size_t id, Op op, const ShapeError& e) {
  throw ShapeError("node " + std::to_string(id) + " (" + op_name(op) + "): " + e.what());
}

}  // namespace

Tensor Graph::record(Op op, const Tensor& lhs, const Tensor& rhs, Attrs attrs) {
  const Tensor a = adopt(lhs);
  const Tensor b = adopt(rhs);
  Node n;
  n.op = op;
  n.lhs = a.node();
  n.rhs = b.node();
  try {
    n.value = std::make_shared<const Array>(evaluate(op, &a.value(), &b.value(), attrs));
  } catch (const ShapeError& e) {
    rethrow_at(nodes_.size(), op, e);
  }
  n.attrs = std::move(attrs);
  return push(std::move(n));
}

Tensor Graph::record(Op op, const Tensor& operand, Attrs attrs) {
  const Tensor a = adopt(operand);
  Node n;
  n.op = op;
  n.lhs = a.node();
  try {
    n.value = std::make_shared<const Array>(evaluate(op, &a.value(), nullptr, attrs));
  } catch (const ShapeError& e) {
    rethrow_at(nodes_.size(), op, e);
  }
  n.attrs = std::move(attrs);
  return push(std::move(n));
}

namespace {

Array mask_of(const Array& a, bool (*keep)(double, double, double), double lo, double hi) {
  std::vector<double> m(a.size());
  const auto v = a.values();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = keep(v[i], lo, hi) ? 1.0 : 0.0;
  return Array(a.shape(), std::move(m));
}

Array argmax_mask(const Array& a) {
  const std::size_t n = a.rows();
  const std::size_t m = a.cols();
  std::vector<double> mask(n * m, 0.0);
  const auto v = a.values();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m; ++j) {
      if (v[i * m + j] > v[i * m + best]) best = j;
    }
    mask[i * m + best] = 1.0;
  }
  return Array(a.shape(), std::move(mask));
}

Tensor reduce_to(const Tensor& g, const Shape& shape) {
  if (g.shape() == shape) return g;
  if (numel(shape) == 1) return reshape(sum(g), shape);
  if (shape.size() == 2 && g.shape().size() == 2) {
    if (shape[0] == 1 && shape[1] == g.shape()[1]) return sum_rows(g);
    if (shape[1] == 1 && shape[0] == g.shape()[0]) return sum_cols(g);
  }
  throw ShapeError("cannot reduce gradient " + to_string(g.shape()) + " to " + to_string(shape));
}

}  // namespace

// Vector-Jacobian products. Written with the public ops so that, in
// create-graph mode, the derivative computation lands on the tape.
std::vector<Tensor> Graph::backward_rule(std::int64_t id, const Tensor& g, bool create,
                                         bool want_lhs, bool want_rhs) {
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  const Op op = node.op;
  const std::int64_t li = node.lhs;
  const std::int64_t ri = node.rhs;
  const Attrs attrs = node.attrs;
  auto lhs = [&] { return handle(li, create); };
  auto rhs = [&] { return handle(ri, create); };
  auto out = [&] { return handle(id, create); };
  const Array& lhs_value = *nodes_[static_cast<std::size_t>(li)].value;

  Tensor dl;
  Tensor dr;
  switch (op) {
    case Op::Constant:
    case Op::Input:
    case Op::Sign:
    case Op::StopGradient:
      break;
    case Op::Add:
      if (want_lhs) dl = g;
      if (want_rhs) dr = g;
      break;
    case Op::Sub:
      if (want_lhs) dl = g;
      if (want_rhs) dr = neg(g);
      break;
    case Op::Mul:
      if (want_lhs) dl = g * rhs();
      if (want_rhs) dr = g * lhs();
      break;
    case Op::Div:
      if (want_lhs) dl = g / rhs();
      if (want_rhs) dr = neg(g * out() / rhs());
      break;
    case Op::Neg:
      dl = neg(g);
      break;
    case Op::Scale:
      dl = scale(g, attrs.a);
      break;
    case Op::Shift:
      dl = g;
      break;
    case Op::MatMul:
      if (want_lhs) dl = matmul(g, transpose(rhs()));
      if (want_rhs) dr = matmul(transpose(lhs()), g);
      break;
    case Op::Transpose:
      dl = transpose(g);
      break;
    case Op::Reshape:
      dl = reshape(g, lhs_value.shape());
      break;
    case Op::BroadcastTo:
      dl = reduce_to(g, lhs_value.shape());
      break;
    case Op::Relu:
      dl = g * Tensor(mask_of(lhs_value, [](double x, double, double) { return x > 0.0; }, 0, 0));
      break;
    case Op::Tanh: {
      const Tensor y = out();
      dl = g * shift(neg(y * y), 1.0);
      break;
    }
    case Op::Exp:
      dl = g * out();
      break;
    case Op::Log:
      dl = g / lhs();
      break;
    case Op::Clip:
      dl = g * Tensor(mask_of(
                   lhs_value, [](double x, double lo, double hi) { return x > lo && x < hi; },
                   attrs.a, attrs.b));
      break;
    case Op::Sum:
      dl = broadcast_to(g, lhs_value.shape());
      break;
    case Op::Mean:
      dl = scale(broadcast_to(g, lhs_value.shape()), 1.0 / static_cast<double>(lhs_value.size()));
      break;
    case Op::SumRows:
    case Op::SumCols:
      dl = broadcast_to(g, lhs_value.shape());
      break;
    case Op::MaxCols:
      dl = broadcast_to(g, lhs_value.shape()) * Tensor(argmax_mask(lhs_value));
      break;
  }
  return {dl, dr};
}

std::vector<Tensor> Graph::grad(const Tensor& output, std::span<const Tensor> wrt,
                                bool create_graph) {
  if (!output.valid() || output.graph_ != this) {
    throw Error("grad: output is not a node of this graph");
  }
  if (output.size() != 1) {
    throw ShapeError("grad: output must be a scalar, got shape " + to_string(output.shape()));
  }
  const std::int64_t out_id = output.node_;
  const auto count = static_cast<std::size_t>(out_id) + 1;

  std::vector<char> is_wrt(count, 0);
  std::int64_t lowest = out_id + 1;
  for (const Tensor& w : wrt) {
    if (w.graph_ == this && w.node_ <= out_id) {
      is_wrt[static_cast<std::size_t>(w.node_)] = 1;
      lowest = std::min(lowest, w.node_);
    }
  }

  // need[i]: node i is a wrt tensor or depends on one.
  std::vector<char> need(count, 0);
  for (auto i = static_cast<std::size_t>(std::max<std::int64_t>(lowest, 0)); i < count; ++i) {
    const Node& n = nodes_[i];
    need[i] = is_wrt[i] || (n.lhs >= lowest && need[static_cast<std::size_t>(n.lhs)]) ||
              (n.rhs >= lowest && need[static_cast<std::size_t>(n.rhs)]);
  }

  std::vector<Tensor> grads(count);
  if (lowest <= out_id && need[count - 1]) {
    grads[count - 1] = Tensor(Array::filled(output.shape(), 1.0));
    for (std::int64_t id = out_id; id >= lowest; --id) {
      const auto i = static_cast<std::size_t>(id);
      if (!need[i] || !grads[i].valid()) continue;
      const Node& n = nodes_[i];
      if (n.op == Op::Input || n.op == Op::Constant) continue;
      const bool want_lhs = n.lhs >= lowest && need[static_cast<std::size_t>(n.lhs)];
      const bool want_rhs = n.rhs >= lowest && need[static_cast<std::size_t>(n.rhs)];
      if (!want_lhs && !want_rhs) continue;
      const std::int64_t lhs_id = n.lhs;
      const std::int64_t rhs_id = n.rhs;
      auto parts = backward_rule(id, grads[i], create_graph, want_lhs, want_rhs);
      if (!create_graph) grads[i] = Tensor();  // free memory early
      auto accumulate = [&](std::int64_t parent, const Tensor& part) {
        if (!part.valid()) return;
        Tensor& slot = grads[static_cast<std::size_t>(parent)];
        slot = slot.valid() ? add(slot, part) : part;
      };
      if (want_lhs) accumulate(lhs_id, parts[0]);
      if (want_rhs) accumulate(rhs_id, parts[1]);
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    const Tensor& w = wrt[k];
    if (!w.valid()) throw Error("grad: invalid wrt tensor");
    const bool mine = w.graph_ == this && w.node_ <= out_id;
    Tensor gk = mine ? grads[static_cast<std::size_t>(w.node_)] : Tensor();
    if (!gk.valid()) {
      warnings_.push_back("grad: output does not depend on wrt[" + std::to_string(k) +
                          "]; returning zeros");
      gk = Tensor(Array::zeros(w.shape()));
    }
    if (gk.shape() != w.shape()) gk = reshape(gk, w.shape());
    result.push_back(create_graph ? adopt(gk) : gk.detach());
  }
  return result;
}

std::vector<Array> Graph::replay(const std::map<std::int64_t, Array>& bindings,
                                 std::span<const Tensor> outputs) const {
  std::int64_t last = -1;
  for (const Tensor& t : outputs) {
    if (t.graph_ != this) throw Error("replay: output is not a node of this graph");
    last = std::max(last, t.node_);
  }
  for (const auto& [id, value] : bindings) {
    if (id < 0 || id >= static_cast<std::int64_t>(nodes_.size()) ||
        nodes_[static_cast<std::size_t>(id)].op != Op::Input) {
      throw Error("replay: node " + std::to_string(id) + " is not an input");
    }
  }

  std::vector<std::shared_ptr<const Array>> values(static_cast<std::size_t>(last + 1));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::Constant) {
      values[i] = n.value;
    } else if (n.op == Op::Input) {
      auto it = bindings.find(static_cast<std::int64_t>(i));
      values[i] = it == bindings.end() ? n.value : std::make_shared<const Array>(it->second);
    } else {
      const Array* a = values[static_cast<std::size_t>(n.lhs)].get();
      const Array* b = n.rhs >= 0 ? values[static_cast<std::size_t>(n.rhs)].get() : nullptr;
      try {
        values[i] = std::make_shared<const Array>(evaluate(n.op, a, b, n.attrs));
      } catch (const ShapeError& e) {
        rethrow_at(i, n.op, e);
      }
    }
  }

  std::vector<Array> result;
  result.reserve(outputs.size());
  for (const Tensor& t : outputs) result.push_back(*values[static_cast<std::size_t>(t.node_)]);
  return result;
}

std::map<std::string, Array> Graph::forward(const std::map<std::string, Array>& inputs) const {
  std::map<std::int64_t, Array> bindings;
  for (const auto& [name, value] : inputs) {
    auto it = inputs_.find(name);
    if (it == inputs_.end()) throw ConfigError("forward: unknown input '" + name + "'");
    bindings.emplace(it->second, value);
  }
  for (const auto& [name, id] : inputs_) {
    if (!inputs.contains(name)) throw ConfigError("forward: input '" + name + "' is not bound");
  }

  std::vector<Tensor> outs;
  std::vector<std::string> names;
  for (const auto& [name, id] : outputs_) {
    names.push_back(name);
    outs.push_back(Tensor(nodes_[static_cast<std::size_t>(id)].value, const_cast<Graph*>(this), id));
  }
  auto values = replay(bindings, outs);
  std::map<std::string, Array> result;
  for (std::size_t i = 0; i < names.size(); ++i) result.emplace(names[i], std::move(values[i]));
  return result;
}

}  // namespace rmaml::ad
