#include "rmaml/models.hpp"

#include <cmath>

#include "rmaml/data.hpp"
#include "rmaml/error.hpp"
#include "rmaml/rng.hpp"

namespace rmaml {

using ad::Array;
using ad::Tensor;

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
  }
  return "unknown";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "linear") return Activation::Linear;
  throw ConfigError("unknown activation '" + name + "' (expected relu, tanh or linear)",
                    "activation");
}

void ArchSpec::validate() const {
  if (height == 0 || width == 0 || channels == 0) throw ConfigError("input dims must be positive", "input_dims");
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("hidden widths must be positive", "hidden");
  }
  if (embed_dim == 0) throw ConfigError("must be positive", "embed_dim");
  if (n_classes < 2) throw ConfigError("need at least two classes", "n_classes");
}

std::vector<ParamSlot> make_layout(const ArchSpec& spec) {
  spec.validate();
  std::vector<ParamSlot> layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, ad::Shape shape, Block block) {
    const std::size_t n = ad::numel(shape);
    layout.push_back({std::move(name), std::move(shape), block, offset, n});
    offset += n;
  };
  std::vector<std::size_t> widths = spec.hidden;
  widths.push_back(spec.embed_dim);
  std::size_t fan_in = spec.input_size();
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string prefix = "rep." + std::to_string(i);
    add(prefix + ".weight", {fan_in, widths[i]}, Block::Representation);
    add(prefix + ".bias", {1, widths[i]}, Block::Representation);
    fan_in = widths[i];
  }
  add("head.weight", {spec.embed_dim, spec.n_classes}, Block::Head);
  add("head.bias", {1, spec.n_classes}, Block::Head);
  return layout;
}

MetaModel::MetaModel(ArchSpec spec, std::vector<double> params)
    : spec_(std::move(spec)), layout_(make_layout(spec_)), params_(std::move(params)) {
  const ParamSlot& last = layout_.back();
  if (last.offset + last.size != params_.size()) {
    throw ConfigError("layout needs " + std::to_string(last.offset + last.size) +
                          " parameters, got " + std::to_string(params_.size()),
                      "params");
  }
}

std::vector<Array> MetaModel::unpack() const {
  std::vector<Array> out;
  out.reserve(layout_.size());
  for (const ParamSlot& slot : layout_) {
    const auto first = params_.begin() + static_cast<std::ptrdiff_t>(slot.offset);
    out.emplace_back(slot.shape,
                     std::vector<double>(first, first + static_cast<std::ptrdiff_t>(slot.size)));
  }
  return out;
}

MetaModel MetaModel::pack(const ArchSpec& spec, std::span<const Array> slots) {
  const auto layout = make_layout(spec);
  if (slots.size() != layout.size()) throw ConfigError("slot count does not match layout", "params");
  std::vector<double> flat;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].shape() != layout[i].shape) {
      throw ShapeError("slot " + layout[i].name + " expects " + ad::to_string(layout[i].shape) +
                       ", got " + ad::to_string(slots[i].shape()));
    }
    flat.insert(flat.end(), slots[i].values().begin(), slots[i].values().end());
  }
  return MetaModel(spec, std::move(flat));
}

MetaModel MetaModel::pack(const ArchSpec& spec, std::span<const Tensor> slots) {
  std::vector<Array> arrays;
  arrays.reserve(slots.size());
  for (const Tensor& t : slots) arrays.push_back(t.value());
  return pack(spec, std::span<const Array>(arrays));
}

MetaModel MetaModel::with_params(std::vector<double> params) const {
  return MetaModel(spec_, std::move(params));
}

MetaModel init_model(const ArchSpec& spec, std::uint64_t seed) {
  const auto layout = make_layout(spec);
  Rng rng(derive_seed(seed, {0x1A17}));
  std::vector<double> params;
  params.reserve(layout.back().offset + layout.back().size);
  for (std::size_t i = 0; i < layout.size(); i += 2) {
    // Each weight slot is followed by its bias; both use the weight's fan-in.
    const double s = 1.0 / std::sqrt(static_cast<double>(layout[i].shape[0]));
    for (std::size_t k = 0; k < layout[i].size + layout[i + 1].size; ++k) {
      params.push_back(rng.uniform(-s, s));
    }
  }
  return MetaModel(spec, std::move(params));
}

ParamTensors bind(ad::Graph& graph, const MetaModel& model) {
  ParamTensors out;
  for (Array& a : model.unpack()) out.push_back(graph.variable(std::move(a)));
  return out;
}

ParamTensors constants(const MetaModel& model) {
  ParamTensors out;
  for (Array& a : model.unpack()) out.emplace_back(std::move(a));
  return out;
}

namespace {

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  const Tensor z = ad::matmul(x, w);
  return z + ad::broadcast_to(b, z.shape());
}

Tensor activate(Activation a, const Tensor& z) {
  switch (a) {
    case Activation::Relu: return ad::relu(z);
    case Activation::Tanh: return ad::tanh(z);
    case Activation::Linear: return z;
  }
  return z;
}

void check_params(const ArchSpec& spec, const ParamTensors& params) {
  if (params.size() != 2 * (spec.hidden.size() + 2)) {
    throw ShapeError("parameter tensor count " + std::to_string(params.size()) +
                     " does not match architecture");
  }
}

}  // namespace

Tensor representation(const ArchSpec& spec, const ParamTensors& params, const Tensor& x) {
  check_params(spec, params);
  if (x.shape().size() != 2 || x.shape()[1] != spec.input_size()) {
    throw ShapeError("input batch must be [n, " + std::to_string(spec.input_size()) + "], got " +
                     ad::to_string(x.shape()));
  }
  Tensor h = ad::scale(x, 1.0 / kPixelMax);
  const std::size_t layers = spec.hidden.size() + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    h = activate(spec.activation, dense(h, params[2 * i], params[2 * i + 1]));
  }
  return h;
}

Tensor head(const ArchSpec& spec, const ParamTensors& params, const Tensor& reps) {
  check_params(spec, params);
  const std::size_t k = params.size() - 2;
  return dense(reps, params[k], params[k + 1]);
}

Tensor logits(const ArchSpec& spec, const ParamTensors& params, const Tensor& x) {
  return head(spec, params, representation(spec, params, x));
}

Tensor logits(const MetaModel& model, const Array& x) {
  return logits(model.arch(), constants(model), Tensor(x));
}

Tensor representation(const MetaModel& model, const Array& x) {
  return representation(model.arch(), constants(model), Tensor(x));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const auto& shape = logits.shape();
  if (shape.size() != 2 || shape[0] != labels.size()) {
    throw ShapeError("cross_entropy: logits " + ad::to_string(shape) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = shape[0];
  const std::size_t c = shape[1];
  Array onehot = Array::zeros({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ConfigError("label " + std::to_string(labels[i]) + " outside [0, " +
                            std::to_string(c) + ")",
                        "labels");
    }
    onehot[i * c + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return ad::scale(ad::sum(ad::log_softmax(logits) * Tensor(std::move(onehot))),
                   -1.0 / static_cast<double>(n));
}

std::vector<int> predict(const Array& logits) {
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (logits[i * c + j] > logits[i * c + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

Array concat_rows(const Array& top, const Array& bottom) {
  if (top.cols() != bottom.cols()) {
    throw ShapeError("concat_rows: column counts " + std::to_string(top.cols()) + " and " +
                     std::to_string(bottom.cols()) + " differ");
  }
  std::vector<double> v(top.values().begin(), top.values().end());
  v.insert(v.end(), bottom.values().begin(), bottom.values().end());
  return Array({top.rows() + bottom.rows(), top.cols()}, std::move(v));
}

}  // namespace rmaml
