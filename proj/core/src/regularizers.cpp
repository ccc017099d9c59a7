#include "rmaml/regularizers.hpp"

#include "rmaml/error.hpp"

namespace rmaml {

using ad::Array;
using ad::Tensor;

const char* to_string(RobustKind k) {
  switch (k) {
    case RobustKind::AT: return "at";
    case RobustKind::TRADES: return "trades";
  }
  return "unknown";
}

RobustKind parse_robust_kind(const std::string& name) {
  if (name == "at") return RobustKind::AT;
  if (name == "trades") return RobustKind::TRADES;
  throw ConfigError("unknown regularizer '" + name + "' (expected at or trades)", "robust.kind");
}

void RobustSpec::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("must be >= 0", "robust.lambda");
  attack.validate();
}

ParamTensors detached(const ParamTensors& params) {
  ParamTensors out;
  out.reserve(params.size());
  for (const Tensor& p : params) out.push_back(p.detach());
  return out;
}

namespace {

Array add_delta(Array x, const Array& delta) {
  auto v = x.values();
  auto d = delta.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += d[i];
  return x;
}

Tensor divergence(const Tensor& log_p, const Tensor& log_q, bool kl) {
  const double n = static_cast<double>(log_p.shape()[0]);
  const Tensor p = ad::exp(log_p);
  const Tensor inner = kl ? p * (log_p - log_q) : -(p * log_q);
  return ad::scale(ad::sum(inner), 1.0 / n);
}

}  // namespace

RobustTerm at_regularizer(const ArchSpec& arch, const ParamTensors& params, const LabeledBatch& batch,
                          const RobustSpec& spec, std::uint64_t seed) {
  if (spec.kind != RobustKind::AT) throw ConfigError("at_regularizer needs an AT spec", "robust.kind");
  const ParamTensors frozen = detached(params);
  const std::vector<int>& y = batch.y;
  const AttackLoss loss = [&](const Tensor& xa) { return cross_entropy(logits(arch, frozen, xa), y); };
  Array x_adv = add_delta(batch.x, attack(loss, batch.x, spec.attack, seed));
  Tensor value = cross_entropy(logits(arch, params, Tensor(x_adv)), y);
  return {std::move(value), std::move(x_adv)};
}

RobustTerm trades_regularizer(const ArchSpec& arch, const ParamTensors& params, const Array& x,
                              const RobustSpec& spec, std::uint64_t seed) {
  if (spec.kind != RobustKind::TRADES) throw ConfigError("trades_regularizer needs a TRADES spec", "robust.kind");
  const ParamTensors frozen = detached(params);
  const Tensor clean_frozen = ad::log_softmax(logits(arch, frozen, Tensor(x)));
  const AttackLoss loss = [&](const Tensor& xa) {
    return divergence(clean_frozen, ad::log_softmax(logits(arch, frozen, xa)), spec.kl_divergence);
  };
  Array x_adv = add_delta(x, attack(loss, x, spec.attack, seed));
  const Tensor log_p = ad::log_softmax(logits(arch, params, Tensor(x)));
  const Tensor log_q = ad::log_softmax(logits(arch, params, Tensor(x_adv)));
  return {divergence(log_p, log_q, spec.kl_divergence), std::move(x_adv)};
}

RobustTerm regularizer(const ArchSpec& arch, const ParamTensors& params, const LabeledBatch& labeled,
                       const std::optional<Array>& unlabeled, const RobustSpec& spec, std::uint64_t seed) {
  if (spec.kind == RobustKind::AT) {
    if (unlabeled) throw ConfigError("unlabeled data needs the TRADES regularizer", "robust.kind");
    return at_regularizer(arch, params, labeled, spec, seed);
  }
  const Array x = unlabeled ? concat_rows(labeled.x, *unlabeled) : labeled.x;
  return trades_regularizer(arch, params, x, spec, seed);
}

Tensor robust_objective(const ArchSpec& arch, const ParamTensors& params, const LabeledBatch& labeled,
                        const std::optional<Array>& unlabeled, const RobustSpec& spec, std::uint64_t seed) {
  spec.validate();
  Tensor r = regularizer(arch, params, labeled, unlabeled, spec, seed).value;
  if (spec.lambda == 0.0) return r;
  return ad::scale(cross_entropy(logits(arch, params, Tensor(labeled.x)), labeled.y), spec.lambda) + r;
}

}  // namespace rmaml
