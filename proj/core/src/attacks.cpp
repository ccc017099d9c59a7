#include "rmaml/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "rmaml/data.hpp"
#include "rmaml/error.hpp"
#include "rmaml/rng.hpp"

namespace rmaml {

using ad::Array;
using ad::Tensor;

const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::PGD: return "pgd";
    case AttackKind::FGSM: return "fgsm";
  }
  return "unknown";
}

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "pgd") return AttackKind::PGD;
  if (name == "fgsm") return AttackKind::FGSM;
  throw ConfigError("unknown attack '" + name + "' (expected pgd or fgsm)", "attack.kind");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("must be a finite value >= 0", "attack.epsilon");
  }
  if (kind == AttackKind::FGSM && steps != 1) throw ConfigError("FGSM takes exactly 1 step", "attack.steps");
  if (!std::isfinite(step_size)) throw ConfigError("must be finite", "attack.step_size");
  if (!(step_decay > 0.0 && step_decay <= 1.0)) throw ConfigError("must be in (0, 1]", "attack.step_decay");
  if (restarts == 0) throw ConfigError("must be at least 1", "attack.restarts");
}

double AttackConfig::effective_step_size() const {
  if (step_size > 0.0) return step_size;
  if (kind == AttackKind::FGSM) return 1.25 * epsilon;
  return steps == 0 ? 0.0 : 2.5 * epsilon / static_cast<double>(steps);
}

void project(Array& delta, const Array& x, double epsilon) {
  if (delta.shape() != x.shape()) {
    throw ShapeError("project: delta " + ad::to_string(delta.shape()) + " vs x " +
                     ad::to_string(x.shape()));
  }
  auto d = delta.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double lo = std::max(-epsilon, kPixelMin - xv[i]);
    const double hi = std::min(epsilon, kPixelMax - xv[i]);
    d[i] = std::clamp(d[i], lo, hi);
  }
}

namespace {

Array plus(const Array& x, const Array& delta) {
  Array out = x;
  auto o = out.values();
  auto d = delta.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += d[i];
  return out;
}

struct Probe {
  double loss;
  Array grad;
};

Probe probe(const AttackLoss& loss, const Array& x_adv, const char* who, std::size_t step) {
  ad::Graph g;
  Tensor xa = g.variable(x_adv);
  Tensor l = loss(xa);
  if (ad::numel(l.shape()) != 1) {
    throw ShapeError(std::string(who) + ": attack loss must be scalar, got " + ad::to_string(l.shape()));
  }
  std::vector<Tensor> wrt = {xa};
  Array grad = g.grad(l, wrt)[0].value();
  if (!std::isfinite(l.item()) || !grad.all_finite()) {
    throw NumericError(std::string(who) + ": non-finite loss or gradient at step " +
                       std::to_string(step));
  }
  return {l.item(), std::move(grad)};
}

double loss_at(const AttackLoss& loss, const Array& x_adv) {
  ad::Graph g;
  return loss(g.variable(x_adv)).item();
}

Array random_start(const Array& x, const AttackConfig& cfg, Rng& rng) {
  Array delta = Array::zeros(x.shape());
  if (cfg.random_init && cfg.epsilon > 0.0) {
    for (double& v : delta.values()) v = rng.uniform(-cfg.epsilon, cfg.epsilon);
  }
  project(delta, x, cfg.epsilon);
  return delta;
}

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Array pgd_once(const AttackLoss& loss, const Array& x, const AttackConfig& cfg, Rng& rng) {
  Array delta = random_start(x, cfg, rng);
  double step = cfg.effective_step_size();
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const Probe p = probe(loss, plus(x, delta), "pgd", k);
    auto d = delta.values();
    auto gv = p.grad.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += step * sgn(gv[i]);
    project(delta, x, cfg.epsilon);
    step *= cfg.step_decay;
  }
  return delta;
}

}  // namespace

Array pgd_attack(const AttackLoss& loss, const Array& x, const AttackConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.kind != AttackKind::PGD) throw ConfigError("pgd_attack called with a non-PGD config", "attack.kind");
  Rng rng(seed);
  Array best = pgd_once(loss, x, cfg, rng);
  if (cfg.restarts == 1) return best;
  double best_loss = loss_at(loss, plus(x, best));
  for (std::size_t r = 1; r < cfg.restarts; ++r) {
    Array delta = pgd_once(loss, x, cfg, rng);
    const double l = loss_at(loss, plus(x, delta));
    if (l > best_loss) {
      best_loss = l;
      best = std::move(delta);
    }
  }
  return best;
}

Array fgsm_attack(const AttackLoss& loss, const Array& x, const AttackConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.kind != AttackKind::FGSM) throw ConfigError("fgsm_attack called with a non-FGSM config", "attack.kind");
  Rng rng(seed);
  Array delta = random_start(x, cfg, rng);
  const Probe p = probe(loss, plus(x, delta), "fgsm", 0);
  auto d = delta.values();
  auto gv = p.grad.values();
  if (cfg.fgsm_raw_gradient) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += cfg.epsilon * gv[i];
  } else {
    const double step = cfg.effective_step_size();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += step * sgn(gv[i]);
  }
  project(delta, x, cfg.epsilon);
  return delta;
}

Array attack(const AttackLoss& loss, const Array& x, const AttackConfig& cfg, std::uint64_t seed) {
  return cfg.kind == AttackKind::FGSM ? fgsm_attack(loss, x, cfg, seed) : pgd_attack(loss, x, cfg, seed);
}

}  // namespace rmaml
