#pragma once

// l-inf bounded input perturbations. Budgets are in pixel units (inputs live
// in [0, 255]), so "epsilon = 2" means two grey levels.

#include <cstdint>
#include <functional>
#include <string>

#include "rmaml/autodiff.hpp"

namespace rmaml {

enum class AttackKind : std::uint8_t { PGD = 0, FGSM = 1 };

const char* to_string(AttackKind k);
AttackKind parse_attack_kind(const std::string& name);

struct AttackConfig {
  AttackKind kind = AttackKind::PGD;
  double epsilon = 2.0;
  std::size_t steps = 10;
  /// Non-positive means "use the default": 2.5 * epsilon / steps for PGD and
  /// 1.25 * epsilon for FGSM.
  double step_size = 0.0;
  bool random_init = true;
  /// Multiplies the step size after every PGD iteration. 1 is plain PGD.
  double step_decay = 1.0;
  /// Independent random starts; the start with the highest final loss wins.
  std::size_t restarts = 1;
  /// FGSM only: take delta0 + epsilon * grad (no sign) before projecting.
  bool fgsm_raw_gradient = false;

  /// Throws ConfigError naming the field.
  void validate() const;
  double effective_step_size() const;

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

/// Scalar loss of the perturbed input. The argument is a differentiable leaf;
/// the function must build its graph from it.
using AttackLoss = std::function<ad::Tensor(const ad::Tensor& x_adv)>;

/// Coordinate-wise feasible interval for delta: the epsilon box intersected
/// with the pixel range shifted by -x.
void project(ad::Array& delta, const ad::Array& x, double epsilon);

/// Multi-step sign ascent from a (optionally random) start, projected after
/// every step. Returns delta, not x + delta.
ad::Array pgd_attack(const AttackLoss& loss, const ad::Array& x, const AttackConfig& cfg,
                     std::uint64_t seed);

/// One gradient evaluation at x + delta0, then a single projected step.
ad::Array fgsm_attack(const AttackLoss& loss, const ad::Array& x, const AttackConfig& cfg,
                      std::uint64_t seed);

/// Dispatches on cfg.kind.
ad::Array attack(const AttackLoss& loss, const ad::Array& x, const AttackConfig& cfg,
                 std::uint64_t seed);

}  // namespace rmaml
