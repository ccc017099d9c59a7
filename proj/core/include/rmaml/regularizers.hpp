#pragma once

// Robustness regularizers evaluated at adversarial inputs. The adversarial
// point is found with the current parameter values and then frozen, so the
// returned value differentiates w.r.t. parameters only.

#include <cstdint>
#include <optional>
#include <string>

#include "rmaml/attacks.hpp"
#include "rmaml/data.hpp"
#include "rmaml/models.hpp"

namespace rmaml {

enum class RobustKind : std::uint8_t { AT = 0, TRADES = 1 };

const char* to_string(RobustKind k);
RobustKind parse_robust_kind(const std::string& name);

struct RobustSpec {
  RobustKind kind = RobustKind::AT;
  /// Weight of the clean loss inside robust_objective (0 in the AT presets).
  double lambda = 0.0;
  AttackConfig attack;
  /// TRADES only: KL(p_clean || p_adv) when set, otherwise the cross-entropy
  /// -sum p_clean log p_adv (KL plus the entropy of p_clean).
  bool kl_divergence = true;

  void validate() const;

  friend bool operator==(const RobustSpec&, const RobustSpec&) = default;
};

struct RobustTerm {
  ad::Tensor value;
  /// The frozen adversarial inputs x + delta*.
  ad::Array adversarial;
};

/// Detached copies of the parameter tensors, for building attack graphs.
ParamTensors detached(const ParamTensors& params);

/// Mean cross-entropy at x + delta*, delta* from the configured attack on
/// that same loss.
RobustTerm at_regularizer(const ArchSpec& arch, const ParamTensors& params, const LabeledBatch& batch,
                          const RobustSpec& spec, std::uint64_t seed);

/// Mean divergence between clean and adversarial prediction distributions.
/// Uses no labels.
RobustTerm trades_regularizer(const ArchSpec& arch, const ParamTensors& params, const ad::Array& x,
                              const RobustSpec& spec, std::uint64_t seed);

/// R over the labeled batch, plus the unlabeled rows for TRADES.
RobustTerm regularizer(const ArchSpec& arch, const ParamTensors& params, const LabeledBatch& labeled,
                       const std::optional<ad::Array>& unlabeled, const RobustSpec& spec,
                       std::uint64_t seed);

/// lambda * clean cross-entropy + R. Unlabeled data with AT is a ConfigError.
ad::Tensor robust_objective(const ArchSpec& arch, const ParamTensors& params, const LabeledBatch& labeled,
                            const std::optional<ad::Array>& unlabeled, const RobustSpec& spec,
                            std::uint64_t seed);

}  // namespace rmaml
