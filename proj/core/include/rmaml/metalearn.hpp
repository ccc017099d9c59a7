#pragma once

// Bi-level meta-learning: K-step fine-tuning per task, a meta-objective on
// the fine-tuned models (clean loss, robust regularizer, contrastive term),
// and the meta-update with separate step sizes for clean and robust terms.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rmaml/contrastive.hpp"
#include "rmaml/models.hpp"
#include "rmaml/regularizers.hpp"
#include "rmaml/report.hpp"
#include "rmaml/tasks.hpp"

namespace rmaml {

enum class FinetuneScope : std::uint8_t { Full = 0, HeadOnly = 1 };
enum class FinetuneMode : std::uint8_t { Standard = 0, Adversarial = 1 };

const char* to_string(FinetuneScope s);
const char* to_string(FinetuneMode m);
FinetuneScope parse_scope(const std::string& name);
FinetuneMode parse_ft_mode(const std::string& name);

/// gamma_out value selecting the robust term alone as meta-objective.
inline constexpr double kGammaInfinity = std::numeric_limits<double>::infinity();

struct ContrastiveConfig {
  double tau = 0.5;
  bool normalize = true;
  TransformConfig transforms;
  /// Cutout / rotation fill, normally the training set's mean pixel.
  double fill = 127.5;

  friend bool operator==(const ContrastiveConfig&, const ContrastiveConfig&) = default;
};

struct MetaConfig {
  double gamma_in = 0.0;
  /// kGammaInfinity drops the clean term from the meta-objective.
  double gamma_out = 0.0;
  double gamma_cl = 0.0;
  std::size_t K = 5;
  double alpha = 0.01;
  double beta1 = 0.001;
  double beta2 = 0.001;
  FinetuneScope finetune_scope = FinetuneScope::Full;
  RobustSpec robust;
  ContrastiveConfig contrastive;
  /// Feed each episode's unlabeled pool to the (TRADES) robust term.
  bool use_unlabeled = false;
  std::size_t tasks_per_batch = 4;
  std::size_t epochs = 6;
  std::size_t batches_per_epoch = 100;
  std::uint64_t seed = 0;
  /// Treat inner-loop gradients as constants (first-order approximation).
  bool first_order = false;
  /// Adam moments on the clean and robust update directions separately.
  bool adam = false;
  std::size_t threads = 1;

  bool adversarial_querying() const { return std::isinf(gamma_out); }
  bool robust_active() const { return gamma_out != 0.0; }
  /// Throws ConfigError naming the field.
  void validate() const;

  friend bool operator==(const MetaConfig&, const MetaConfig&) = default;
};

struct FineTuneResult {
  ParamTensors adapted;
  /// Loss before each of the K steps.
  std::vector<double> inner_losses;
};

/// K gradient steps on cross-entropy + gamma_in * R over the support set,
/// updating only the slots in `scope`. With track_grad the adapted tensors
/// stay on w's graph (second order unless cfg.first_order); otherwise they
/// are detached and w may be detached too.
FineTuneResult inner_finetune(const ArchSpec& arch, const ParamTensors& w, const LabeledBatch& support,
                              const MetaConfig& cfg, FinetuneScope scope, double gamma_in, bool track_grad,
                              std::uint64_t seed);

struct TaskTerms {
  ad::Tensor clean;
  /// Unweighted R on the query set; empty when the robust term is off.
  ad::Tensor robust;
  /// Contrastive term; empty when gamma_cl = 0.
  ad::Tensor contrastive;
};

/// Fine-tunes on the support set, then evaluates each term on the query set.
TaskTerms task_terms(const ArchSpec& arch, const ParamTensors& w, const Episode& task, const MetaConfig& cfg,
                     std::uint64_t seed);

struct MetaObjective {
  ad::Tensor total;
  double clean = 0.0;
  double robust = 0.0;
  double contrastive = 0.0;
};

/// Mean over tasks of clean + gamma_out * R + gamma_cl * l_CL (R + gamma_cl
/// * l_CL when gamma_out is infinite), built on the graph of `w`.
MetaObjective meta_objective(const ArchSpec& arch, const ParamTensors& w, std::span<const Episode> tasks,
                             const MetaConfig& cfg, std::uint64_t seed);

struct StepMetrics {
  double clean = 0.0;
  double robust = 0.0;
  double contrastive = 0.0;
  double grad_norm_clean = 0.0;
  double grad_norm_robust = 0.0;
  double grad_norm_contrastive = 0.0;

  friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

/// Adam moments for the two update directions.
struct OuterState {
  std::vector<double> m_clean, v_clean, m_robust, v_robust;
  std::size_t t = 0;
};

struct MetaGradients {
  std::vector<double> clean;
  std::vector<double> robust;
  std::vector<double> contrastive;
  StepMetrics metrics;
};

/// Per-term meta-gradients averaged over tasks (task-index order).
MetaGradients meta_gradients(const MetaModel& w, std::span<const Episode> tasks, const MetaConfig& cfg,
                             std::uint64_t seed);

struct StepResult {
  MetaModel model;
  StepMetrics metrics;
};

/// w - beta1 * grad(clean) - beta2 * (gamma_out * grad(R) + gamma_cl * grad(l_CL)).
/// The clean part is dropped when gamma_out is infinite and R enters with weight 1.
StepResult meta_step(const MetaModel& w, std::span<const Episode> tasks, const MetaConfig& cfg, std::uint64_t seed,
                     OuterState* state = nullptr);

struct LogRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  StepMetrics metrics;

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

/// Episodes for (epoch, batch).
using TaskSampler = std::function<std::vector<Episode>(std::size_t epoch, std::size_t batch)>;

/// Episodes seeded by (seed, epoch, batch, task index).
TaskSampler make_sampler(const Dataset& data, const EpisodeConfig& episode, std::size_t tasks_per_batch,
                         std::uint64_t seed);

struct TrainResult {
  MetaModel model;
  std::vector<LogRecord> log;
};

/// epochs * batches_per_epoch meta-steps. `on_step`, when set, sees every record.
TrainResult train(const MetaModel& w0, const TaskSampler& sampler, const MetaConfig& cfg,
                  const std::function<void(const LogRecord&)>& on_step = {});

/// One JSON object per line.
std::string to_ndjson(const LogRecord& record);

struct MetaTestConfig {
  FinetuneMode mode = FinetuneMode::Standard;
  FinetuneScope scope = FinetuneScope::Full;
  std::size_t K = 5;
  double alpha = 0.01;
  /// Weight of R during adversarial fine-tuning.
  double gamma_in = 0.2;
  RobustSpec finetune_robust;
  /// Evaluation attack; its epsilon is overridden per sweep entry.
  AttackConfig eval_attack;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  /// Fine-tuning settings of a training config. gamma_in defaults to the
  /// training gamma_out when that is finite and positive, else to the
  /// regularizer's usual weight (0.2 for AT, 5 for TRADES).
  static MetaTestConfig from(const MetaConfig& cfg);
};

/// Fine-tunes once per task, then measures query accuracy clean (epsilon 0
/// row) and under the evaluation attack at every epsilon in `epsilons`.
EvalReport meta_test(const MetaModel& w, std::span<const Episode> tasks, const MetaTestConfig& cfg,
                     std::span<const double> epsilons);

}  // namespace rmaml
