#pragma once

#include <span>
#include <string>
#include <vector>

namespace rmaml {

struct EvalRow {
  double epsilon = 0.0;
  /// Mean over tasks of per-task query accuracy.
  double accuracy = 0.0;
  /// 95% half-width, 1.96 * sample std / sqrt(n_tasks).
  double ci = 0.0;
  std::size_t n_tasks = 0;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct EvalReport {
  /// Ascending epsilon; the epsilon = 0 row is standard accuracy.
  std::vector<EvalRow> rows;
  /// Fully resolved settings that produced the report, as JSON text.
  std::string config_echo;
  double wall_time_seconds = 0.0;
};

/// Mean and 95% half-width of per-task accuracies.
EvalRow summarize(double epsilon, std::span<const double> task_accuracies);

}  // namespace rmaml
