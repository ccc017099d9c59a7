#pragma once

// Robust-accuracy sweeps, report files, and neuron inversion (input
// attribution maps).

#include <filesystem>
#include <span>
#include <vector>

#include "rmaml/metalearn.hpp"
#include "rmaml/report.hpp"

namespace rmaml {

/// meta_test with a PGD evaluation attack of `attack_steps` steps at every
/// epsilon of the grid. Other evaluation-attack settings come from `base`.
EvalReport ra_sweep(const MetaModel& model, std::span<const Episode> tasks, std::span<const double> epsilons,
                    std::size_t attack_steps, FinetuneMode mode, FinetuneScope scope, MetaTestConfig base = {});

/// Writes `path` (CSV: epsilon,accuracy,ci,n_tasks) and its sidecar
/// `<path>.json` holding the config echo and wall time.
void emit_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

inline constexpr const char* kReportHeader = "epsilon,accuracy,ci,n_tasks";

struct InvertConfig {
  std::size_t steps = 100;
  /// Pixel step of each sign-ascent move.
  double step_size = 1.0;
  /// Accept a move only if it raises the activation, halving the step
  /// (up to max_backtracks times) otherwise. Off: plain fixed-step ascent.
  bool backtracking = true;
  std::size_t max_backtracks = 8;

  void validate() const;
};

struct IAMResult {
  ad::Array seed_image;
  ad::Array inverted_image;
  std::size_t neuron_index = 0;
  /// Activation at the seed image, then after each step.
  std::vector<double> objective_trace;
};

/// Projected sign ascent on r_i(x) over images in [0, 255].
IAMResult invert_neuron(const MetaModel& model, const ad::Array& seed_image, std::size_t neuron_index,
                        const InvertConfig& cfg);

/// Writes <dir>/iam.rmld (single-image dataset), <dir>/iam.pgm (plain
/// grayscale, channels side by side) and <dir>/trace.csv.
void write_iam(const std::filesystem::path& dir, const IAMResult& result, const ArchSpec& arch);

}  // namespace rmaml
