#pragma once

// Experiment configuration for the command-line driver: one JSON file plus
// flag overrides on top of a named preset.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rmaml/evaluation.hpp"
#include "rmaml/metalearn.hpp"
#include "rmaml/tasks.hpp"

namespace rmaml::cli {

struct DatasetSource {
  /// "synthetic" or "file" (an RMLD dataset at `path`).
  std::string source = "synthetic";
  std::filesystem::path path;
  SynthConfig synthetic;
  /// Leading classes used for meta-training; the rest are held out.
  std::size_t train_classes = 20;
};

struct ModelSettings {
  std::vector<std::size_t> hidden = {64};
  std::size_t embed_dim = 32;
  Activation activation = Activation::Relu;
};

struct EvalSettings {
  std::size_t tasks = 2400;
  std::vector<double> epsilons = {0, 2, 4, 6, 8, 10};
  std::size_t attack_steps = 10;
  std::size_t restarts = 1;
  FinetuneMode ft_mode = FinetuneMode::Standard;
  /// Unset: the training scope, K, alpha, and the usual A-FT weight.
  std::optional<FinetuneScope> scope;
  std::optional<std::size_t> K;
  std::optional<double> alpha;
  std::optional<double> gamma_in;
};

struct ExperimentConfig {
  std::string preset = "maml";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  DatasetSource dataset;
  ModelSettings model;
  EpisodeConfig episode;
  MetaConfig meta;
  EvalSettings eval;
  InvertConfig invert;
  std::filesystem::path output = "rmaml_out";

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

const std::vector<std::string>& preset_names();
/// Resets the method-defining fields (gammas, regularizer, attack kind, scope).
void apply_preset(ExperimentConfig& cfg, const std::string& name);

/// Overlays the keys present in `j`; unknown keys are rejected.
void overlay(ExperimentConfig& cfg, const nlohmann::json& j);

/// Fully resolved config. Loading it back reproduces `cfg` exactly.
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Preset (flag, else the file's "preset" key, else maml), then the file.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::optional<std::string>& preset_override);

struct DataSplit {
  Dataset train;
  Dataset test;
};
DataSplit load_data(const ExperimentConfig& cfg);

ArchSpec arch_for(const ExperimentConfig& cfg, const ImageDims& dims);
MetaTestConfig test_config(const ExperimentConfig& cfg);
/// Test episodes from the held-out classes, seeded per task index.
std::vector<Episode> test_tasks(const ExperimentConfig& cfg, const Dataset& test);

}  // namespace rmaml::cli
