#pragma once

#include <filesystem>
#include <iosfwd>

#include "experiment.hpp"

namespace rmaml::cli {

struct TrainArtifacts {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::filesystem::path config;
  std::vector<double> epoch_seconds;
};

/// Writes checkpoint.rmlc, train_log.ndjson and config.json under cfg.output.
TrainArtifacts cmd_train(const ExperimentConfig& cfg, std::ostream& out);

/// Runs the epsilon sweep and writes eval.csv (+ eval.csv.json) under cfg.output.
EvalReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& out);

/// Inverts one neuron starting from image `index` of an RMLD file; writes the
/// dump to cfg.output.
IAMResult cmd_invert(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& image, std::size_t index, std::size_t neuron, std::ostream& out);

void cmd_convert(const std::filesystem::path& input, const std::filesystem::path& output, const ImageDims& dims,
                 std::ostream& out);

/// Entry point of the `rmaml` binary. Exit codes: 0 success, 1 I/O or format
/// failure, 2 configuration error, 3 numeric failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rmaml::cli
