#pragma once

// Dense classifiers split into a representation block and a classification
// head. Parameters live in one flat vector; `layout()` describes how it is
// cut into weight/bias tensors and which block each belongs to.
//
// Inputs are [batch, pixels] matrices in pixel units; the network scales them
// by 1/255 as its first operation, so attack budgets stay in pixel units.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rmaml/autodiff.hpp"

namespace rmaml {

enum class Activation : std::uint8_t { Relu = 0, Tanh = 1, Linear = 2 };

const char* to_string(Activation a);
Activation parse_activation(const std::string& name);

enum class Block : std::uint8_t { Representation = 0, Head = 1 };

struct ArchSpec {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  std::vector<std::size_t> hidden;
  std::size_t embed_dim = 32;
  std::size_t n_classes = 5;
  Activation activation = Activation::Relu;

  std::size_t input_size() const { return height * width * channels; }
  /// Throws ConfigError on a zero extent or fewer than two classes.
  void validate() const;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

struct ParamSlot {
  std::string name;
  ad::Shape shape;
  Block block = Block::Representation;
  std::size_t offset = 0;
  std::size_t size = 0;

  friend bool operator==(const ParamSlot&, const ParamSlot&) = default;
};

std::vector<ParamSlot> make_layout(const ArchSpec& spec);

/// Immutable meta-model value: architecture plus flat parameter vector.
class MetaModel {
 public:
  MetaModel(ArchSpec spec, std::vector<double> params);

  const ArchSpec& arch() const noexcept { return spec_; }
  const std::vector<ParamSlot>& layout() const noexcept { return layout_; }
  std::span<const double> params() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }

  /// One array per layout slot.
  std::vector<ad::Array> unpack() const;
  static MetaModel pack(const ArchSpec& spec, std::span<const ad::Array> slots);
  static MetaModel pack(const ArchSpec& spec, std::span<const ad::Tensor> slots);

  MetaModel with_params(std::vector<double> params) const;

  friend bool operator==(const MetaModel&, const MetaModel&) = default;

 private:
  ArchSpec spec_;
  std::vector<ParamSlot> layout_;
  std::vector<double> params_;
};

/// Uniform in [-s, s], s = 1/sqrt(fan_in), for weights and biases alike.
MetaModel init_model(const ArchSpec& spec, std::uint64_t seed);

/// Parameters as tensors, one per layout slot.
using ParamTensors = std::vector<ad::Tensor>;

/// Binds every slot as a differentiable leaf of `graph`.
ParamTensors bind(ad::Graph& graph, const MetaModel& model);
/// Detached constants (no graph).
ParamTensors constants(const MetaModel& model);

/// Encoder output r(x), [batch, embed_dim].
ad::Tensor representation(const ArchSpec& spec, const ParamTensors& params, const ad::Tensor& x);
/// Head applied to representations, [batch, n_classes].
ad::Tensor head(const ArchSpec& spec, const ParamTensors& params, const ad::Tensor& reps);
ad::Tensor logits(const ArchSpec& spec, const ParamTensors& params, const ad::Tensor& x);

ad::Tensor logits(const MetaModel& model, const ad::Array& x);
ad::Tensor representation(const MetaModel& model, const ad::Array& x);

/// Mean negative log-softmax of the true class.
ad::Tensor cross_entropy(const ad::Tensor& logits, std::span<const int> labels);

/// Row-wise argmax (first maximum on ties).
std::vector<int> predict(const ad::Array& logits);

// Checkpoint container: see docs/formats.md.
std::vector<std::uint8_t> encode_checkpoint(const MetaModel& model);
MetaModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const MetaModel& model);
MetaModel load_checkpoint(const std::filesystem::path& path);

}  // namespace rmaml
