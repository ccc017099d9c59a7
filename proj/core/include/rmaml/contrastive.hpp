#pragma once

// Multi-view contrastive auxiliary loss on encoder outputs.

#include <cstdint>
#include <span>
#include <vector>

#include "rmaml/attacks.hpp"
#include "rmaml/data.hpp"
#include "rmaml/models.hpp"
#include "rmaml/tasks.hpp"

namespace rmaml {

struct TransformConfig {
  bool crop_resize = true;
  /// Crop side length as a fraction of the image side, drawn from [min, 1].
  double crop_min_scale = 0.7;
  bool cutout = true;
  /// Side of the square set to the fill value; placed fully inside the image.
  std::size_t cutout_size = 4;
  bool rotation = true;
  /// Angle drawn uniformly from [-max, max] degrees.
  double max_rotation_deg = 15.0;

  /// At least one transform must be enabled.
  void validate() const;
  friend bool operator==(const TransformConfig&, const TransformConfig&) = default;
};

enum class ViewSource : std::uint8_t { Transform = 0, Adversarial = 1 };

struct ViewBatch {
  ad::Array anchors;
  /// Row i is the positive of anchor row i.
  ad::Array positives;
  std::vector<ViewSource> provenance;
};

/// One transformed view per row: crop-and-resize, then rotation, then cutout,
/// each with nearest-neighbour sampling. Pixels outside the source after
/// rotation, and cutout squares, take `fill`.
ViewBatch make_views(const ad::Array& batch, const ImageDims& dims, const TransformConfig& cfg, double fill,
                     std::uint64_t seed);

/// Pairs each row of `x` with the matching row of `adversarial`.
ViewBatch adversarial_pairs(const ad::Array& x, const ad::Array& adversarial);

/// x + delta* for an attack on the cross-entropy of the (detached) model.
ad::Array adversarial_views(const ArchSpec& arch, const ParamTensors& params, const LabeledBatch& batch,
                            const AttackConfig& attack, std::uint64_t seed);

/// Pairing for [anchors; positives] stacked rows: i <-> i + n, both directions.
std::vector<int> symmetric_pairing(std::size_t n);

/// Mean over rows r with pairing[r] >= 0 of
///   -log( exp(s_rp / tau) / sum_{k != r} exp(s_rk / tau) ),
/// s the dot product of (optionally l2-normalized) representations.
/// Needs at least three rows so every anchor has a negative.
ad::Tensor contrastive_loss(const ad::Tensor& reps, std::span<const int> pairing, double tau,
                            bool normalize = true);

}  // namespace rmaml
