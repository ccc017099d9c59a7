#pragma once

// Few-shot data: an immutable class-major image store, a procedural grating
// dataset, episode sampling and the on-disk dataset format.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rmaml/data.hpp"

namespace rmaml {

struct ImageDims {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;

  std::size_t size() const { return height * width * channels; }
  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

/// Images stored class-major: class c, sample s starts at
/// (c * samples_per_class + s) * dims.size().
class Dataset {
 public:
  Dataset(ImageDims dims, std::size_t classes, std::size_t samples_per_class, std::vector<std::uint8_t> pixels);

  const ImageDims& dims() const noexcept { return dims_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t samples_per_class() const noexcept { return per_class_; }
  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  /// Global sample id = class * samples_per_class + sample.
  std::span<const std::uint8_t> image(std::size_t id) const;
  /// Classes [first, first + count) as a new dataset.
  Dataset subset(std::size_t first, std::size_t count) const;
  double mean_pixel() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  ImageDims dims_;
  std::size_t classes_;
  std::size_t per_class_;
  std::vector<std::uint8_t> pixels_;
};

struct SynthConfig {
  std::size_t classes = 28;
  std::size_t samples_per_class = 60;
  ImageDims dims;
  /// Pattern amplitude around mid-grey (root-sum-square over parts).
  double amplitude = 60.0;
  /// Size of the shared grating dictionary classes are composed from.
  std::size_t parts = 10;
  /// Signed gratings summed per class.
  std::size_t parts_per_class = 3;
  /// Standard deviation of i.i.d. Gaussian pixel noise.
  double noise = 30.0;
  /// Standard deviation of a per-sample phase offset, radians.
  double phase_jitter = 0.0;
  std::uint64_t seed = 0;
};

/// Each class is a distinct signed sum of `parts_per_class` cosine gratings
/// drawn from a shared dictionary of `parts` (orthogonal integer frequencies,
/// random phases), plus noise, rounded to uint8. Held-out classes reuse the
/// dictionary, so features learned on one split transfer to the other.
Dataset synth_dataset(const SynthConfig& cfg);

/// Base pattern of class `c` before noise, in pixel units.
std::vector<double> synth_pattern(const SynthConfig& cfg, std::size_t c);

struct ClassSplit {
  Dataset train;
  Dataset test;
};

/// First `train_classes` classes for meta-training, the rest for meta-testing.
ClassSplit split_classes(const Dataset& data, std::size_t train_classes);

struct EpisodeConfig {
  std::size_t way = 5;
  std::size_t shot = 1;
  std::size_t query = 15;
  bool unlabeled = false;
  /// Added to unlabeled pixels (then clipped) to simulate distribution shift.
  double unlabeled_shift = 0.0;

  void validate() const;
  friend bool operator==(const EpisodeConfig&, const EpisodeConfig&) = default;
};

struct Episode {
  std::size_t way = 0;
  std::size_t shot = 0;
  LabeledBatch support;
  LabeledBatch query;
  /// way * query images with no labels attached.
  std::optional<ad::Array> unlabeled;
  /// Episode label -> dataset class.
  std::vector<std::size_t> class_map;
  std::vector<std::size_t> support_ids;
  std::vector<std::size_t> query_ids;
  std::vector<std::size_t> unlabeled_ids;
};

/// Uniform classes and samples without replacement. The unlabeled pool comes
/// from samples not used in support or query, from any class.
Episode sample_episode(const Dataset& data, const EpisodeConfig& cfg, std::uint64_t seed);

// Dataset file: see docs/formats.md.
std::vector<std::uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

/// Builds a dataset from a directory of `<class>.raw` files (sorted by name),
/// each a concatenation of uint8 images of the given dims. Every class must
/// hold the same number of images.
Dataset convert_raw_directory(const std::filesystem::path& dir, const ImageDims& dims);

}  // namespace rmaml
