#include "rmaml/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_set>

#include "byte_io.hpp"
#include "rmaml/error.hpp"
#include "rmaml/rng.hpp"

namespace rmaml {

using ad::Array;

Dataset::Dataset(ImageDims dims, std::size_t classes, std::size_t samples_per_class,
                 std::vector<std::uint8_t> pixels)
    : dims_(dims), classes_(classes), per_class_(samples_per_class), pixels_(std::move(pixels)) {
  if (dims_.size() == 0) throw ConfigError("image dims must be positive", "dims");
  if (classes_ == 0) throw ConfigError("must be positive", "classes");
  if (per_class_ == 0) throw ConfigError("must be positive", "samples_per_class");
  if (pixels_.size() != classes_ * per_class_ * dims_.size()) {
    throw ConfigError("expected " + std::to_string(classes_ * per_class_ * dims_.size()) + " pixels, got " +
                          std::to_string(pixels_.size()),
                      "pixels");
  }
}

std::span<const std::uint8_t> Dataset::image(std::size_t id) const {
  if (id >= classes_ * per_class_) throw ConfigError("sample id " + std::to_string(id) + " out of range", "id");
  return std::span(pixels_).subspan(id * dims_.size(), dims_.size());
}

Dataset Dataset::subset(std::size_t first, std::size_t count) const {
  if (first + count > classes_ || count == 0) {
    throw ConfigError("class range [" + std::to_string(first) + ", " + std::to_string(first + count) +
                          ") invalid for " + std::to_string(classes_) + " classes",
                      "classes");
  }
  const std::size_t stride = per_class_ * dims_.size();
  const auto begin = pixels_.begin() + static_cast<std::ptrdiff_t>(first * stride);
  return Dataset(dims_, count, per_class_,
                 std::vector<std::uint8_t>(begin, begin + static_cast<std::ptrdiff_t>(count * stride)));
}

double Dataset::mean_pixel() const {
  const double total = std::accumulate(pixels_.begin(), pixels_.end(), 0.0);
  return total / static_cast<double>(pixels_.size());
}

namespace {

struct Grating {
  int fx;
  int fy;
  double phase;
};

struct Part {
  std::size_t grating;
  double sign;
};

using Composition = std::vector<Part>;

std::vector<Grating> dictionary(const SynthConfig& cfg) {
  const int half_w = static_cast<int>(cfg.dims.width / 2);
  const int half_h = static_cast<int>(cfg.dims.height / 2);
  std::vector<std::pair<int, int>> freqs;
  // Below Nyquist and one of each +/- pair, so distinct entries are orthogonal.
  for (int fx = 0; fx < std::max(half_w, 1); ++fx) {
    for (int fy = -std::max(half_h - 1, 0); fy < std::max(half_h, 1); ++fy) {
      if (fx == 0 && fy <= 0) continue;
      freqs.emplace_back(fx, fy);
    }
  }
  if (freqs.size() < cfg.parts) {
    throw ConfigError(std::to_string(cfg.dims.height) + "x" + std::to_string(cfg.dims.width) + " images allow only " +
                          std::to_string(freqs.size()) + " distinct gratings",
                      "parts");
  }
  Rng rng(derive_seed(cfg.seed, {1}));
  std::vector<Grating> out;
  for (std::size_t k = 0; k < cfg.parts; ++k) {
    const std::size_t pick = k + rng.below(freqs.size() - k);
    std::swap(freqs[k], freqs[pick]);
    out.push_back({freqs[k].first, freqs[k].second, rng.uniform(0.0, 2.0 * std::numbers::pi)});
  }
  return out;
}

double count_compositions(std::size_t parts, std::size_t k) {
  double n = std::pow(2.0, static_cast<double>(k));
  for (std::size_t i = 0; i < k; ++i) n = n * static_cast<double>(parts - i) / static_cast<double>(i + 1);
  return n;
}

std::vector<Composition> compositions(const SynthConfig& cfg) {
  if (cfg.parts_per_class == 0 || cfg.parts_per_class > cfg.parts) {
    throw ConfigError("need 0 < parts_per_class <= parts", "parts_per_class");
  }
  if (count_compositions(cfg.parts, cfg.parts_per_class) < static_cast<double>(cfg.classes)) {
    throw ConfigError(std::to_string(cfg.parts) + " parts, " + std::to_string(cfg.parts_per_class) +
                          " per class cannot make " + std::to_string(cfg.classes) + " distinct classes",
                      "classes");
  }
  Rng rng(derive_seed(cfg.seed, {3}));
  std::vector<Composition> out;
  while (out.size() < cfg.classes) {
    std::vector<std::size_t> idx(cfg.parts);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Composition c;
    for (std::size_t i = 0; i < cfg.parts_per_class; ++i) {
      std::swap(idx[i], idx[i + rng.below(cfg.parts - i)]);
      c.push_back({idx[i], rng.uniform() < 0.5 ? -1.0 : 1.0});
    }
    std::sort(c.begin(), c.end(), [](const Part& a, const Part& b) { return a.grating < b.grating; });
    const bool seen = std::any_of(out.begin(), out.end(), [&](const Composition& o) {
      return std::equal(o.begin(), o.end(), c.begin(),
                        [](const Part& a, const Part& b) { return a.grating == b.grating && a.sign == b.sign; });
    });
    if (!seen) out.push_back(std::move(c));
  }
  return out;
}

void render(const SynthConfig& cfg, const std::vector<Grating>& dict, const Composition& comp, double phase_offset,
            std::vector<double>& out) {
  const ImageDims& d = cfg.dims;
  const double amp = cfg.amplitude / std::sqrt(static_cast<double>(comp.size()));
  out.assign(d.size(), 127.5);
  for (const Part& part : comp) {
    const Grating& g = dict[part.grating];
    std::size_t k = 0;
    for (std::size_t i = 0; i < d.height; ++i) {
      for (std::size_t j = 0; j < d.width; ++j) {
        const double arg = 2.0 * std::numbers::pi *
                           (g.fx * static_cast<double>(j) / static_cast<double>(d.width) +
                            g.fy * static_cast<double>(i) / static_cast<double>(d.height));
        for (std::size_t ch = 0; ch < d.channels; ++ch) {
          const double chan = 2.0 * std::numbers::pi * static_cast<double>(ch) / static_cast<double>(d.channels);
          out[k++] += part.sign * amp * std::cos(arg + g.phase + phase_offset + chan);
        }
      }
    }
  }
}

std::uint8_t to_pixel(double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); }

}  // namespace

std::vector<double> synth_pattern(const SynthConfig& cfg, std::size_t c) {
  const auto dict = dictionary(cfg);
  const auto comps = compositions(cfg);
  if (c >= comps.size()) throw ConfigError("class out of range", "class");
  std::vector<double> out;
  render(cfg, dict, comps[c], 0.0, out);
  return out;
}

Dataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.classes == 0 || cfg.samples_per_class == 0 || cfg.dims.size() == 0) {
    throw ConfigError("counts and dims must be positive", "dataset");
  }
  if (!(cfg.noise >= 0.0) || !(cfg.phase_jitter >= 0.0)) throw ConfigError("must be >= 0", "dataset.noise");
  const auto dict = dictionary(cfg);
  const auto comps = compositions(cfg);
  std::vector<std::uint8_t> pixels;
  pixels.reserve(cfg.classes * cfg.samples_per_class * cfg.dims.size());
  std::vector<double> base;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    Rng rng(derive_seed(cfg.seed, {2, c}));
    render(cfg, dict, comps[c], 0.0, base);
    std::vector<double> img;
    for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
      const std::vector<double>* src = &base;
      if (cfg.phase_jitter > 0.0) {
        render(cfg, dict, comps[c], cfg.phase_jitter * rng.normal(), img);
        src = &img;
      }
      for (double v : *src) pixels.push_back(to_pixel(cfg.noise > 0.0 ? v + cfg.noise * rng.normal() : v));
    }
  }
  return Dataset(cfg.dims, cfg.classes, cfg.samples_per_class, std::move(pixels));
}

ClassSplit split_classes(const Dataset& data, std::size_t train_classes) {
  if (train_classes == 0 || train_classes >= data.classes()) {
    throw ConfigError("need 0 < train_classes < " + std::to_string(data.classes()), "train_classes");
  }
  return {data.subset(0, train_classes), data.subset(train_classes, data.classes() - train_classes)};
}

void EpisodeConfig::validate() const {
  if (way < 2) throw ConfigError("need at least 2 classes per episode", "episode.way");
  if (shot == 0) throw ConfigError("must be positive", "episode.shot");
  if (query == 0) throw ConfigError("must be positive", "episode.query");
  if (!std::isfinite(unlabeled_shift)) throw ConfigError("must be finite", "episode.unlabeled_shift");
}

namespace {

// First k entries of a uniformly random permutation of [0, n).
std::vector<std::size_t> choose(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

Array gather(const Dataset& data, std::span<const std::size_t> ids, double shift) {
  const std::size_t d = data.dims().size();
  Array out = Array::zeros({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto img = data.image(ids[r]);
    for (std::size_t j = 0; j < d; ++j) {
      const double v = static_cast<double>(img[j]) + shift;
      out[r * d + j] = shift == 0.0 ? v : std::clamp(v, kPixelMin, kPixelMax);
    }
  }
  return out;
}

}  // namespace

Episode sample_episode(const Dataset& data, const EpisodeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (data.classes() < cfg.way) {
    throw ConfigError("dataset has " + std::to_string(data.classes()) + " classes, episode needs " +
                          std::to_string(cfg.way),
                      "episode.way");
  }
  if (data.samples_per_class() < cfg.shot + cfg.query) {
    throw ConfigError("dataset has " + std::to_string(data.samples_per_class()) + " samples per class, episode needs " +
                          std::to_string(cfg.shot + cfg.query),
                      "episode.query");
  }
  Rng rng(seed);
  Episode ep;
  ep.way = cfg.way;
  ep.shot = cfg.shot;
  ep.class_map = choose(rng, data.classes(), cfg.way);
  const std::size_t per = data.samples_per_class();
  for (std::size_t label = 0; label < cfg.way; ++label) {
    const auto picks = choose(rng, per, cfg.shot + cfg.query);
    const std::size_t base = ep.class_map[label] * per;
    for (std::size_t k = 0; k < picks.size(); ++k) {
      auto& ids = k < cfg.shot ? ep.support_ids : ep.query_ids;
      auto& labels = k < cfg.shot ? ep.support.y : ep.query.y;
      ids.push_back(base + picks[k]);
      labels.push_back(static_cast<int>(label));
    }
  }
  ep.support.x = gather(data, ep.support_ids, 0.0);
  ep.query.x = gather(data, ep.query_ids, 0.0);
  if (cfg.unlabeled) {
    const std::size_t want = cfg.way * cfg.query;
    const std::size_t total = data.classes() * per;
    std::unordered_set<std::size_t> used(ep.support_ids.begin(), ep.support_ids.end());
    used.insert(ep.query_ids.begin(), ep.query_ids.end());
    if (total - used.size() < want) {
      throw ConfigError("not enough held-out samples for an unlabeled pool of " + std::to_string(want),
                        "episode.unlabeled");
    }
    std::vector<std::size_t> free;
    for (std::size_t id = 0; id < total; ++id) {
      if (!used.contains(id)) free.push_back(id);
    }
    for (std::size_t i : choose(rng, free.size(), want)) ep.unlabeled_ids.push_back(free[i]);
    ep.unlabeled = gather(data, ep.unlabeled_ids, cfg.unlabeled_shift);
  }
  return ep;
}

namespace {
constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::size_t kDatasetHeader = 4 + 6 * 4;
}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& data) {
  detail::ByteWriter w;
  w.tag("RMLD");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.classes()));
  w.u32(static_cast<std::uint32_t>(data.samples_per_class()));
  w.u32(static_cast<std::uint32_t>(data.dims().height));
  w.u32(static_cast<std::uint32_t>(data.dims().width));
  w.u32(static_cast<std::uint32_t>(data.dims().channels));
  w.raw(data.pixels());
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "dataset");
  r.expect_tag("RMLD");
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetVersion) throw FormatError("dataset: unsupported version " + std::to_string(version));
  const std::size_t classes = r.u32("classes");
  const std::size_t per = r.u32("samples_per_class");
  ImageDims dims;
  dims.height = r.u32("height");
  dims.width = r.u32("width");
  dims.channels = r.u32("channels");
  if (classes == 0) throw FormatError("dataset: header declares 0 classes");
  if (per == 0) throw FormatError("dataset: header declares 0 samples per class");
  if (dims.size() == 0) throw FormatError("dataset: header declares an empty image");
  const std::size_t payload = classes * per * dims.size();
  if (r.remaining() != payload) {
    throw FormatError("dataset: expected " + std::to_string(kDatasetHeader + payload) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  const auto px = r.raw(payload, "pixels");
  return Dataset(dims, classes, per, std::vector<std::uint8_t>(px.begin(), px.end()));
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  detail::write_file(path, encode_dataset(data));
}

Dataset load_dataset(const std::filesystem::path& path) {
  try {
    return decode_dataset(detail::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Dataset convert_raw_directory(const std::filesystem::path& dir, const ImageDims& dims) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  if (dims.size() == 0) throw ConfigError("image dims must be positive", "dims");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".raw") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError("'" + dir.string() + "' contains no .raw files");
  std::vector<std::uint8_t> pixels;
  std::size_t per = 0;
  for (const fs::path& f : files) {
    const auto bytes = detail::read_file(f);
    if (bytes.empty() || bytes.size() % dims.size() != 0) {
      throw FormatError(f.string() + ": size " + std::to_string(bytes.size()) + " is not a positive multiple of " +
                        std::to_string(dims.size()));
    }
    const std::size_t n = bytes.size() / dims.size();
    if (per == 0) per = n;
    if (n != per) {
      throw FormatError(f.string() + ": holds " + std::to_string(n) + " images, earlier classes hold " +
                        std::to_string(per));
    }
    pixels.insert(pixels.end(), bytes.begin(), bytes.end());
  }
  return Dataset(dims, files.size(), per, std::move(pixels));
}

}  // namespace rmaml
