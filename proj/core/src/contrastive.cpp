#include "rmaml/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rmaml/error.hpp"
#include "rmaml/regularizers.hpp"
#include "rmaml/rng.hpp"

namespace rmaml {

using ad::Array;
using ad::Tensor;

void TransformConfig::validate() const {
  if (!crop_resize && !cutout && !rotation) throw ConfigError("enable at least one transform", "contrastive.transforms");
  if (!(crop_min_scale > 0.0 && crop_min_scale <= 1.0)) {
    throw ConfigError("must be in (0, 1]", "contrastive.crop_min_scale");
  }
  if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 180.0)) {
    throw ConfigError("must be in [0, 180]", "contrastive.max_rotation_deg");
  }
}

namespace {

// One image as [height][width][channels] doubles.
struct Image {
  std::size_t h, w, c;
  std::vector<double> px;

  double& at(std::size_t i, std::size_t j, std::size_t k) { return px[(i * w + j) * c + k]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return px[(i * w + j) * c + k]; }
};

Image crop_resize(const Image& in, double scale_min, Rng& rng) {
  const double s = rng.uniform(scale_min, 1.0);
  const auto side = [&](std::size_t n) {
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(s * static_cast<double>(n))), 1, n);
  };
  const std::size_t ch = side(in.h), cw = side(in.w);
  const std::size_t top = rng.below(in.h - ch + 1), left = rng.below(in.w - cw + 1);
  Image out = in;
  for (std::size_t i = 0; i < in.h; ++i) {
    for (std::size_t j = 0; j < in.w; ++j) {
      const std::size_t si = top + i * ch / in.h, sj = left + j * cw / in.w;
      for (std::size_t k = 0; k < in.c; ++k) out.at(i, j, k) = in.at(si, sj, k);
    }
  }
  return out;
}

Image rotate(const Image& in, double degrees, double fill) {
  if (degrees == 0.0) return in;
  const double t = degrees * std::numbers::pi / 180.0;
  const double ci = (static_cast<double>(in.h) - 1.0) / 2.0, cj = (static_cast<double>(in.w) - 1.0) / 2.0;
  Image out = in;
  for (std::size_t i = 0; i < in.h; ++i) {
    for (std::size_t j = 0; j < in.w; ++j) {
      // Inverse map: source = R(-t) * (dest - centre) + centre.
      const double di = static_cast<double>(i) - ci, dj = static_cast<double>(j) - cj;
      const double si = std::round(std::cos(t) * di + std::sin(t) * dj + ci);
      const double sj = std::round(-std::sin(t) * di + std::cos(t) * dj + cj);
      const bool inside = si >= 0 && sj >= 0 && si < static_cast<double>(in.h) && sj < static_cast<double>(in.w);
      for (std::size_t k = 0; k < in.c; ++k) {
        out.at(i, j, k) = inside ? in.at(static_cast<std::size_t>(si), static_cast<std::size_t>(sj), k) : fill;
      }
    }
  }
  return out;
}

void cutout(Image& img, std::size_t size, double fill, Rng& rng) {
  const std::size_t sh = std::min(size, img.h), sw = std::min(size, img.w);
  if (sh == 0 || sw == 0) return;
  const std::size_t top = rng.below(img.h - sh + 1), left = rng.below(img.w - sw + 1);
  for (std::size_t i = top; i < top + sh; ++i) {
    for (std::size_t j = left; j < left + sw; ++j) {
      for (std::size_t k = 0; k < img.c; ++k) img.at(i, j, k) = fill;
    }
  }
}

}  // namespace

ViewBatch make_views(const Array& batch, const ImageDims& dims, const TransformConfig& cfg, double fill,
                     std::uint64_t seed) {
  cfg.validate();
  if (batch.shape().size() != 2 || batch.cols() != dims.size()) {
    throw ShapeError("make_views: batch " + ad::to_string(batch.shape()) + " does not hold " +
                     std::to_string(dims.size()) + "-pixel images");
  }
  if (batch.rows() == 0) throw ShapeError("make_views: empty batch");
  const std::size_t n = batch.rows(), d = dims.size();
  Array positives = Array::zeros(batch.shape());
  for (std::size_t r = 0; r < n; ++r) {
    Rng rng(derive_seed(seed, {r}));
    Image img{dims.height, dims.width, dims.channels,
              std::vector<double>(batch.values().begin() + static_cast<std::ptrdiff_t>(r * d),
                                  batch.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * d))};
    if (cfg.crop_resize) img = crop_resize(img, cfg.crop_min_scale, rng);
    if (cfg.rotation) img = rotate(img, rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg), fill);
    if (cfg.cutout) cutout(img, cfg.cutout_size, fill, rng);
    std::copy(img.px.begin(), img.px.end(), positives.values().begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return {batch, std::move(positives), std::vector<ViewSource>(n, ViewSource::Transform)};
}

ViewBatch adversarial_pairs(const Array& x, const Array& adversarial) {
  if (x.shape() != adversarial.shape()) throw ShapeError("adversarial_pairs: shapes differ");
  return {x, adversarial, std::vector<ViewSource>(x.rows(), ViewSource::Adversarial)};
}

Array adversarial_views(const ArchSpec& arch, const ParamTensors& params, const LabeledBatch& batch,
                        const AttackConfig& attack, std::uint64_t seed) {
  RobustSpec spec;
  spec.kind = RobustKind::AT;
  spec.attack = attack;
  return at_regularizer(arch, detached(params), batch, spec, seed).adversarial;
}

std::vector<int> symmetric_pairing(std::size_t n) {
  std::vector<int> p(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = static_cast<int>(i + n);
    p[i + n] = static_cast<int>(i);
  }
  return p;
}

Tensor contrastive_loss(const Tensor& reps, std::span<const int> pairing, double tau, bool normalize) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive", "contrastive.tau");
  const auto& shape = reps.shape();
  if (shape.size() != 2) throw ShapeError("contrastive_loss: representations must be [n, d]");
  const std::size_t n = shape[0];
  if (n < 3) throw ShapeError("contrastive_loss: need at least 3 views so anchors have negatives, got " + std::to_string(n));
  if (pairing.size() != n) throw ShapeError("contrastive_loss: pairing size does not match rows");

  Array pick = Array::zeros({n, n});
  Array mask = Array::zeros({n, n});
  std::size_t anchors = 0;
  for (std::size_t r = 0; r < n; ++r) {
    mask[r * n + r] = -1e300;
    const int p = pairing[r];
    if (p < 0) continue;
    if (static_cast<std::size_t>(p) >= n || static_cast<std::size_t>(p) == r) {
      throw ConfigError("row " + std::to_string(r) + " has invalid positive " + std::to_string(p), "pairing");
    }
    pick[r * n + static_cast<std::size_t>(p)] = 1.0;
    ++anchors;
  }
  if (anchors == 0) throw ConfigError("no anchor has a positive", "pairing");

  Tensor z = reps;
  if (normalize) {
    // r / |r| via exp(-log(|r|^2) / 2).
    const Tensor inv_norm = ad::exp(ad::scale(ad::log(ad::sum_cols(reps * reps)), -0.5));
    z = reps * ad::broadcast_to(inv_norm, shape);
  }
  const Tensor sim = ad::scale(ad::matmul(z, ad::transpose(z)), 1.0 / tau) + Tensor(std::move(mask));
  const Tensor log_prob = ad::log_softmax(sim);
  return ad::scale(ad::sum(log_prob * Tensor(std::move(pick))), -1.0 / static_cast<double>(anchors));
}

}  // namespace rmaml
