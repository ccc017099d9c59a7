#pragma once

#include <vector>

#include "rmaml/autodiff.hpp"

namespace rmaml {

/// Images as rows of an [n, pixels] matrix in pixel units [0, 255], with
/// episode-local integer labels.
struct LabeledBatch {
  ad::Array x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
};

/// Stacks the rows of two [n, d] matrices.
ad::Array concat_rows(const ad::Array& top, const ad::Array& bottom);

inline constexpr double kPixelMin = 0.0;
inline constexpr double kPixelMax = 255.0;

}  // namespace rmaml
