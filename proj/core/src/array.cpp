#include <cmath>
#include <sstream>

#include "rmaml/autodiff.hpp"
#include "rmaml/error.hpp"

namespace rmaml::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Array::Array(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("array extent must be positive, got " + to_string(shape_));
  }
  if (numel(shape_) != data_.size()) {
    throw ShapeError("shape " + to_string(shape_) + " needs " + std::to_string(numel(shape_)) +
                     " values, got " + std::to_string(data_.size()));
  }
}

Array Array::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Array Array::filled(Shape shape, double value) {
  const std::size_t n = numel(shape);
  return Array(std::move(shape), std::vector<double>(n, value));
}

Array Array::scalar(double value) { return Array({}, {value}); }

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Array({rows, cols}, std::move(values));
}

std::size_t Array::rows() const {
  if (rank() != 2) throw ShapeError("rows() needs a matrix, got " + to_string(shape_));
  return shape_[0];
}

std::size_t Array::cols() const {
  if (rank() != 2) throw ShapeError("cols() needs a matrix, got " + to_string(shape_));
  return shape_[1];
}

double Array::item() const {
  if (data_.size() != 1) throw ShapeError("item() needs one element, got " + to_string(shape_));
  return data_[0];
}

bool Array::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Array Array::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Array(std::move(shape), data_);
}

}  // namespace rmaml::ad
