#include "pairx/tensor.hpp"

#include <cmath>
#include <utility>

#include "pairx/error.hpp"

namespace pairx {

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_volume(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

static void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4)
    fail(ErrorKind::Contract, "tensor rank must be 1..4, got " + shape_to_string(shape));
  for (int d : shape)
    if (d <= 0) fail(ErrorKind::Contract, "non-positive extent in shape " + shape_to_string(shape));
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_volume(shape_), 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_volume(shape_))
    fail(ErrorKind::Contract, "tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_to_string(shape_));
}

Tensor Tensor::filled(Shape shape, float value) {
  Tensor t(std::move(shape));
  for (float& v : t.data_) v = value;
  return t;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_volume(shape) != data_.size())
    fail(ErrorKind::Contract,
         "cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  return Tensor(std::move(shape), data_);
}

double Tensor::sum() const {
  double s = 0.0;
  for (float v : data_) s += v;
  return s;
}

bool Tensor::all_finite() const {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace pairx
