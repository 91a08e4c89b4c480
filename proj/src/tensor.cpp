#include "hasr/tensor.h"

#include <cmath>
#include <sstream>

#include "hasr/errors.h"

namespace hasr {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Buffer data, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  node_ = std::make_shared<detail::TensorNode>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::span<const double> data, bool requires_grad)
    : Tensor(std::move(shape), Buffer(data.begin(), data.end()), requires_grad) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  Buffer data(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, Buffer{value}, requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return Tensor(Shape{values.size()}, Buffer(values.begin(), values.end()), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  Buffer data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data), requires_grad);
}

std::size_t Tensor::rows() const {
  const Shape& s = node_->shape;
  if (s.size() <= 1) return 1;
  if (s.size() == 2) return s[0];
  throw DimensionError("expected a matrix, got shape " + shape_string(s));
}

std::size_t Tensor::cols() const {
  const Shape& s = node_->shape;
  if (s.empty()) return 1;
  if (s.size() == 1) return s[0];
  if (s.size() == 2) return s[1];
  throw DimensionError("expected a matrix, got shape " + shape_string(s));
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on non-scalar tensor of shape " + shape_string(shape()));
  }
  return node_->data[0];
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(node_->shape, node_->data, requires_grad);
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace hasr
