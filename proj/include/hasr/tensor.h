#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hasr {

// All numeric storage is double precision and aligned for Eigen so that the
// vectorized kernels take the same code path on every run.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

namespace detail {

struct TensorNode {
  Shape shape;
  Buffer data;
  bool requires_grad = false;
  // Tape that produced this node, or null for leaves.
  const Tape* producer = nullptr;
  std::size_t slot = 0;
};

}  // namespace detail

// Dense row-major array. A Tensor is a shared handle: copies alias the same
// storage, which is how parameters are referenced from many places at once.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Buffer data, bool requires_grad = false);
  Tensor(Shape shape, std::span<const double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  // Matrix view used by every 2-D operation: rank-1 tensors are a single row,
  // scalars are 1x1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  // Direct write access. Only the optimizer and checkpoint loader use this,
  // and never while a tape that references the tensor is alive.
  std::span<double> mutable_data() { return node_->data; }
  const Buffer& buffer() const { return node_->data; }

  double item() const;
  double at(std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Deep copy with fresh identity.
  Tensor clone(bool requires_grad = false) const;

  const detail::TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::TensorNode> node_;
};

bool all_finite(std::span<const double> values);

}  // namespace hasr
