#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <unordered_map>
#include <vector>

#include "hasr/tensor.h"

namespace hasr {

// Gradients of a scalar loss with respect to the leaf tensors that require
// them. Keys are tensor identities, not names.
class GradientMap {
 public:
  const Buffer* find(const Tensor& t) const;
  const Buffer& at(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  struct Entry {
    std::shared_ptr<detail::TensorNode> node;
    Buffer grad;
  };
  std::unordered_map<const detail::TensorNode*, Entry> grads_;
};

// Ordered record of differentiable operations. Operations append entries as
// they execute; backward() replays them once each, newest first.
class Tape {
 public:
  enum class Mode { kRecord, kInference };
  using BackwardFn = std::function<void(Tape&)>;

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::kRecord; }
  std::size_t size() const { return entries_.size(); }

  // True when an op over these inputs has to be recorded.
  bool tracks(std::initializer_list<const Tensor*> inputs) const;
  bool tracks(const std::vector<Tensor>& inputs) const;

  // Allocates an op result; gradient-carrying results get a tape slot.
  Tensor output(Shape shape, Buffer data, bool requires_grad);

  // Registers the backward closure of an op that produced `outputs`. The
  // closure is skipped if no gradient reached any of them.
  void record(std::vector<Tensor> outputs, BackwardFn fn);

  // Reverse sweep from a scalar loss. May be called once per tape.
  GradientMap backward(const Tensor& loss);

  // Accessors for backward closures.
  const Buffer* grad_if_any(const Tensor& t) const;
  Buffer& grad(const Tensor& t);

 private:
  struct Entry {
    std::vector<Tensor> outputs;
    BackwardFn fn;
  };

  Mode mode_;
  bool consumed_ = false;
  std::vector<Entry> entries_;
  std::vector<Buffer> slot_grads_;
  std::vector<std::shared_ptr<detail::TensorNode>> slot_nodes_;
  std::unordered_map<const detail::TensorNode*, GradientMap::Entry> leaf_grads_;
};

}  // namespace hasr
