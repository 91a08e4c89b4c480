#include "hasr/tape.h"

#include "hasr/errors.h"

namespace hasr {

const Buffer* GradientMap::find(const Tensor& t) const {
  auto it = grads_.find(t.node());
  return it == grads_.end() ? nullptr : &it->second.grad;
}

const Buffer& GradientMap::at(const Tensor& t) const {
  const Buffer* g = find(t);
  if (!g) throw ContractError("no gradient recorded for tensor " + shape_string(t.shape()));
  return *g;
}

bool Tape::tracks(std::initializer_list<const Tensor*> inputs) const {
  if (!recording()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

bool Tape::tracks(const std::vector<Tensor>& inputs) const {
  if (!recording()) return false;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

Tensor Tape::output(Shape shape, Buffer data, bool requires_grad) {
  Tensor out(std::move(shape), std::move(data), requires_grad && recording());
  if (out.requires_grad()) {
    out.node_->producer = this;
    out.node_->slot = slot_grads_.size();
    slot_grads_.emplace_back();
    slot_nodes_.push_back(out.node_);
  }
  return out;
}

void Tape::record(std::vector<Tensor> outputs, BackwardFn fn) {
  if (!recording()) return;
  entries_.push_back(Entry{std::move(outputs), std::move(fn)});
}

const Buffer* Tape::grad_if_any(const Tensor& t) const {
  const detail::TensorNode* node = t.node();
  if (node->producer == this) {
    const Buffer& g = slot_grads_[node->slot];
    return g.empty() ? nullptr : &g;
  }
  auto it = leaf_grads_.find(node);
  return it == leaf_grads_.end() ? nullptr : &it->second.grad;
}

Buffer& Tape::grad(const Tensor& t) {
  const detail::TensorNode* node = t.node();
  if (node->producer == this) {
    Buffer& g = slot_grads_[node->slot];
    if (g.empty()) g.assign(node->data.size(), 0.0);
    return g;
  }
  auto [it, inserted] = leaf_grads_.try_emplace(node);
  if (inserted) {
    it->second.node = t.node_ptr();
    it->second.grad.assign(node->data.size(), 0.0);
  }
  return it->second.grad;
}

GradientMap Tape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("backward() already ran on this tape");
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  consumed_ = true;
  GradientMap result;
  if (!loss.requires_grad()) return result;
  grad(loss)[0] = 1.0;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    bool reached = false;
    for (const Tensor& out : it->outputs) {
      if (grad_if_any(out)) {
        reached = true;
        break;
      }
    }
    if (reached) it->fn(*this);
  }

  for (auto& [node, entry] : leaf_grads_) {
    if (node->requires_grad) result.grads_.emplace(node, std::move(entry));
  }
  leaf_grads_.clear();
  return result;
}

}  // namespace hasr
