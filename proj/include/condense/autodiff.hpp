#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "condense/kernels.hpp"
#include "condense/tensor.hpp"

namespace condense {

using kernels::Act;

// Tape node for reverse-mode differentiation. Ops allocate one node per
// result; backward() walks the tape in reverse creation order. Nodes hold
// shared_ptrs to their parents only, so the tape frees itself when the root
// goes out of scope.
struct Node {
  Tensor value;
  Tensor grad;  // empty until something backpropagates into it
  bool requires_grad = false;
  uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool has_grad() const { return !grad.is_empty(); }
  Tensor& ensure_grad() {
    if (grad.is_empty()) grad = Tensor(value.shape());
    return grad;
  }
};

using VarPtr = std::shared_ptr<Node>;

// Trainable leaf (weights): participates in gradient recording.
VarPtr make_param(Tensor value);
// Non-trainable leaf (inputs, targets).
VarPtr make_const(Tensor value);
// New leaf sharing x's current value, cut off from the tape.
VarPtr detach(const VarPtr& x);

void backward(const VarPtr& root);  // root must be scalar
void zero_grad(const VarPtr& param);
void zero_grad(const std::vector<VarPtr>& params);

// Scoped gradient-recording switch; recording is on by default.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace op {

VarPtr conv2d(const VarPtr& x, const VarPtr& w, int stride, int padding);
VarPtr conv_transpose2d(const VarPtr& x, const VarPtr& w, int stride, int padding);
VarPtr concat_channels(const VarPtr& a, const VarPtr& b);
VarPtr activation(const VarPtr& x, Act kind, float leaky_slope = 0.2f);
VarPtr instance_norm(const VarPtr& x);
VarPtr l1_loss(const VarPtr& pred, const VarPtr& target);
VarPtr bce_loss(const VarPtr& pred, const VarPtr& target);
VarPtr add(const VarPtr& a, const VarPtr& b);
VarPtr scale(const VarPtr& x, float factor);
VarPtr sum(const VarPtr& x);

}  // namespace op

}  // namespace condense
