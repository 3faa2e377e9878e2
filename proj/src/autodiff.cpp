#include "condense/autodiff.hpp"

#include <atomic>
#include <unordered_set>

namespace condense {

namespace {

std::atomic<uint64_t> g_seq{0};
thread_local bool g_grad_enabled = true;

VarPtr new_node(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->seq = ++g_seq;
  return n;
}

// Accumulates g into p's grad buffer if p participates in the tape.
void accumulate(const VarPtr& p, const Tensor& g) {
  if (!p->requires_grad) return;
  p->ensure_grad().add_(g);
}

bool recording(std::initializer_list<const VarPtr*> inputs) {
  if (!g_grad_enabled) return false;
  for (const VarPtr* v : inputs) {
    if ((*v)->requires_grad) return true;
  }
  return false;
}

void attach(const VarPtr& out, std::vector<VarPtr> parents, std::function<void(Node&)> fn) {
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backward_fn = std::move(fn);
}

}  // namespace

VarPtr make_param(Tensor value) {
  auto n = new_node(std::move(value));
  n->requires_grad = true;
  return n;
}

VarPtr make_const(Tensor value) { return new_node(std::move(value)); }

VarPtr detach(const VarPtr& x) { return make_const(x->value); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void zero_grad(const VarPtr& param) {
  if (param->has_grad()) param->grad.fill(0.0f);
}

void zero_grad(const std::vector<VarPtr>& params) {
  for (const VarPtr& p : params) zero_grad(p);
}

void backward(const VarPtr& root) {
  if (root->value.size() != 1) {
    throw StateError("backward root must be scalar, got shape " + root->value.shape_str());
  }
  // Iterative post-order over parents; reversed it is a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (p->backward_fn && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad().fill(1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

namespace op {

VarPtr conv2d(const VarPtr& x, const VarPtr& w, int stride, int padding) {
  const kernels::ConvDims dims = kernels::conv2d_dims(x->value.shape(), w->value.shape(), stride, padding);
  auto out = new_node(kernels::conv2d(x->value, w->value, stride, padding));
  if (recording({&x, &w})) {
    attach(out, {x, w}, [x, w, dims](Node& self) {
      if (x->requires_grad) accumulate(x, kernels::conv2d_grad_input(self.grad, w->value, dims));
      if (w->requires_grad) accumulate(w, kernels::conv2d_grad_weight(x->value, self.grad, dims));
    });
  }
  return out;
}

VarPtr conv_transpose2d(const VarPtr& x, const VarPtr& w, int stride, int padding) {
  const kernels::ConvDims dims =
      kernels::conv_transpose2d_dims(x->value.shape(), w->value.shape(), stride, padding);
  auto out = new_node(kernels::conv_transpose2d(x->value, w->value, stride, padding));
  if (recording({&x, &w})) {
    attach(out, {x, w}, [x, w, dims](Node& self) {
      if (x->requires_grad) accumulate(x, kernels::conv_transpose2d_grad_input(self.grad, w->value, dims));
      if (w->requires_grad) accumulate(w, kernels::conv_transpose2d_grad_weight(x->value, self.grad, dims));
    });
  }
  return out;
}

VarPtr concat_channels(const VarPtr& a, const VarPtr& b) {
  auto out = new_node(kernels::concat_channels(a->value, b->value));
  if (recording({&a, &b})) {
    const int ca = a->value.dim(1);
    const int cb = b->value.dim(1);
    attach(out, {a, b}, [a, b, ca, cb](Node& self) {
      if (a->requires_grad) accumulate(a, kernels::slice_channels(self.grad, 0, ca));
      if (b->requires_grad) accumulate(b, kernels::slice_channels(self.grad, ca, ca + cb));
    });
  }
  return out;
}

VarPtr activation(const VarPtr& x, Act kind, float leaky_slope) {
  if (kind == Act::leaky_relu && (leaky_slope <= 0.0f || leaky_slope >= 1.0f)) {
    throw DomainError("leaky_relu slope must be in (0,1)");
  }
  auto out = new_node(kernels::activation(x->value, kind, leaky_slope));
  if (recording({&x})) {
    attach(out, {x}, [x, kind, leaky_slope](Node& self) {
      accumulate(x, kernels::activation_grad(self.grad, x->value, self.value, kind, leaky_slope));
    });
  }
  return out;
}

VarPtr instance_norm(const VarPtr& x) {
  auto out = new_node(kernels::instance_norm(x->value));
  if (recording({&x})) {
    attach(out, {x}, [x](Node& self) {
      accumulate(x, kernels::instance_norm_grad(self.grad, x->value, self.value));
    });
  }
  return out;
}

VarPtr l1_loss(const VarPtr& pred, const VarPtr& target) {
  auto out = new_node(kernels::l1_loss(pred->value, target->value));
  if (recording({&pred, &target})) {
    attach(out, {pred, target}, [pred, target](Node& self) {
      const float up = self.grad[0];
      if (pred->requires_grad) {
        accumulate(pred, kernels::l1_loss_grad_pred(pred->value, target->value, up));
      }
      if (target->requires_grad) {
        accumulate(target, kernels::l1_loss_grad_pred(target->value, pred->value, up));
      }
    });
  }
  return out;
}

VarPtr bce_loss(const VarPtr& pred, const VarPtr& target) {
  auto out = new_node(kernels::bce_loss(pred->value, target->value));
  if (recording({&pred, &target})) {
    if (target->requires_grad) throw StateError("bce_loss target must not require gradients");
    attach(out, {pred, target}, [pred, target](Node& self) {
      accumulate(pred, kernels::bce_loss_grad_pred(pred->value, target->value, self.grad[0]));
    });
  }
  return out;
}

VarPtr add(const VarPtr& a, const VarPtr& b) {
  if (!a->value.same_shape(b->value)) {
    throw DimensionError("add shape mismatch: " + a->value.shape_str() + " vs " + b->value.shape_str());
  }
  Tensor v = a->value;
  v.add_(b->value);
  auto out = new_node(std::move(v));
  if (recording({&a, &b})) {
    attach(out, {a, b}, [a, b](Node& self) {
      accumulate(a, self.grad);
      accumulate(b, self.grad);
    });
  }
  return out;
}

VarPtr scale(const VarPtr& x, float factor) {
  Tensor v = x->value;
  v.scale_(factor);
  auto out = new_node(std::move(v));
  if (recording({&x})) {
    attach(out, {x}, [x, factor](Node& self) {
      Tensor g = self.grad;
      g.scale_(factor);
      accumulate(x, g);
    });
  }
  return out;
}

VarPtr sum(const VarPtr& x) {
  auto out = new_node(kernels::sum(x->value));
  if (recording({&x})) {
    attach(out, {x}, [x](Node& self) {
      accumulate(x, Tensor::full(x->value.shape(), self.grad[0]));
    });
  }
  return out;
}

}  // namespace op

}  // namespace condense
