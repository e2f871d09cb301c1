#pragma once

#include <cstdint>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace vlt {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

[[noreturn]] inline void fail(const std::string& msg) { throw std::invalid_argument(msg); }

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// Thread-local switch: while disabled, ops do not record the backward graph.
struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // allocated on first accumulation, same extent as data
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Pulls this node's grad into its parents' grads.
  std::function<void(TensorImpl&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Dense row-major tensor of 64-bit scalars with reverse-mode differentiation.
// Values are immutable once produced by an op; only grad buffers accumulate.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<TensorImpl>()) {
    check(numel_of(shape) == static_cast<int64_t>(data.size()),
          "tensor: shape " + shape_str(shape) + " does not match " +
              std::to_string(data.size()) + " scalars");
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  static Tensor zeros(Shape shape) {
    int64_t n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
  }

  static Tensor full(Shape shape, double value) {
    int64_t n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
  }

  static Tensor scalar(double value) { return Tensor(Shape{}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim() const { return static_cast<int>(impl_->shape.size()); }
  int64_t size(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& vec() { return impl_->data; }
  const std::vector<double>& vec() const { return impl_->data; }

  double item() const {
    check(numel() == 1, "item: tensor has shape " + shape_str(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    impl_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size(); }
  const std::vector<double>& grad() const {
    check(has_grad(), "grad: no gradient accumulated");
    return impl_->grad;
  }
  void zero_grad() {
    if (impl_) impl_->grad.assign(impl_->data.size(), 0.0);
  }
  void drop_grad() {
    if (impl_) impl_->grad.clear();
  }

  // Leaf copy of the values, detached from any recorded graph.
  Tensor detached() const { return Tensor(impl_->shape, impl_->data); }

  std::shared_ptr<TensorImpl>& impl() { return impl_; }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

  // Reverse-mode sweep from a scalar. Accumulates (+=) into grads of every
  // reachable tensor with requires_grad, so repeated calls add up.
  void backward() const {
    check(numel() == 1, "backward: loss must be scalar, got shape " + shape_str(shape()));
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    struct Frame {
      TensorImpl* node;
      size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({impl_.get(), 0});
    seen.insert(impl_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.node->parents.size()) {
        TensorImpl* p = f.node->parents[f.next++].get();
        if (p && p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
    // Interior nodes get a fresh buffer per sweep; only leaves accumulate
    // across calls.
    for (TensorImpl* n : order)
      if (n->backward_fn) n->grad.assign(n->data.size(), 0.0);
    impl_->ensure_grad();
    impl_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
  }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Assembles an op result: records parents and the backward closure only when
// grad mode is on and some input needs gradients.
inline Tensor make_op(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                      std::function<void(TensorImpl&)> bwd) {
  Tensor out(std::move(shape), std::move(data));
  if (!GradMode::enabled()) return out;
  bool need = false;
  for (const Tensor& t : inputs) {
    if (t.defined() && t.requires_grad()) {
      need = true;
      break;
    }
  }
  if (need) {
    out.impl()->requires_grad = true;
    for (const Tensor& t : inputs)
      if (t.defined()) out.impl()->parents.push_back(t.impl());
    out.impl()->backward_fn = std::move(bwd);
  }
  return out;
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.vec())
    if (!std::isfinite(v)) return false;
  return true;
}

// Thread-local multiply-accumulate counter fed by matmul / conv kernels.
struct MacCounter {
  static uint64_t& value() {
    thread_local uint64_t v = 0;
    return v;
  }
  static void add(uint64_t n) { value() += n; }
  static void reset() { value() = 0; }
};

}  // namespace vlt
