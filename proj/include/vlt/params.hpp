#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vlt/rng.hpp"
#include "vlt/tensor.hpp"

namespace vlt {

struct InitSpec {
  enum Kind { Zeros, Ones, Uniform, TruncNormal } kind = Zeros;
  double value = 0.0;  // half-width for Uniform, stddev for TruncNormal

  static InitSpec zeros() { return {Zeros, 0.0}; }
  static InitSpec ones() { return {Ones, 0.0}; }
  static InitSpec uniform(double a) { return {Uniform, a}; }
  static InitSpec trunc_normal(double stddev) { return {TruncNormal, stddev}; }
};

// Named parameter registry. Names encode the module path
// (e.g. "stage2.block0.ivla.omega_v1.weight") so checkpoints round-trip by
// name. Creation order is recorded; with a fixed seed the init stream is a
// pure function of that order.
class ParamStore {
 public:
  Tensor create(const std::string& name, Shape shape, InitSpec init, Rng& rng) {
    Tensor t = materialize(std::move(shape), init, rng);
    t.set_requires_grad(true);
    insert(name, t, true);
    return t;
  }

  Tensor create_buffer(const std::string& name, Shape shape, double fill) {
    Tensor t = Tensor::full(std::move(shape), fill);
    insert(name, t, false);
    return t;
  }

  Tensor create_buffer_from(const std::string& name, Tensor t) {
    insert(name, t, false);
    return t;
  }

  const std::vector<std::string>& names() const { return order_; }

  bool has(const std::string& name) const { return by_name_.count(name) != 0; }

  Tensor get(const std::string& name) const {
    auto it = by_name_.find(name);
    check(it != by_name_.end(), "params: unknown name '" + name + "'");
    return it->second;
  }

  bool is_trainable(const std::string& name) const {
    auto it = trainable_.find(name);
    return it != trainable_.end() && it->second;
  }

  std::vector<Tensor> trainable() const {
    std::vector<Tensor> out;
    for (const std::string& n : order_)
      if (is_trainable(n)) out.push_back(by_name_.at(n));
    return out;
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const std::string& n : order_)
      if (is_trainable(n)) out.push_back(n);
    return out;
  }

  int64_t total_params(const std::string& prefix = "") const {
    int64_t n = 0;
    for (const std::string& name : order_)
      if (is_trainable(name) && name.rfind(prefix, 0) == 0) n += by_name_.at(name).numel();
    return n;
  }

  void zero_grads() {
    for (const std::string& n : order_)
      if (is_trainable(n)) by_name_.at(n).zero_grad();
  }

 private:
  Tensor materialize(Shape shape, InitSpec init, Rng& rng) {
    int64_t n = numel_of(shape);
    std::vector<double> data(static_cast<size_t>(n));
    switch (init.kind) {
      case InitSpec::Zeros: break;
      case InitSpec::Ones:
        for (double& v : data) v = 1.0;
        break;
      case InitSpec::Uniform:
        for (double& v : data) v = rng.uniform(-init.value, init.value);
        break;
      case InitSpec::TruncNormal:
        for (double& v : data) v = rng.truncated_normal(init.value);
        break;
    }
    return Tensor(std::move(shape), std::move(data));
  }

  void insert(const std::string& name, const Tensor& t, bool trainable) {
    check(!by_name_.count(name), "params: duplicate name '" + name + "'");
    by_name_.emplace(name, t);
    trainable_[name] = trainable;
    order_.push_back(name);
  }

  std::vector<std::string> order_;
  std::map<std::string, Tensor> by_name_;
  std::map<std::string, bool> trainable_;
};

}  // namespace vlt
