#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vlt/ops.hpp"
#include "vlt/tensor.hpp"

namespace vlt {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  int64_t coords_checked = 0;
  std::string worst;  // "input 2, coord 17" style locator for the max error
};

// Central-difference check of reverse-mode gradients. For every coordinate of
// every leaf in `inputs`, compares the analytic gradient against
// (f(x+he) - f(x-he)) / 2h with rel err = |a-n| / max(|a|,|n|,1e-8).
// Leaves are perturbed in place and restored; f must be scalar-valued.
inline GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                  std::vector<Tensor> inputs, double step = 1e-5,
                                  double tol = 1e-4) {
  for (Tensor& t : inputs) t.set_requires_grad(true);
  Tensor loss = f(inputs);
  check(loss.numel() == 1, "grad_check: f must be scalar-valued, got " + shape_str(loss.shape()));
  for (Tensor& t : inputs) t.zero_grad();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (Tensor& t : inputs) analytic.push_back(t.grad());

  GradCheckReport rep;
  NoGradGuard ng;
  for (size_t i = 0; i < inputs.size(); ++i) {
    double* d = inputs[i].data();
    for (int64_t j = 0; j < inputs[i].numel(); ++j) {
      double orig = d[j];
      d[j] = orig + step;
      double fp = f(inputs).item();
      d[j] = orig - step;
      double fm = f(inputs).item();
      d[j] = orig;
      double num = (fp - fm) / (2.0 * step);
      double a = analytic[i][static_cast<size_t>(j)];
      double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-8});
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = "input " + std::to_string(i) + ", coord " + std::to_string(j);
      }
      ++rep.coords_checked;
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace vlt
