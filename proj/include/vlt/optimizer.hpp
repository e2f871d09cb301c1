#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vlt/params.hpp"
#include "vlt/tensor.hpp"

namespace vlt {

// Decoupled weight decay applied to the raw parameter before the moment
// update, bias-corrected first and second moments.
struct AdamW {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.01;
  std::vector<std::string> names;
  std::vector<Tensor> params;
  std::vector<std::vector<double>> m, v;
  int64_t step_count = 0;

  void init(const ParamStore& ps) {
    names = ps.trainable_names();
    params.clear();
    m.clear();
    v.clear();
    for (const std::string& n : names) {
      Tensor t = ps.get(n);
      params.push_back(t);
      m.emplace_back(static_cast<size_t>(t.numel()), 0.0);
      v.emplace_back(static_cast<size_t>(t.numel()), 0.0);
    }
  }

  void step(double lr) {
    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    double step_size = lr * std::sqrt(bc2) / bc1;
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor& p = params[i];
      if (!p.has_grad()) continue;
      const std::vector<double>& g = p.grad();
      double* d = p.data();
      std::vector<double>& mi = m[i];
      std::vector<double>& vi = v[i];
      for (size_t j = 0; j < g.size(); ++j) {
        d[j] -= lr * weight_decay * d[j];
        mi[j] = beta1 * mi[j] + (1.0 - beta1) * g[j];
        vi[j] = beta2 * vi[j] + (1.0 - beta2) * g[j] * g[j];
        d[j] -= step_size * mi[j] / (std::sqrt(vi[j]) + eps);
      }
    }
  }

  void zero_grad() {
    for (Tensor& p : params) p.zero_grad();
  }
};

// lr(step) = lr0 * (1 - step/total)^power
struct PolynomialDecay {
  double lr0 = 1e-3;
  double power = 0.9;
  int64_t total_steps = 1;

  double at(int64_t step) const {
    double p = static_cast<double>(step) / static_cast<double>(total_steps);
    if (p > 1.0) p = 1.0;
    return lr0 * std::pow(1.0 - p, power);
  }
};

// Divides the rate by 10 whenever the epoch loss has not improved for
// `patience` consecutive epochs.
struct PlateauDecay {
  double lr = 1e-3;
  int patience = 10;
  double min_delta = 1e-8;
  double best = 1e300;
  int stale = 0;

  void observe_epoch_loss(double loss) {
    if (loss < best - min_delta) {
      best = loss;
      stale = 0;
    } else if (++stale >= patience) {
      lr *= 0.1;
      stale = 0;
    }
  }
};

}  // namespace vlt
