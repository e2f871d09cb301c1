#pragma once

#include <functional>
#include <vector>

#include "oracles.hpp"
#include "vlt/encoder.hpp"
#include "vlt/gradcheck.hpp"
#include "vlt/ivla.hpp"
#include "vlt/params.hpp"
#include "vlt/rng.hpp"
#include "vlt/tensor.hpp"

namespace testutil {

inline vlt::Tensor random_tensor(vlt::Shape shape, vlt::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
  int64_t n = vlt::numel_of(shape);
  std::vector<double> d(static_cast<size_t>(n));
  for (double& v : d) v = rng.uniform(lo, hi);
  return vlt::Tensor(std::move(shape), std::move(d));
}

// Overwrites every trainable parameter with uniform values; keeps buffers.
inline void randomize_params(vlt::ParamStore& ps, vlt::Rng& rng, double lo = -0.6,
                             double hi = 0.6) {
  for (const std::string& name : ps.trainable_names()) {
    vlt::Tensor t = ps.get(name);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  }
}

inline void zero_params(vlt::ParamStore& ps) {
  for (const std::string& name : ps.trainable_names()) {
    vlt::Tensor t = ps.get(name);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = 0.0;
  }
}

inline oracle::IvlaWeights extract_ivla(const vlt::IvlaParams& p, const vlt::IvlaConfig& cfg) {
  oracle::IvlaWeights w;
  w.wv1 = p.omega_v1.w.vec();
  w.gv1 = p.omega_v1_norm.gamma.vec();
  w.bev1 = p.omega_v1_norm.beta.vec();
  w.wv2 = p.omega_v2.w.vec();
  w.gv2 = p.omega_v2_norm.gamma.vec();
  w.bev2 = p.omega_v2_norm.beta.vec();
  w.wl1 = p.omega_l1.w.vec();
  w.bl1 = p.omega_l1.b.vec();
  w.wl2 = p.omega_l2.w.vec();
  w.bl2 = p.omega_l2.b.vec();
  w.wl3 = p.omega_l3.w.vec();
  w.bl3 = p.omega_l3.b.vec();
  w.use_gconv = cfg.use_gconv;
  w.use_l_act = cfg.use_l_act;
  w.use_v_gate = cfg.use_v_gate;
  w.use_l_gate = cfg.use_l_gate;
  w.gk = cfg.gconv_kernel;
  if (p.gconv) {
    w.wg = p.gconv->w.vec();
    w.bg = p.gconv->b.vec();
  }
  if (p.gate_v) {
    w.gva_w = p.gate_v->conv_a.w.vec();
    w.gva_b = p.gate_v->conv_a.b.vec();
    w.gvb_w = p.gate_v->conv_b.w.vec();
    w.gvb_b = p.gate_v->conv_b.b.vec();
  }
  if (p.gate_l) {
    w.gla_w = p.gate_l->conv_a.w.vec();
    w.gla_b = p.gate_l->conv_a.b.vec();
    w.glb_w = p.gate_l->conv_b.w.vec();
    w.glb_b = p.gate_l->conv_b.b.vec();
  }
  return w;
}

inline oracle::BlockWeights extract_block(const vlt::InteractionBlock& b) {
  oracle::BlockWeights w;
  w.nvi_g = b.norm_v_in.gamma.vec();
  w.nvi_b = b.norm_v_in.beta.vec();
  w.nli_g = b.norm_l_in.gamma.vec();
  w.nli_b = b.norm_l_in.beta.vec();
  w.nvo_g = b.norm_v_out.gamma.vec();
  w.nvo_b = b.norm_v_out.beta.vec();
  w.nlo_g = b.norm_l_out.gamma.vec();
  w.nlo_b = b.norm_l_out.beta.vec();
  w.ns_g = b.norm_s.gamma.vec();
  w.ns_b = b.norm_s.beta.vec();
  w.ivla = extract_ivla(b.ivla, b.icfg);
  return w;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Central-difference check for large composites. Each coordinate must agree
// with the analytic gradient at one of the probe steps: truncation error
// shrinks with the step while the rounding floor grows, so a coordinate that
// fails both steps indicates a wrong backward rather than a discretization
// artifact.
inline vlt::GradCheckReport composite_grad_check(
    const std::function<vlt::Tensor(const std::vector<vlt::Tensor>&)>& f,
    std::vector<vlt::Tensor> inputs, double tol = 1e-4,
    std::vector<double> steps = {1e-4, 1e-5, 1e-3}) {
  using vlt::Tensor;
  for (Tensor& t : inputs) t.set_requires_grad(true);
  Tensor loss = f(inputs);
  for (Tensor& t : inputs) t.zero_grad();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (Tensor& t : inputs) analytic.push_back(t.grad());

  vlt::GradCheckReport rep;
  vlt::NoGradGuard ng;
  for (size_t i = 0; i < inputs.size(); ++i) {
    double* d = inputs[i].data();
    for (int64_t j = 0; j < inputs[i].numel(); ++j) {
      double a = analytic[i][static_cast<size_t>(j)];
      double best = 1e300;
      for (double h : steps) {
        double orig = d[j];
        d[j] = orig + h;
        double fp = f(inputs).item();
        d[j] = orig - h;
        double fm = f(inputs).item();
        d[j] = orig;
        double num = (fp - fm) / (2.0 * h);
        double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-8});
        best = std::min(best, rel);
        if (best <= tol) break;
      }
      if (best > rep.max_rel_err) {
        rep.max_rel_err = best;
        rep.worst = "input " + std::to_string(i) + ", coord " + std::to_string(j);
      }
      ++rep.coords_checked;
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace testutil
