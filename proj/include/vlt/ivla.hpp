#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "vlt/config.hpp"
#include "vlt/modules.hpp"
#include "vlt/ops.hpp"

namespace vlt {

// Interactive visual-linguistic attention. One shared cross-modal activation
// drives a linguistic fusion (attention-pooled visual features gate the label
// stream) and a visual fusion (label embeddings are scattered back onto the
// spatial grid next to a depthwise local branch); gate regulation merges both
// cross features into the residual streams.
struct IvlaParams {
  ChannelLinearLayer omega_v1;
  InstanceNormLayer omega_v1_norm;
  ChannelLinearLayer omega_v2;
  InstanceNormLayer omega_v2_norm;
  ChannelLinearLayer omega_l1, omega_l2, omega_l3;
  std::optional<Conv2dLayer> gconv;  // depthwise k x k, present iff use_gconv
  std::optional<GateLayer> gate_v, gate_l;

  static IvlaParams create(ParamStore& ps, const std::string& prefix, const IvlaConfig& cfg,
                           Rng& rng) {
    cfg.validate();
    IvlaParams p;
    int64_t c = cfg.channels;
    p.omega_v1 = ChannelLinearLayer::create(ps, prefix + ".omega_v1", c, c, rng, false);
    p.omega_v1_norm = InstanceNormLayer::create(ps, prefix + ".omega_v1.norm", c, rng);
    p.omega_v2 = ChannelLinearLayer::create(ps, prefix + ".omega_v2", c, c, rng, false);
    p.omega_v2_norm = InstanceNormLayer::create(ps, prefix + ".omega_v2.norm", c, rng);
    p.omega_l1 = ChannelLinearLayer::create(ps, prefix + ".omega_l1", c, c, rng);
    p.omega_l2 = ChannelLinearLayer::create(ps, prefix + ".omega_l2", c, c, rng);
    p.omega_l3 = ChannelLinearLayer::create(ps, prefix + ".omega_l3", c, c, rng);
    if (cfg.use_gconv) {
      int k = cfg.gconv_kernel;
      p.gconv = Conv2dLayer::create(ps, prefix + ".gconv", c, c, k, 1, (k - 1) / 2,
                                    static_cast<int>(c), rng);
    }
    if (cfg.use_v_gate) p.gate_v = GateLayer::create(ps, prefix + ".gate_v", c, rng);
    if (cfg.use_l_gate) p.gate_l = GateLayer::create(ps, prefix + ".gate_l", c, rng);
    return p;
  }

  // Visual-side projection: 1x1 conv + instance norm.
  Tensor proj_v1(const Tensor& v) const { return omega_v1_norm.forward(omega_v1.forward(v)); }
  Tensor proj_v2(const Tensor& v) const { return omega_v2_norm.forward(omega_v2.forward(v)); }
};

// Att = flatten(w_v1(V))^T w_l1(L) / sqrt(C), shape (B, H*W, T).
inline Tensor cross_modal_attention(const Tensor& V, const Tensor& L, const IvlaParams& p) {
  check(V.dim() == 4, "cross_modal_attention: V must be (B,C,H,W), got " + shape_str(V.shape()));
  check(L.dim() == 3, "cross_modal_attention: L must be (B,C,T), got " + shape_str(L.shape()));
  check(V.size(1) == L.size(1), "cross_modal_attention: channel mismatch " +
                                    shape_str(V.shape()) + " vs " + shape_str(L.shape()));
  int64_t C = V.size(1);
  Tensor vq = transpose_last2(flatten_spatial(p.proj_v1(V)));  // (B, HW, C)
  Tensor lk = p.omega_l1.forward(L);                           // (B, C, T)
  return scale(matmul(vq, lk), 1.0 / std::sqrt(static_cast<double>(C)));
}

// L_cross = w_l3(L) .* [flatten(w_v2(V)) . softmax_spatial(Att)]; the spatial
// softmax makes each label token a convex pooling over positions. Without the
// activation toggle the pooled feature passes through unmodulated.
inline Tensor interactive_linguistic_fusion(const Tensor& V, const Tensor& L, const Tensor& Att,
                                            const IvlaParams& p, bool use_l_act) {
  Tensor pooled = matmul(flatten_spatial(p.proj_v2(V)), softmax(Att, 1));  // (B, C, T)
  if (!use_l_act) return pooled;
  return mul(p.omega_l3.forward(L), pooled);
}

// V_cross = GConv(V) + unflatten((softmax_label(Att) . w_l2(L)^T)^T); the label
// softmax makes each position a convex pooling over label embeddings.
inline Tensor interactive_visual_fusion(const Tensor& V, const Tensor& L, const Tensor& Att,
                                        const IvlaParams& p, bool use_gconv) {
  int64_t H = V.size(2), W = V.size(3);
  Tensor lab = matmul(softmax(Att, 2), transpose_last2(p.omega_l2.forward(L)));  // (B, HW, C)
  Tensor vis = unflatten_spatial(transpose_last2(lab), H, W);
  if (!use_gconv) return vis;
  check(p.gconv.has_value(), "interactive_visual_fusion: gconv enabled but not constructed");
  return add(gelu(p.gconv->forward(V)), vis);
}

inline Tensor gate(const Tensor& x, const GateLayer& g) { return g.forward(x); }

// Enabled: X1 + X_cross .* Gate(X_cross); disabled: plain residual X1 + X_cross.
inline Tensor gate_regulation(const Tensor& x1, const Tensor& x_cross,
                              const std::optional<GateLayer>& g, bool enabled) {
  check_same_shape(x1, x_cross, "gate_regulation");
  if (!enabled) return add(x1, x_cross);
  check(g.has_value(), "gate_regulation: gate enabled but not constructed");
  return add(x1, mul(x_cross, g->forward(x_cross)));
}

struct IvlaOutput {
  Tensor v, l;
  Tensor att;  // raw activation (B, HW, T), pre-softmax, for inspection dumps
};

inline IvlaOutput ivla_forward(const Tensor& V1, const Tensor& L1, const IvlaConfig& cfg,
                               const IvlaParams& p) {
  check(V1.size(1) == cfg.channels && L1.size(1) == cfg.channels,
        "ivla_forward: configured channels " + std::to_string(cfg.channels) +
            " do not match inputs " + shape_str(V1.shape()) + " / " + shape_str(L1.shape()));
  IvlaOutput out;
  out.att = cross_modal_attention(V1, L1, p);
  Tensor v_cross = interactive_visual_fusion(V1, L1, out.att, p, cfg.use_gconv);
  Tensor l_cross = interactive_linguistic_fusion(V1, L1, out.att, p, cfg.use_l_act);
  out.v = gate_regulation(V1, v_cross, p.gate_v, cfg.use_v_gate);
  out.l = gate_regulation(L1, l_cross, p.gate_l, cfg.use_l_gate);
  return out;
}

}  // namespace vlt
