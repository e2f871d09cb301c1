#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vlt/config.hpp"
#include "vlt/encoder.hpp"
#include "vlt/modules.hpp"
#include "vlt/ops.hpp"

namespace vlt {

inline constexpr double kNmfEps = 1e-6;

// One pair of multiplicative updates on X ~ D*C:
//   C <- C .* (D^T X) ./ (D^T D C + eps)
//   D <- D .* (X C^T) ./ (D C C^T + eps)   (with the refreshed C)
// Non-negative inputs stay non-negative and the Frobenius reconstruction
// error never increases. Accepts plain (C',n) factors or batched (B,...).
inline std::pair<Tensor, Tensor> nmf_step(const Tensor& X, const Tensor& D, const Tensor& C,
                                          double eps = kNmfEps) {
  for (double v : X.vec()) check(v >= 0.0, "nmf_step: X must be non-negative");
  for (double v : D.vec()) check(v >= 0.0, "nmf_step: D must be non-negative");
  for (double v : C.vec()) check(v >= 0.0, "nmf_step: C must be non-negative");
  Tensor Dt = transpose_last2(D);
  Tensor C1 = mul(C, div(matmul(Dt, X), add_scalar(matmul(matmul(Dt, D), C), eps)));
  Tensor Ct = transpose_last2(C1);
  Tensor D1 = mul(D, div(matmul(X, Ct), add_scalar(matmul(D, matmul(C1, Ct)), eps)));
  return {D1, C1};
}

// Global-context block: 1x1 lower bread, softplus shift to the non-negative
// cone, K unrolled factorization updates, reconstruction D*C, 1x1 upper
// bread, residual add. Gradients flow through the unrolled updates.
struct Hamburger {
  ChannelLinearLayer lower, upper;
  int rank = 8;
  int updates = 6;
  uint64_t bases_seed = 0;

  static Hamburger create(ParamStore& ps, const std::string& prefix, int64_t channels, int rank,
                          int updates, uint64_t bases_seed, Rng& rng) {
    Hamburger m;
    m.rank = rank;
    m.updates = updates;
    m.bases_seed = bases_seed;
    m.lower = ChannelLinearLayer::create(ps, prefix + ".lower", channels, channels, rng);
    m.upper = ChannelLinearLayer::create(ps, prefix + ".upper", channels, channels, rng);
    return m;
  }

  // Bases re-drawn from the dedicated stream on every call, so evaluation is
  // a pure function of (input, parameters, bases_seed).
  Tensor initial_bases(int64_t channels) const {
    Rng stream(Rng::derive(bases_seed, 0x68616dULL));
    std::vector<double> d(static_cast<size_t>(channels * rank));
    for (double& v : d) v = stream.uniform(0.1, 1.1);  // strictly positive
    return Tensor({channels, static_cast<int64_t>(rank)}, std::move(d));
  }

  Tensor forward(const Tensor& x) const {
    check(x.dim() == 3, "hamburger: input must be (B,C,T), got " + shape_str(x.shape()));
    int64_t B = x.size(0), C = x.size(1), T = x.size(2);
    Tensor z = softplus(lower.forward(x));
    Tensor D = repeat_batch(reshape(initial_bases(C), {1, C, static_cast<int64_t>(rank)}), B);
    Tensor Cf = Tensor::full({B, static_cast<int64_t>(rank), T}, 1.0 / static_cast<double>(rank));
    for (int k = 0; k < updates; ++k) {
      auto [d1, c1] = nmf_step(z, D, Cf);
      D = d1;
      Cf = c1;
    }
    return add(x, upper.forward(matmul(D, Cf)));
  }
};

// Classifier over the selected per-stage features.
//   concat_head_mlp: concat on channels -> hamburger -> 1x1 map to one logit per token
//   mlp_concat_mlp:  per-scale 1x1 maps to a common width -> concat -> final 1x1 map
//   s4_head_mlp:     hamburger on S4 alone -> 1x1 map
struct CsaHead {
  CsaConfig cfg;
  std::optional<Hamburger> ham;
  ChannelLinearLayer classifier;
  std::vector<ChannelLinearLayer> scale_mlps;  // mlp_concat_mlp only

  static CsaHead create(ParamStore& ps, const std::string& prefix, const ModelConfig& mc,
                        Rng& rng) {
    const CsaConfig& cc = mc.csa;
    cc.validate();
    CsaHead m;
    m.cfg = cc;
    std::vector<int64_t> widths = selected_widths(mc);
    switch (cc.effective_variant()) {
      case CsaVariant::ConcatHeadMlp: {
        int64_t total = 0;
        for (int64_t w : widths) total += w;
        m.ham = Hamburger::create(ps, prefix + ".ham", total, cc.ham_latent_rank, cc.ham_updates,
                                  mc.seed, rng);
        m.classifier = ChannelLinearLayer::create(ps, prefix + ".class", total, 1, rng);
        break;
      }
      case CsaVariant::MlpConcatMlp: {
        int64_t common = *std::max_element(widths.begin(), widths.end());
        for (size_t i = 0; i < widths.size(); ++i)
          m.scale_mlps.push_back(ChannelLinearLayer::create(
              ps, prefix + ".mlp" + std::to_string(i), widths[i], common, rng));
        m.classifier = ChannelLinearLayer::create(
            ps, prefix + ".class", common * static_cast<int64_t>(widths.size()), 1, rng);
        break;
      }
      case CsaVariant::S4HeadMlp: {
        int64_t c4 = mc.stages[3].channels;
        m.ham = Hamburger::create(ps, prefix + ".ham", c4, cc.ham_latent_rank, cc.ham_updates,
                                  mc.seed, rng);
        m.classifier = ChannelLinearLayer::create(ps, prefix + ".class", c4, 1, rng);
        break;
      }
    }
    return m;
  }

  // Channel widths of the concatenated selection, in feature order.
  static std::vector<int64_t> selected_widths(const ModelConfig& mc) {
    const CsaConfig& cc = mc.csa;
    if (cc.effective_variant() == CsaVariant::S4HeadMlp) return {mc.stages[3].channels};
    std::vector<int64_t> per_stage;
    for (int s : cc.stages_used) per_stage.push_back(mc.stages[static_cast<size_t>(s - 1)].channels);
    std::vector<int64_t> widths;
    if (cc.features == CsaFeatures::L || cc.features == CsaFeatures::SAndL)
      widths.insert(widths.end(), per_stage.begin(), per_stage.end());
    if (cc.features == CsaFeatures::S || cc.features == CsaFeatures::SAndL)
      widths.insert(widths.end(), per_stage.begin(), per_stage.end());
    return widths;
  }

  std::vector<Tensor> select(const std::vector<Tensor>& S, const std::vector<Tensor>& L) const {
    check(S.size() == 4 && L.size() == 4, "csa: expected 4 per-stage features");
    if (cfg.effective_variant() == CsaVariant::S4HeadMlp) return {S[3]};
    std::vector<Tensor> sel;
    if (cfg.features == CsaFeatures::L || cfg.features == CsaFeatures::SAndL)
      for (int s : cfg.stages_used) sel.push_back(L[static_cast<size_t>(s - 1)]);
    if (cfg.features == CsaFeatures::S || cfg.features == CsaFeatures::SAndL)
      for (int s : cfg.stages_used) sel.push_back(S[static_cast<size_t>(s - 1)]);
    check(!sel.empty(), "csa: empty feature selection");
    int64_t T = sel[0].size(2);
    for (const Tensor& t : sel)
      check(t.size(2) == T, "csa: selected features disagree on T, " + shape_str(t.shape()));
    return sel;
  }

  // Logits (B, T).
  Tensor forward(const std::vector<Tensor>& S, const std::vector<Tensor>& L) const {
    std::vector<Tensor> sel = select(S, L);
    Tensor logits3;
    switch (cfg.effective_variant()) {
      case CsaVariant::ConcatHeadMlp:
      case CsaVariant::S4HeadMlp: {
        Tensor x = sel.size() == 1 ? sel[0] : concat(sel, 1);
        logits3 = classifier.forward(ham->forward(x));
        break;
      }
      case CsaVariant::MlpConcatMlp: {
        std::vector<Tensor> mapped;
        for (size_t i = 0; i < sel.size(); ++i) mapped.push_back(scale_mlps[i].forward(sel[i]));
        logits3 = classifier.forward(concat(mapped, 1));
        break;
      }
    }
    return reshape(logits3, {logits3.size(0), logits3.size(2)});
  }
};

inline Tensor csa_classify(const std::vector<Tensor>& S, const std::vector<Tensor>& L,
                           const CsaHead& head) {
  return head.forward(S, L);
}

}  // namespace vlt
