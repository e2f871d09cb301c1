#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vlt/container.hpp"
#include "vlt/ivla.hpp"
#include "vlt/modules.hpp"

namespace vlt {

// Stride-2 3x3 conv (padding 1, exact halving) followed by batch norm.
struct PatchEmbed {
  Conv2dLayer conv;
  BatchNormLayer bn;

  static PatchEmbed create(ParamStore& ps, const std::string& prefix, int64_t cin, int64_t cout,
                           Rng& rng) {
    PatchEmbed m;
    m.conv = Conv2dLayer::create(ps, prefix + ".conv", cin, cout, 3, 2, 1, 1, rng, false);
    m.bn = BatchNormLayer::create(ps, prefix + ".bn", cout, rng);
    return m;
  }

  Tensor forward(const Tensor& x, bool training) const {
    check(x.size(2) % 2 == 0 && x.size(3) % 2 == 0,
          "patch_embed: spatial size must be even, got " + shape_str(x.shape()));
    return bn.forward(conv.forward(x), training);
  }
};

using ScaleTransform = PatchEmbed;  // identical block between stages

// Maps label ids to a (B, C_v1, T) linguistic feature. The embedding table is
// either looked up directly, multiplied with an explicit one-hot matrix
// (same math, kept selectable), or loaded from a tensor container; a 1x1
// projection then aligns the width to the stage-1 channel count.
struct WordEmbed {
  EmbeddingKind kind = EmbeddingKind::LearnedTable;
  Tensor table;  // (C_l, T_vocab); a fixed buffer for the external kind
  ChannelLinearLayer proj;
  int64_t vocab = 0;

  static WordEmbed create(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg,
                          Rng& rng) {
    WordEmbed m;
    m.kind = cfg.embedding_kind;
    m.vocab = cfg.num_labels;
    int64_t cl = cfg.linguistic_input_channels;
    if (m.kind == EmbeddingKind::ExternalFile) {
      Tensor ext = load_tensor(cfg.embedding_file);
      check(ext.dim() == 2 && ext.size(0) == cl && ext.size(1) == cfg.num_labels,
            "word_embed: external table " + shape_str(ext.shape()) + " does not match (" +
                std::to_string(cl) + "," + std::to_string(cfg.num_labels) + ")");
      m.table = ps.create_buffer_from(prefix + ".table", ext);
    } else {
      m.table = ps.create(prefix + ".table", {cl, cfg.num_labels},
                          InitSpec::trunc_normal(kWeightInitStd), rng);
    }
    m.proj = ChannelLinearLayer::create(ps, prefix + ".proj", cl, cfg.stages[0].channels, rng);
    return m;
  }

  Tensor forward(const std::vector<int64_t>& label_ids, int64_t batch) const {
    check(!label_ids.empty(), "word_embed: empty label id list");
    std::vector<bool> seen(static_cast<size_t>(vocab), false);
    for (int64_t id : label_ids) {
      check(id >= 0 && id < vocab,
            "word_embed: unknown label id " + std::to_string(id) + " for vocabulary of " +
                std::to_string(vocab));
      check(!seen[static_cast<size_t>(id)], "word_embed: duplicate label id " + std::to_string(id));
      seen[static_cast<size_t>(id)] = true;
    }
    Tensor cols;
    if (kind == EmbeddingKind::OneHotProjected) {
      // table (C_l, V) times an explicit one-hot (V, T) selection matrix
      int64_t T = static_cast<int64_t>(label_ids.size());
      Tensor onehot = Tensor::zeros({vocab, T});
      for (int64_t t = 0; t < T; ++t) onehot.data()[label_ids[static_cast<size_t>(t)] * T + t] = 1.0;
      cols = matmul(table, onehot);
    } else {
      cols = gather_columns(table, label_ids);
    }
    Tensor l0 = reshape(cols, {1, cols.size(0), cols.size(1)});
    return repeat_batch(proj.forward(l0), batch);
  }
};

// 1x1 linear channel map aligning the linguistic width to the stage width.
using ChannelUnify = ChannelLinearLayer;

// One encoder block: pre-norm both streams, run the attention module, then
// V = Norm(V0 + V2), L = Norm(L0 + L2), S = Norm(L2). Norm is layer
// normalization over the channel axis.
struct InteractionBlock {
  LayerNormLayer norm_v_in, norm_l_in, norm_v_out, norm_l_out, norm_s;
  IvlaConfig icfg;
  IvlaParams ivla;

  static InteractionBlock create(ParamStore& ps, const std::string& prefix, const IvlaConfig& cfg,
                                 Rng& rng) {
    InteractionBlock m;
    m.icfg = cfg;
    int64_t c = cfg.channels;
    m.norm_v_in = LayerNormLayer::create(ps, prefix + ".norm_v_in", c, rng);
    m.norm_l_in = LayerNormLayer::create(ps, prefix + ".norm_l_in", c, rng);
    m.ivla = IvlaParams::create(ps, prefix + ".ivla", cfg, rng);
    m.norm_v_out = LayerNormLayer::create(ps, prefix + ".norm_v_out", c, rng);
    m.norm_l_out = LayerNormLayer::create(ps, prefix + ".norm_l_out", c, rng);
    m.norm_s = LayerNormLayer::create(ps, prefix + ".norm_s", c, rng);
    return m;
  }

  struct Out {
    Tensor v, l, s, att;
  };

  Out forward(const Tensor& v0, const Tensor& l0) const {
    IvlaOutput iv = ivla_forward(norm_v_in.forward(v0), norm_l_in.forward(l0), icfg, ivla);
    Out out;
    out.v = norm_v_out.forward(add(v0, iv.v));
    out.l = norm_l_out.forward(add(l0, iv.l));
    out.s = norm_s.forward(iv.l);
    out.att = iv.att;
    return out;
  }
};

struct AttDump {
  int stage = 0;  // 1-based
  int block = 0;  // 0-based
  Tensor att;
};

struct EncoderOutput {
  std::vector<Tensor> S;  // one multi-modal feature (B, C_i, T) per stage
  std::vector<Tensor> L;  // block-output linguistic feature per stage
  Tensor V4, L4;
  std::vector<AttDump> att;  // populated only when requested
};

struct EncoderStage {
  std::optional<PatchEmbed> patch;
  std::optional<WordEmbed> wembed;
  std::optional<ScaleTransform> down;
  std::optional<ChannelUnify> unify;
  std::vector<InteractionBlock> blocks;
};

// Four-stage pyramid: stage 1 embeds image and labels, stages 2..4 halve the
// spatial grid and re-align linguistic channels, then each stage chains its
// interaction blocks; a stage's S is the S of its final block.
struct Encoder {
  std::vector<EncoderStage> stages;

  static Encoder create(ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
    Encoder enc;
    for (size_t i = 0; i < cfg.stages.size(); ++i) {
      const StageConfig& sc = cfg.stages[i];
      std::string sp = "stage" + std::to_string(sc.index);
      EncoderStage st;
      if (i == 0) {
        st.patch = PatchEmbed::create(ps, sp + ".patch_embed", cfg.input_channels, sc.channels, rng);
        st.wembed = WordEmbed::create(ps, sp + ".word_embed", cfg, rng);
      } else {
        st.down = ScaleTransform::create(ps, sp + ".down", cfg.stages[i - 1].channels,
                                         sc.channels, rng);
        st.unify = ChannelUnify::create(ps, sp + ".unify", cfg.stages[i - 1].channels,
                                        sc.channels, rng);
      }
      for (int b = 0; b < sc.num_blocks; ++b)
        st.blocks.push_back(
            InteractionBlock::create(ps, sp + ".block" + std::to_string(b), sc.ivla, rng));
      enc.stages.push_back(std::move(st));
    }
    return enc;
  }

  EncoderOutput forward(const Tensor& image, const std::vector<int64_t>& label_ids, bool training,
                        bool collect_att = false) const {
    check(image.dim() == 4, "encoder: image must be (B,C,H,W), got " + shape_str(image.shape()));
    EncoderOutput out;
    Tensor v, l;
    for (size_t i = 0; i < stages.size(); ++i) {
      const EncoderStage& st = stages[i];
      if (i == 0) {
        v = st.patch->forward(image, training);
        l = st.wembed->forward(label_ids, image.size(0));
      } else {
        v = st.down->forward(v, training);
        l = st.unify->forward(l);
      }
      Tensor s;
      for (size_t b = 0; b < st.blocks.size(); ++b) {
        InteractionBlock::Out bo = st.blocks[b].forward(v, l);
        v = bo.v;
        l = bo.l;
        s = bo.s;
        if (collect_att)
          out.att.push_back({static_cast<int>(i) + 1, static_cast<int>(b), bo.att});
      }
      out.S.push_back(s);
      out.L.push_back(l);
    }
    out.V4 = v;
    out.L4 = l;
    return out;
  }
};

}  // namespace vlt
