#pragma once

#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "vlt/aggregation.hpp"
#include "vlt/config.hpp"
#include "vlt/encoder.hpp"

namespace vlt {

// Full classifier: joint vision-language encoder followed by the cross-scale
// aggregation head. The linguistic input is always the full label vocabulary.
struct Model {
  ModelConfig cfg;
  ParamStore params;
  Encoder encoder;
  CsaHead csa;

  static Model build(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    Rng rng(cfg.seed);
    m.encoder = Encoder::create(m.params, cfg, rng);
    m.csa = CsaHead::create(m.params, "csa", cfg, rng);
    return m;
  }

  std::vector<int64_t> all_label_ids() const {
    std::vector<int64_t> ids(static_cast<size_t>(cfg.num_labels));
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
  }

  Tensor forward(const Tensor& images, bool training, std::vector<AttDump>* att = nullptr) const {
    EncoderOutput eo = encoder.forward(images, all_label_ids(), training, att != nullptr);
    if (att) *att = std::move(eo.att);
    return csa.forward(eo.S, eo.L);
  }
};

inline Tensor model_forward(const Model& m, const Tensor& images, bool training,
                            std::vector<AttDump>* att = nullptr) {
  return m.forward(images, training, att);
}

struct CountReport {
  int64_t params = 0;
  uint64_t flops_per_image = 0;  // multiply-accumulate count of convs/matmuls
  std::map<std::string, int64_t> params_by_group;
};

// Exact parameter count by enumeration plus the MAC count of one no-grad
// forward at batch 1 and the configured resolution.
inline CountReport count_params_flops(const ModelConfig& cfg) {
  Model m = Model::build(cfg);
  CountReport rep;
  rep.params = m.params.total_params();
  for (const std::string& name : m.params.trainable_names()) {
    std::string group = name.substr(0, name.find('.'));
    rep.params_by_group[group] += m.params.get(name).numel();
  }
  NoGradGuard ng;
  Tensor image = Tensor::zeros({1, cfg.input_channels, cfg.image_height, cfg.image_width});
  MacCounter::reset();
  m.forward(image, /*training=*/false);
  rep.flops_per_image = MacCounter::value();
  MacCounter::reset();
  return rep;
}

inline std::string count_report_text(const CountReport& rep) {
  std::ostringstream os;
  os << "params: " << rep.params << '\n';
  os << "flops_per_image: " << rep.flops_per_image << '\n';
  for (const auto& [group, n] : rep.params_by_group) os << "params." << group << ": " << n << '\n';
  return os.str();
}

}  // namespace vlt
