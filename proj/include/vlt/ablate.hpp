#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "vlt/dataset.hpp"
#include "vlt/train.hpp"

namespace vlt {

enum class AblationAxis { IvlaKernel, IvlaToggles, CsaVariant, CsaStages, CsaFeatures, Embedding };

inline AblationAxis ablation_axis_from(const std::string& s) {
  if (s == "ivla_kernel") return AblationAxis::IvlaKernel;
  if (s == "ivla_toggles") return AblationAxis::IvlaToggles;
  if (s == "csa_variant") return AblationAxis::CsaVariant;
  if (s == "csa_stages") return AblationAxis::CsaStages;
  if (s == "csa_features") return AblationAxis::CsaFeatures;
  if (s == "embedding") return AblationAxis::Embedding;
  fail("ablate: unknown axis '" + s +
       "' (expected ivla_kernel|ivla_toggles|csa_variant|csa_stages|csa_features|embedding)");
}

struct AblationRow {
  std::string name;
  ModelConfig cfg;
  RunReport report;
  double final_loss = 0.0;
  int epochs_run = 0;
};

// Enumerates exactly the studied rows for one axis on top of a base config.
// `scratch_dir` receives the generated embedding table for the external-file
// row of the embedding axis.
inline std::vector<std::pair<std::string, ModelConfig>> ablation_rows(
    AblationAxis axis, const ModelConfig& base, const std::string& scratch_dir) {
  std::vector<std::pair<std::string, ModelConfig>> rows;
  switch (axis) {
    case AblationAxis::IvlaKernel:
      for (int k : {3, 5, 7, 11}) {
        ModelConfig c = base;
        const IvlaConfig& iv = base.stages[0].ivla;
        c.set_ivla_toggles(k, iv.use_gconv, iv.use_l_act, iv.use_v_gate, iv.use_l_gate);
        rows.emplace_back(std::to_string(k) + "x" + std::to_string(k), c);
      }
      break;
    case AblationAxis::IvlaToggles: {
      struct Row {
        const char* name;
        bool g, la, vg, lg;
      };
      for (const Row& r : {Row{"G", true, false, false, false},
                           Row{"G+LA", true, true, false, false},
                           Row{"G+LA+VG", true, true, true, false},
                           Row{"G+LA+LG", true, true, false, true},
                           Row{"G+LA+VG+LG", true, true, true, true}}) {
        ModelConfig c = base;
        c.set_ivla_toggles(base.stages[0].ivla.gconv_kernel, r.g, r.la, r.vg, r.lg);
        rows.emplace_back(r.name, c);
      }
      break;
    }
    case AblationAxis::CsaVariant:
      for (CsaVariant v : {CsaVariant::S4HeadMlp, CsaVariant::MlpConcatMlp,
                           CsaVariant::ConcatHeadMlp}) {
        ModelConfig c = base;
        c.csa.enabled = true;
        c.csa.variant = v;
        rows.emplace_back(to_string(v), c);
      }
      break;
    case AblationAxis::CsaStages:
      for (const std::vector<int>& s :
           {std::vector<int>{4}, std::vector<int>{3, 4}, std::vector<int>{1, 2, 3},
            std::vector<int>{2, 3, 4}, std::vector<int>{1, 2, 3, 4}}) {
        ModelConfig c = base;
        c.csa.enabled = true;
        c.csa.variant = CsaVariant::ConcatHeadMlp;
        c.csa.stages_used = s;
        std::ostringstream name;
        name << "S{";
        for (size_t i = 0; i < s.size(); ++i) name << (i ? "," : "") << s[i];
        name << "}";
        rows.emplace_back(name.str(), c);
      }
      break;
    case AblationAxis::CsaFeatures:
      for (CsaFeatures f : {CsaFeatures::L, CsaFeatures::S, CsaFeatures::SAndL}) {
        ModelConfig c = base;
        c.csa.features = f;
        rows.emplace_back(to_string(f), c);
      }
      break;
    case AblationAxis::Embedding: {
      for (EmbeddingKind k :
           {EmbeddingKind::OneHotProjected, EmbeddingKind::LearnedTable,
            EmbeddingKind::ExternalFile}) {
        ModelConfig c = base;
        c.embedding_kind = k;
        if (k == EmbeddingKind::ExternalFile) {
          std::filesystem::create_directories(scratch_dir);
          std::string path = scratch_dir + "/external_embedding.hsvt";
          Rng rng(Rng::derive(base.seed, 0xE3BEDULL));
          std::vector<double> table(
              static_cast<size_t>(base.linguistic_input_channels * base.num_labels));
          for (double& v : table) v = rng.normal(0.0, 0.5);
          save_tensor(path, Tensor({base.linguistic_input_channels, base.num_labels}, table),
                      kContainerF64);
          c.embedding_file = path;
        }
        rows.emplace_back(to_string(k), c);
      }
      break;
    }
  }
  return rows;
}

// Trains and evaluates every row under the shared dataset and options, so
// differences between rows are attributable to the config alone.
inline std::vector<AblationRow> ablation_sweep(AblationAxis axis, const ModelConfig& base,
                                               const SyntheticDataset& ds,
                                               const TrainOptions& opts,
                                               const std::string& scratch_dir) {
  std::vector<AblationRow> out;
  for (auto& [name, cfg] : ablation_rows(axis, base, scratch_dir)) {
    TrainState state{Model::build(cfg)};
    state.opts = opts;
    TrainResult res = train_loop(state, ds);
    AblationRow row;
    row.name = name;
    row.cfg = cfg;
    row.report = res.report;
    row.final_loss = state.loss_history.empty() ? 0.0 : state.loss_history.back();
    row.epochs_run = res.epochs_run;
    out.push_back(std::move(row));
  }
  return out;
}

inline std::string ablation_markdown(const std::string& axis_name,
                                     const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "| " << axis_name << " | CF1 | OF1 | top3 CF1 | top3 OF1 | mAP |\n";
  os << "|---|---|---|---|---|---|\n";
  os.precision(4);
  os.setf(std::ios::fixed);
  for (const AblationRow& r : rows)
    os << "| " << r.name << " | " << r.report.all.CF1 << " | " << r.report.all.OF1 << " | "
       << r.report.top3.CF1 << " | " << r.report.top3.OF1 << " | " << r.report.map << " |\n";
  return os.str();
}

inline std::string ablation_csv(const std::string& axis_name,
                                const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "axis,row,CF1,OF1,top3_CF1,top3_OF1,mAP,final_loss,epochs\n";
  os.precision(10);
  for (const AblationRow& r : rows)
    os << axis_name << ',' << r.name << ',' << r.report.all.CF1 << ',' << r.report.all.OF1 << ','
       << r.report.top3.CF1 << ',' << r.report.top3.OF1 << ',' << r.report.map << ','
       << r.final_loss << ',' << r.epochs_run << '\n';
  return os.str();
}

}  // namespace vlt
