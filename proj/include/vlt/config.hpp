#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vlt/tensor.hpp"

namespace vlt {

struct IvlaConfig {
  int64_t channels = 0;
  int gconv_kernel = 7;
  bool use_gconv = true;
  bool use_l_act = true;
  bool use_v_gate = true;
  bool use_l_gate = true;

  void validate() const {
    check(gconv_kernel >= 1 && gconv_kernel % 2 == 1,
          "ivla: gconv_kernel must be odd and >= 1, got " + std::to_string(gconv_kernel));
    check(channels >= 1, "ivla: channels must be >= 1");
  }
};

struct StageConfig {
  int index = 1;  // 1..4
  int num_blocks = 1;
  int64_t channels = 0;
  IvlaConfig ivla;
};

enum class CsaVariant { ConcatHeadMlp, MlpConcatMlp, S4HeadMlp };
enum class CsaFeatures { S, L, SAndL };
enum class EmbeddingKind { LearnedTable, OneHotProjected, ExternalFile };

struct CsaConfig {
  CsaVariant variant = CsaVariant::ConcatHeadMlp;
  std::vector<int> stages_used = {1, 2, 3, 4};
  CsaFeatures features = CsaFeatures::S;
  int ham_latent_rank = 8;
  int ham_updates = 6;
  bool enabled = true;

  // Disabling falls back to the single-scale head on S4.
  CsaVariant effective_variant() const { return enabled ? variant : CsaVariant::S4HeadMlp; }

  void validate() const {
    check(!stages_used.empty(), "csa: stages_used must be nonempty");
    for (int s : stages_used) check(s >= 1 && s <= 4, "csa: stage index out of range");
    check(ham_latent_rank >= 1, "csa: ham_latent_rank must be >= 1");
    check(ham_updates >= 1, "csa: ham_updates must be >= 1");
  }
};

struct ModelConfig {
  int64_t image_height = 32;
  int64_t image_width = 32;
  int64_t input_channels = 3;
  int64_t num_labels = 5;
  int64_t linguistic_input_channels = 16;
  EmbeddingKind embedding_kind = EmbeddingKind::LearnedTable;
  std::string embedding_file;
  std::vector<StageConfig> stages;
  CsaConfig csa;
  uint64_t seed = 42;

  ModelConfig() {
    set_stages({1, 1, 2, 1}, {8, 16, 32, 64});
  }

  void set_stages(const std::vector<int>& blocks, const std::vector<int64_t>& channels) {
    check(blocks.size() == 4 && channels.size() == 4, "config: exactly 4 stages required");
    stages.clear();
    for (int i = 0; i < 4; ++i) {
      StageConfig s;
      s.index = i + 1;
      s.num_blocks = blocks[static_cast<size_t>(i)];
      s.channels = channels[static_cast<size_t>(i)];
      s.ivla.channels = s.channels;
      stages.push_back(s);
    }
  }

  void set_ivla_toggles(int kernel, bool gconv, bool l_act, bool v_gate, bool l_gate) {
    for (StageConfig& s : stages) {
      s.ivla.gconv_kernel = kernel;
      s.ivla.use_gconv = gconv;
      s.ivla.use_l_act = l_act;
      s.ivla.use_v_gate = v_gate;
      s.ivla.use_l_gate = l_gate;
    }
  }

  void validate() const {
    check(image_height % 16 == 0 && image_width % 16 == 0,
          "config: image size must be divisible by 16, got " + std::to_string(image_height) +
              "x" + std::to_string(image_width));
    check(num_labels >= 1, "config: num_labels must be >= 1");
    check(stages.size() == 4, "config: exactly 4 stages required");
    for (size_t i = 1; i < stages.size(); ++i)
      check(stages[i].channels > stages[i - 1].channels,
            "config: channels must strictly increase across stages");
    for (const StageConfig& s : stages) {
      check(s.num_blocks >= 1, "config: num_blocks must be >= 1");
      s.ivla.validate();
    }
    csa.validate();
    if (embedding_kind == EmbeddingKind::ExternalFile)
      check(!embedding_file.empty(), "config: embedding_file required for external_file kind");
  }

  // The paper-scale stage table: depths (3,3,27,3), channels (96,192,384,768),
  // 448x448 input, 768-wide linguistic input.
  static ModelConfig table1(int64_t num_labels) {
    ModelConfig cfg;
    cfg.image_height = cfg.image_width = 448;
    cfg.num_labels = num_labels;
    cfg.linguistic_input_channels = 768;
    cfg.set_stages({3, 3, 27, 3}, {96, 192, 384, 768});
    return cfg;
  }

  // Default desk-scale configuration; the full four-stage structure at toy size.
  static ModelConfig desk() { return ModelConfig(); }

  // Minimal shapes for finite-difference sweeps.
  static ModelConfig tiny() {
    ModelConfig cfg;
    cfg.image_height = cfg.image_width = 16;
    cfg.num_labels = 2;
    cfg.linguistic_input_channels = 4;
    cfg.set_stages({1, 1, 1, 1}, {2, 3, 4, 5});
    cfg.set_ivla_toggles(3, true, true, true, true);
    cfg.csa.ham_latent_rank = 2;
    cfg.csa.ham_updates = 3;
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// flat key/value config text
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(trim(item));
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail("config: bad boolean '" + v + "' for key " + key);
}

}  // namespace detail

inline std::string to_string(CsaVariant v) {
  switch (v) {
    case CsaVariant::ConcatHeadMlp: return "concat_head_mlp";
    case CsaVariant::MlpConcatMlp: return "mlp_concat_mlp";
    default: return "s4_head_mlp";
  }
}

inline std::string to_string(CsaFeatures f) {
  switch (f) {
    case CsaFeatures::S: return "S";
    case CsaFeatures::L: return "L";
    default: return "S_and_L";
  }
}

inline std::string to_string(EmbeddingKind k) {
  switch (k) {
    case EmbeddingKind::LearnedTable: return "learned_table";
    case EmbeddingKind::OneHotProjected: return "one_hot_projected";
    default: return "external_file";
  }
}

inline CsaVariant csa_variant_from(const std::string& s) {
  if (s == "concat_head_mlp") return CsaVariant::ConcatHeadMlp;
  if (s == "mlp_concat_mlp") return CsaVariant::MlpConcatMlp;
  if (s == "s4_head_mlp") return CsaVariant::S4HeadMlp;
  fail("config: unknown csa_variant '" + s + "'");
}

inline CsaFeatures csa_features_from(const std::string& s) {
  if (s == "S") return CsaFeatures::S;
  if (s == "L") return CsaFeatures::L;
  if (s == "S_and_L" || s == "L_and_S") return CsaFeatures::SAndL;
  fail("config: unknown csa_features '" + s + "'");
}

inline EmbeddingKind embedding_kind_from(const std::string& s) {
  if (s == "learned_table") return EmbeddingKind::LearnedTable;
  if (s == "one_hot_projected") return EmbeddingKind::OneHotProjected;
  if (s == "external_file") return EmbeddingKind::ExternalFile;
  fail("config: unknown embedding_kind '" + s + "'");
}

inline std::map<std::string, std::string> config_to_map(const ModelConfig& cfg) {
  std::map<std::string, std::string> m;
  m["image_height"] = std::to_string(cfg.image_height);
  m["image_width"] = std::to_string(cfg.image_width);
  m["input_channels"] = std::to_string(cfg.input_channels);
  m["num_labels"] = std::to_string(cfg.num_labels);
  m["linguistic_input_channels"] = std::to_string(cfg.linguistic_input_channels);
  m["embedding_kind"] = to_string(cfg.embedding_kind);
  if (!cfg.embedding_file.empty()) m["embedding_file"] = cfg.embedding_file;
  m["seed"] = std::to_string(cfg.seed);
  std::ostringstream blocks, channels;
  for (size_t i = 0; i < cfg.stages.size(); ++i) {
    if (i) {
      blocks << ',';
      channels << ',';
    }
    blocks << cfg.stages[i].num_blocks;
    channels << cfg.stages[i].channels;
  }
  m["stage_blocks"] = blocks.str();
  m["stage_channels"] = channels.str();
  const IvlaConfig& iv = cfg.stages[0].ivla;
  m["ivla_gconv_kernel"] = std::to_string(iv.gconv_kernel);
  m["ivla_use_gconv"] = iv.use_gconv ? "true" : "false";
  m["ivla_use_l_act"] = iv.use_l_act ? "true" : "false";
  m["ivla_use_v_gate"] = iv.use_v_gate ? "true" : "false";
  m["ivla_use_l_gate"] = iv.use_l_gate ? "true" : "false";
  m["csa_enabled"] = cfg.csa.enabled ? "true" : "false";
  m["csa_variant"] = to_string(cfg.csa.variant);
  std::ostringstream su;
  for (size_t i = 0; i < cfg.csa.stages_used.size(); ++i) {
    if (i) su << ',';
    su << cfg.csa.stages_used[i];
  }
  m["csa_stages_used"] = su.str();
  m["csa_features"] = to_string(cfg.csa.features);
  m["csa_ham_latent_rank"] = std::to_string(cfg.csa.ham_latent_rank);
  m["csa_ham_updates"] = std::to_string(cfg.csa.ham_updates);
  return m;
}

inline ModelConfig config_from_map(const std::map<std::string, std::string>& m) {
  ModelConfig cfg;
  std::vector<int> blocks = {1, 1, 2, 1};
  std::vector<int64_t> channels = {8, 16, 32, 64};
  auto get = [&](const std::string& key) -> const std::string* {
    auto it = m.find(key);
    return it == m.end() ? nullptr : &it->second;
  };
  if (auto* v = get("image_height")) cfg.image_height = std::stoll(*v);
  if (auto* v = get("image_width")) cfg.image_width = std::stoll(*v);
  if (auto* v = get("input_channels")) cfg.input_channels = std::stoll(*v);
  if (auto* v = get("num_labels")) cfg.num_labels = std::stoll(*v);
  if (auto* v = get("linguistic_input_channels")) cfg.linguistic_input_channels = std::stoll(*v);
  if (auto* v = get("embedding_kind")) cfg.embedding_kind = embedding_kind_from(*v);
  if (auto* v = get("embedding_file")) cfg.embedding_file = *v;
  if (auto* v = get("seed")) cfg.seed = std::stoull(*v);
  if (auto* v = get("stage_blocks")) {
    blocks.clear();
    for (const std::string& s : detail::split_csv(*v)) blocks.push_back(std::stoi(s));
  }
  if (auto* v = get("stage_channels")) {
    channels.clear();
    for (const std::string& s : detail::split_csv(*v)) channels.push_back(std::stoll(s));
  }
  cfg.set_stages(blocks, channels);
  IvlaConfig iv;
  if (auto* v = get("ivla_gconv_kernel")) iv.gconv_kernel = std::stoi(*v);
  if (auto* v = get("ivla_use_gconv")) iv.use_gconv = detail::parse_bool(*v, "ivla_use_gconv");
  if (auto* v = get("ivla_use_l_act")) iv.use_l_act = detail::parse_bool(*v, "ivla_use_l_act");
  if (auto* v = get("ivla_use_v_gate")) iv.use_v_gate = detail::parse_bool(*v, "ivla_use_v_gate");
  if (auto* v = get("ivla_use_l_gate")) iv.use_l_gate = detail::parse_bool(*v, "ivla_use_l_gate");
  cfg.set_ivla_toggles(iv.gconv_kernel, iv.use_gconv, iv.use_l_act, iv.use_v_gate, iv.use_l_gate);
  if (auto* v = get("csa_enabled")) cfg.csa.enabled = detail::parse_bool(*v, "csa_enabled");
  if (auto* v = get("csa_variant")) cfg.csa.variant = csa_variant_from(*v);
  if (auto* v = get("csa_stages_used")) {
    cfg.csa.stages_used.clear();
    for (const std::string& s : detail::split_csv(*v)) cfg.csa.stages_used.push_back(std::stoi(s));
  }
  if (auto* v = get("csa_features")) cfg.csa.features = csa_features_from(*v);
  if (auto* v = get("csa_ham_latent_rank")) cfg.csa.ham_latent_rank = std::stoi(*v);
  if (auto* v = get("csa_ham_updates")) cfg.csa.ham_updates = std::stoi(*v);
  cfg.validate();
  return cfg;
}

// "key = value" lines; '#' starts a comment. Unknown keys are returned in the
// extras map so callers (e.g. the trainer) can pick up their own settings.
inline std::map<std::string, std::string> parse_config_text(std::istream& is) {
  std::map<std::string, std::string> m;
  std::string line;
  while (std::getline(is, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    check(eq != std::string::npos, "config: expected 'key = value', got '" + line + "'");
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    m[key] = val;
  }
  return m;
}

inline std::map<std::string, std::string> load_config_map(const std::string& path) {
  std::ifstream is(path);
  check(static_cast<bool>(is), "config: cannot open " + path);
  return parse_config_text(is);
}

inline ModelConfig load_config(const std::string& path) {
  return config_from_map(load_config_map(path));
}

inline void save_config(const std::string& path, const ModelConfig& cfg,
                        const std::map<std::string, std::string>& extras = {}) {
  std::ofstream os(path);
  check(static_cast<bool>(os), "config: cannot open " + path + " for writing");
  for (const auto& [k, v] : config_to_map(cfg)) os << k << " = " << v << '\n';
  for (const auto& [k, v] : extras) os << k << " = " << v << '\n';
}

}  // namespace vlt
