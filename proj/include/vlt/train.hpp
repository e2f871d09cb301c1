#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <future>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "vlt/config.hpp"
#include "vlt/container.hpp"
#include "vlt/dataset.hpp"
#include "vlt/metrics.hpp"
#include "vlt/model.hpp"
#include "vlt/optimizer.hpp"

namespace vlt {

struct RunReport {
  std::map<std::string, std::string> config_echo;
  double map = 0.0;
  std::vector<int64_t> map_skipped;
  metrics::PrfResult all;
  metrics::PrfResult top3;
  int64_t params = 0;
  uint64_t flops_per_image = 0;
  double wall_time_s = 0.0;
  // score/truth dumps so every number can be recomputed offline
  int64_t images = 0, labels = 0;
  std::vector<double> scores, truth_dump;

  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "map: " << map << '\n';
    auto block = [&](const char* tag, const metrics::PrfResult& r) {
      os << tag << ".CP: " << r.CP << '\n'
         << tag << ".CR: " << r.CR << '\n'
         << tag << ".CF1: " << r.CF1 << '\n'
         << tag << ".OP: " << r.OP << '\n'
         << tag << ".OR: " << r.OR << '\n'
         << tag << ".OF1: " << r.OF1 << '\n';
    };
    block("all", all);
    block("top3", top3);
    os << "map_skipped_classes:";
    for (int64_t t : map_skipped) os << ' ' << t;
    os << '\n';
    os << "params: " << params << '\n';
    os << "flops_per_image: " << flops_per_image << '\n';
    os << "wall_time_s: " << wall_time_s << '\n';
    for (const auto& [k, v] : config_echo) os << "cfg." << k << ": " << v << '\n';
    return os.str();
  }
};

// Sigmoid scores over the whole dataset, then the full metric suite in
// threshold and top-3 regimes. An opt-in thread count splits batches across
// workers; forward is pure, but 32-bit callers should note that parallel
// reductions are only bit-stable because each image's scores are computed
// independently.
inline RunReport evaluate(const Model& model, const SyntheticDataset& ds, int64_t batch_size = 8,
                          int threads = 1) {
  auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  rep.config_echo = config_to_map(model.cfg);
  rep.images = ds.images;
  rep.labels = ds.labels;
  rep.scores.assign(static_cast<size_t>(ds.images * ds.labels), 0.0);
  rep.truth_dump = ds.truths;

  std::vector<std::vector<int64_t>> batches;
  for (int64_t start = 0; start < ds.images; start += batch_size) {
    std::vector<int64_t> idx;
    for (int64_t i = start; i < std::min(ds.images, start + batch_size); ++i) idx.push_back(i);
    batches.push_back(std::move(idx));
  }
  auto run_batch = [&](const std::vector<int64_t>& idx) {
    NoGradGuard ng;
    Tensor logits = model.forward(ds.image_batch(idx), /*training=*/false);
    Tensor probs = sigmoid(logits);
    for (size_t b = 0; b < idx.size(); ++b)
      for (int64_t t = 0; t < ds.labels; ++t)
        rep.scores[static_cast<size_t>(idx[b] * ds.labels + t)] =
            probs.data()[static_cast<int64_t>(b) * ds.labels + t];
  };
  if (threads <= 1) {
    for (const auto& idx : batches) run_batch(idx);
  } else {
    std::vector<std::future<void>> futs;
    std::atomic<size_t> next{0};
    for (int w = 0; w < threads; ++w)
      futs.push_back(std::async(std::launch::async, [&]() {
        for (;;) {
          size_t i = next.fetch_add(1);
          if (i >= batches.size()) return;
          run_batch(batches[i]);
        }
      }));
    for (auto& f : futs) f.get();
  }

  metrics::PredictionSet p;
  p.images = ds.images;
  p.labels = ds.labels;
  p.scores = rep.scores;
  p.truths = ds.truths;
  metrics::MeanApResult mar = metrics::mean_ap(p);
  rep.map = mar.map;
  rep.map_skipped = mar.skipped;
  rep.all = metrics::prf_suite(p, metrics::PrfMode::threshold());
  rep.top3 = metrics::prf_suite(p, metrics::PrfMode::top_k(std::min<int64_t>(3, ds.labels)));
  rep.params = model.params.total_params();
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

enum class LrSchedule { Polynomial, Plateau };

struct TrainOptions {
  int epochs = 300;
  int64_t batch_size = 8;
  double lr = 2e-3;
  double weight_decay = 0.01;
  LrSchedule schedule = LrSchedule::Polynomial;
  double poly_power = 0.9;
  int plateau_patience = 10;
  double early_stop_map = -1.0;  // <= 0 disables the gate
  int eval_every = 1;
  bool verbose = false;

  std::map<std::string, std::string> to_map() const {
    std::map<std::string, std::string> m;
    m["train_epochs"] = std::to_string(epochs);
    m["train_batch_size"] = std::to_string(batch_size);
    std::ostringstream lr_s, wd_s;
    lr_s.precision(17);
    lr_s << lr;
    wd_s.precision(17);
    wd_s << weight_decay;
    m["train_lr"] = lr_s.str();
    m["train_weight_decay"] = wd_s.str();
    m["train_schedule"] = schedule == LrSchedule::Polynomial ? "polynomial" : "plateau";
    return m;
  }

  static TrainOptions from_map(const std::map<std::string, std::string>& m) {
    TrainOptions o;
    if (auto it = m.find("train_epochs"); it != m.end()) o.epochs = std::stoi(it->second);
    if (auto it = m.find("train_batch_size"); it != m.end())
      o.batch_size = std::stoll(it->second);
    if (auto it = m.find("train_lr"); it != m.end()) o.lr = std::stod(it->second);
    if (auto it = m.find("train_weight_decay"); it != m.end())
      o.weight_decay = std::stod(it->second);
    if (auto it = m.find("train_schedule"); it != m.end())
      o.schedule = it->second == "plateau" ? LrSchedule::Plateau : LrSchedule::Polynomial;
    return o;
  }
};

// Epoch-local batch order: a pure function of (model seed, epoch), so a
// resumed run shuffles identically without carrying generator state.
inline std::vector<int64_t> epoch_order(uint64_t seed, int64_t epoch, int64_t n) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(Rng::derive(seed, 0xB0'0000 + static_cast<uint64_t>(epoch)));
  rng.shuffle(idx);
  return idx;
}

struct TrainState {
  Model model;
  AdamW optimizer;
  int64_t epoch = 0;  // next epoch to run
  std::vector<double> loss_history;
  int64_t total_steps = 0;  // planned, anchors the polynomial schedule
  double plateau_lr = 0.0;
  TrainOptions opts;
};

struct TrainResult {
  int epochs_run = 0;
  int epochs_to_gate = -1;  // first epoch index (1-based) whose eval hit the gate
  double final_map = 0.0;
  RunReport report;
};

inline int64_t steps_per_epoch(int64_t images, int64_t batch_size) {
  return (images + batch_size - 1) / batch_size;
}

// Runs epochs [state.epoch, opts.epochs), mutating the state in place.
// Deterministic in 64-bit single-threaded mode; aborts on a NaN loss.
inline TrainResult train_loop(TrainState& state, const SyntheticDataset& ds) {
  const TrainOptions& opts = state.opts;
  Model& model = state.model;
  check(ds.labels == model.cfg.num_labels, "train: dataset labels " + std::to_string(ds.labels) +
                                               " do not match config " +
                                               std::to_string(model.cfg.num_labels));
  if (state.optimizer.params.empty()) state.optimizer.init(model.params);
  state.optimizer.weight_decay = opts.weight_decay;
  if (state.total_steps == 0)
    state.total_steps = steps_per_epoch(ds.images, opts.batch_size) * opts.epochs;
  if (state.plateau_lr == 0.0) state.plateau_lr = opts.lr;
  PolynomialDecay poly{opts.lr, opts.poly_power, state.total_steps};
  PlateauDecay plateau;
  plateau.lr = state.plateau_lr;
  plateau.patience = opts.plateau_patience;

  TrainResult res;
  for (; state.epoch < opts.epochs; ++state.epoch) {
    std::vector<int64_t> order = epoch_order(model.cfg.seed, state.epoch, ds.images);
    double epoch_loss = 0.0;
    int64_t nb = 0;
    for (int64_t start = 0; start < ds.images; start += opts.batch_size) {
      std::vector<int64_t> idx(order.begin() + start,
                               order.begin() + std::min<int64_t>(ds.images, start + opts.batch_size));
      Tensor logits = model.forward(ds.image_batch(idx), /*training=*/true);
      Tensor loss = bce_with_logits(logits, ds.truth_batch(idx));
      double lval = loss.item();
      if (!std::isfinite(lval))
        throw std::runtime_error("training diverged: loss is not finite at step " +
                                 std::to_string(state.optimizer.step_count));
      state.optimizer.zero_grad();
      loss.backward();
      double lr = opts.schedule == LrSchedule::Polynomial
                      ? poly.at(state.optimizer.step_count)
                      : plateau.lr;
      state.optimizer.step(lr);
      state.loss_history.push_back(lval);
      epoch_loss += lval;
      ++nb;
    }
    epoch_loss /= static_cast<double>(nb);
    if (opts.schedule == LrSchedule::Plateau) {
      plateau.observe_epoch_loss(epoch_loss);
      state.plateau_lr = plateau.lr;
    }
    ++res.epochs_run;

    bool last = state.epoch + 1 >= opts.epochs;
    if ((state.epoch + 1) % opts.eval_every == 0 || last) {
      RunReport rep = evaluate(model, ds, opts.batch_size);
      res.final_map = rep.map;
      res.report = rep;
      if (opts.verbose)
        std::cout << "epoch " << (state.epoch + 1) << " loss " << epoch_loss << " mAP " << rep.map
                  << '\n';
      if (opts.early_stop_map > 0.0 && rep.map >= opts.early_stop_map &&
          res.epochs_to_gate < 0) {
        res.epochs_to_gate = static_cast<int>(state.epoch + 1);
        ++state.epoch;
        break;
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// checkpointing: every store entry plus optimizer moments in one archive,
// f64 payloads so the 64-bit state round-trips bit-exactly. The full config
// and train options ride along in the manifest, so evaluation needs nothing
// but the checkpoint file.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const std::string& path, const TrainState& state) {
  Archive ar;
  for (const auto& [k, v] : config_to_map(state.model.cfg)) ar.meta["cfg." + k] = v;
  for (const auto& [k, v] : state.opts.to_map()) ar.meta["opt." + k] = v;
  ar.meta["epoch"] = std::to_string(state.epoch);
  ar.meta["optim_step"] = std::to_string(state.optimizer.step_count);
  ar.meta["total_steps"] = std::to_string(state.total_steps);
  std::ostringstream plr;
  plr.precision(17);
  plr << state.plateau_lr;
  ar.meta["plateau_lr"] = plr.str();
  for (const std::string& name : state.model.params.names())
    ar.put(name, state.model.params.get(name));
  for (size_t i = 0; i < state.optimizer.names.size(); ++i) {
    Shape s = state.optimizer.params[i].shape();
    ar.put("optim.m." + state.optimizer.names[i], Tensor(s, state.optimizer.m[i]));
    ar.put("optim.v." + state.optimizer.names[i], Tensor(s, state.optimizer.v[i]));
  }
  save_archive(path, ar, kContainerF64);
}

inline TrainState load_checkpoint(const std::string& path) {
  Archive ar = load_archive(path);
  std::map<std::string, std::string> cfg_map, opt_map;
  for (const auto& [k, v] : ar.meta) {
    if (k.rfind("cfg.", 0) == 0) cfg_map[k.substr(4)] = v;
    if (k.rfind("opt.", 0) == 0) opt_map[k.substr(4)] = v;
  }
  TrainState state{Model::build(config_from_map(cfg_map))};
  state.opts = TrainOptions::from_map(opt_map);
  for (const std::string& name : state.model.params.names()) {
    const Tensor* t = ar.find(name);
    check(t != nullptr, "checkpoint: missing entry '" + name + "'");
    Tensor dst = state.model.params.get(name);
    check(t->shape() == dst.shape(), "checkpoint: shape mismatch for '" + name + "', stored " +
                                         shape_str(t->shape()) + " vs model " +
                                         shape_str(dst.shape()));
    std::copy(t->vec().begin(), t->vec().end(), dst.data());
  }
  state.optimizer.init(state.model.params);
  for (size_t i = 0; i < state.optimizer.names.size(); ++i) {
    const Tensor* m = ar.find("optim.m." + state.optimizer.names[i]);
    const Tensor* v = ar.find("optim.v." + state.optimizer.names[i]);
    if (m && v) {
      state.optimizer.m[i] = m->vec();
      state.optimizer.v[i] = v->vec();
    }
  }
  if (auto it = ar.meta.find("epoch"); it != ar.meta.end()) state.epoch = std::stoll(it->second);
  if (auto it = ar.meta.find("optim_step"); it != ar.meta.end())
    state.optimizer.step_count = std::stoll(it->second);
  if (auto it = ar.meta.find("total_steps"); it != ar.meta.end())
    state.total_steps = std::stoll(it->second);
  if (auto it = ar.meta.find("plateau_lr"); it != ar.meta.end())
    state.plateau_lr = std::stod(it->second);
  return state;
}

inline void write_report_files(const std::string& dir, const RunReport& rep) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream os(dir + "/report.txt");
  check(static_cast<bool>(os), "report: cannot write " + dir + "/report.txt");
  os << rep.to_text();
  metrics::write_matrix_csv(dir + "/scores.csv", rep.scores, rep.images, rep.labels);
  metrics::write_matrix_csv(dir + "/truths.csv", rep.truth_dump, rep.images, rep.labels);
}

}  // namespace vlt
