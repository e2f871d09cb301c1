#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "vlt/tensor.hpp"

namespace vlt::metrics {

// Scores and binary truths for N images over T labels, row-major.
struct PredictionSet {
  int64_t images = 0, labels = 0;
  std::vector<double> scores;
  std::vector<double> truths;

  double score(int64_t i, int64_t t) const { return scores[static_cast<size_t>(i * labels + t)]; }
  double truth(int64_t i, int64_t t) const { return truths[static_cast<size_t>(i * labels + t)]; }

  void validate() const {
    check(static_cast<int64_t>(scores.size()) == images * labels &&
              scores.size() == truths.size(),
          "predictions: size mismatch");
    for (double t : truths) check(t == 0.0 || t == 1.0, "predictions: truths must be binary");
  }
};

// Ranks by descending score with ties broken by ascending original index,
// then averages precision at each positive rank. Requires >= 1 positive.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<double>& truths) {
  check(scores.size() == truths.size(), "average_precision: size mismatch");
  int64_t n = static_cast<int64_t>(scores.size());
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
      return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    return a < b;
  });
  int64_t positives = 0;
  double acc = 0.0;
  for (int64_t rank = 0; rank < n; ++rank) {
    if (truths[static_cast<size_t>(order[static_cast<size_t>(rank)])] == 1.0) {
      ++positives;
      acc += static_cast<double>(positives) / static_cast<double>(rank + 1);
    }
  }
  check(positives > 0, "average_precision: no positive example");
  return acc / static_cast<double>(positives);
}

struct MeanApResult {
  double map = 0.0;
  std::vector<int64_t> skipped;  // classes without positives, excluded from the mean
};

inline MeanApResult mean_ap(const PredictionSet& p) {
  p.validate();
  MeanApResult r;
  double acc = 0.0;
  int64_t counted = 0;
  for (int64_t t = 0; t < p.labels; ++t) {
    std::vector<double> s(static_cast<size_t>(p.images)), y(static_cast<size_t>(p.images));
    bool any = false;
    for (int64_t i = 0; i < p.images; ++i) {
      s[static_cast<size_t>(i)] = p.score(i, t);
      y[static_cast<size_t>(i)] = p.truth(i, t);
      any = any || y[static_cast<size_t>(i)] == 1.0;
    }
    if (!any) {
      r.skipped.push_back(t);
      continue;
    }
    acc += average_precision(s, y);
    ++counted;
  }
  check(counted > 0, "mean_ap: no class has a positive example");
  r.map = acc / static_cast<double>(counted);
  return r;
}

struct PrfMode {
  enum Kind { Threshold05, TopK } kind = Threshold05;
  int64_t k = 3;

  static PrfMode threshold() { return {Threshold05, 0}; }
  static PrfMode top_k(int64_t k) { return {TopK, k}; }
};

struct PrfResult {
  double CP = 0, CR = 0, CF1 = 0, OP = 0, OR = 0, OF1 = 0;
  std::vector<int64_t> cp_skipped;  // classes with no predicted positives
  std::vector<int64_t> cr_skipped;  // classes with no actual positives
};

inline double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// Threshold mode marks score > 0.5 positive (strict); top-k marks each
// image's k highest-scored labels, ties broken by ascending label index.
// CP/CR average per-class ratios over classes with defined denominators;
// OP/OR pool every decision.
inline PrfResult prf_suite(const PredictionSet& p, PrfMode mode) {
  p.validate();
  if (mode.kind == PrfMode::TopK)
    check(mode.k >= 1 && mode.k <= p.labels,
          "prf_suite: k=" + std::to_string(mode.k) + " must be in [1, T]");
  std::vector<char> pred(static_cast<size_t>(p.images * p.labels), 0);
  if (mode.kind == PrfMode::Threshold05) {
    for (size_t i = 0; i < pred.size(); ++i) pred[i] = p.scores[i] > 0.5 ? 1 : 0;
  } else {
    for (int64_t i = 0; i < p.images; ++i) {
      std::vector<int64_t> order(static_cast<size_t>(p.labels));
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        if (p.score(i, a) != p.score(i, b)) return p.score(i, a) > p.score(i, b);
        return a < b;
      });
      for (int64_t r = 0; r < mode.k; ++r)
        pred[static_cast<size_t>(i * p.labels + order[static_cast<size_t>(r)])] = 1;
    }
  }

  PrfResult res;
  int64_t tp_all = 0, pred_all = 0, truth_all = 0;
  double cp_acc = 0.0, cr_acc = 0.0;
  int64_t cp_classes = 0, cr_classes = 0;
  for (int64_t t = 0; t < p.labels; ++t) {
    int64_t tp = 0, predicted = 0, actual = 0;
    for (int64_t i = 0; i < p.images; ++i) {
      bool pr = pred[static_cast<size_t>(i * p.labels + t)] != 0;
      bool tr = p.truth(i, t) == 1.0;
      tp += (pr && tr) ? 1 : 0;
      predicted += pr ? 1 : 0;
      actual += tr ? 1 : 0;
    }
    tp_all += tp;
    pred_all += predicted;
    truth_all += actual;
    if (predicted > 0) {
      cp_acc += static_cast<double>(tp) / static_cast<double>(predicted);
      ++cp_classes;
    } else {
      res.cp_skipped.push_back(t);
    }
    if (actual > 0) {
      cr_acc += static_cast<double>(tp) / static_cast<double>(actual);
      ++cr_classes;
    } else {
      res.cr_skipped.push_back(t);
    }
  }
  res.CP = cp_classes > 0 ? cp_acc / static_cast<double>(cp_classes) : 0.0;
  res.CR = cr_classes > 0 ? cr_acc / static_cast<double>(cr_classes) : 0.0;
  res.CF1 = f1_of(res.CP, res.CR);
  res.OP = pred_all > 0 ? static_cast<double>(tp_all) / static_cast<double>(pred_all) : 0.0;
  res.OR = truth_all > 0 ? static_cast<double>(tp_all) / static_cast<double>(truth_all) : 0.0;
  res.OF1 = f1_of(res.OP, res.OR);
  return res;
}

// ---------------------------------------------------------------------------
// CSV: header "image_id,label_0,...,label_{T-1}", one row per image.
// ---------------------------------------------------------------------------

inline void write_matrix_csv(const std::string& path, const std::vector<double>& m,
                             int64_t images, int64_t labels) {
  std::ofstream os(path);
  check(static_cast<bool>(os), "csv: cannot open " + path + " for writing");
  os << "image_id";
  for (int64_t t = 0; t < labels; ++t) os << ",label_" << t;
  os << '\n';
  os.precision(17);
  for (int64_t i = 0; i < images; ++i) {
    os << i;
    for (int64_t t = 0; t < labels; ++t) os << ',' << m[static_cast<size_t>(i * labels + t)];
    os << '\n';
  }
  check(static_cast<bool>(os), "csv: write failed for " + path);
}

struct CsvMatrix {
  int64_t images = 0, labels = 0;
  std::vector<double> values;
};

inline CsvMatrix read_matrix_csv(const std::string& path) {
  std::ifstream is(path);
  check(static_cast<bool>(is), "csv: cannot open " + path);
  std::string line;
  check(static_cast<bool>(std::getline(is, line)), "csv: missing header in " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::istringstream hs(line);
  std::string col;
  check(std::getline(hs, col, ',') && col == "image_id",
        "csv: header must start with image_id, got '" + col + "'");
  int64_t labels = 0;
  while (std::getline(hs, col, ',')) {
    check(col == "label_" + std::to_string(labels), "csv: unexpected header column '" + col + "'");
    ++labels;
  }
  check(labels > 0, "csv: no label columns in " + path);
  CsvMatrix m;
  m.labels = labels;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    check(static_cast<bool>(std::getline(ls, cell, ',')), "csv: bad row in " + path);
    for (int64_t t = 0; t < labels; ++t) {
      check(static_cast<bool>(std::getline(ls, cell, ',')), "csv: short row in " + path);
      m.values.push_back(std::stod(cell));
    }
    ++m.images;
  }
  return m;
}

}  // namespace vlt::metrics
