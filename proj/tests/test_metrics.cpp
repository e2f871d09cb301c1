#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "helpers.hpp"
#include "oracles.hpp"
#include "vlt/metrics.hpp"

using namespace vlt::metrics;
using vlt::Rng;

namespace {

PredictionSet random_set(int64_t n, int64_t t, Rng& rng, double pos_rate = 0.4) {
  PredictionSet p;
  p.images = n;
  p.labels = t;
  p.scores.resize(static_cast<size_t>(n * t));
  p.truths.resize(static_cast<size_t>(n * t));
  for (size_t i = 0; i < p.scores.size(); ++i) {
    p.scores[i] = rng.uniform01();
    p.truths[i] = rng.uniform01() < pos_rate ? 1.0 : 0.0;
  }
  return p;
}

}  // namespace

TEST_CASE("average precision: perfect ranking, hand-ranked case, worst case") {
  CHECK(average_precision({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}) == Catch::Approx(1.0));
  CHECK(average_precision({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}) ==
        Catch::Approx((1.0 + 2.0 / 3.0) / 2.0).margin(1e-15));
  // single positive ranked below k negatives -> 1/(k+1)
  for (int k = 1; k <= 6; ++k) {
    std::vector<double> scores, truths;
    for (int i = 0; i < k; ++i) {
      scores.push_back(1.0 - 0.01 * i);
      truths.push_back(0.0);
    }
    scores.push_back(0.1);
    truths.push_back(1.0);
    CHECK(average_precision(scores, truths) == Catch::Approx(1.0 / (k + 1)).margin(1e-15));
  }
  CHECK_THROWS_AS(average_precision({0.5, 0.4}, {0, 0}), std::invalid_argument);
}

TEST_CASE("average precision ties break by ascending original index") {
  // equal scores: item 0 outranks item 1
  CHECK(average_precision({0.5, 0.5}, {1, 0}) == Catch::Approx(1.0));
  CHECK(average_precision({0.5, 0.5}, {0, 1}) == Catch::Approx(0.5));
}

TEST_CASE("AP is invariant under strictly monotone score transforms") {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> s(12), y(12);
    bool any = false;
    for (int i = 0; i < 12; ++i) {
      s[static_cast<size_t>(i)] = rng.uniform(-3.0, 3.0);
      y[static_cast<size_t>(i)] = rng.uniform01() < 0.4 ? 1.0 : 0.0;
      any = any || y[static_cast<size_t>(i)] == 1.0;
    }
    if (!any) y[0] = 1.0;
    double base = average_precision(s, y);
    std::vector<double> t1(s), t2(s);
    for (double& v : t1) v = std::tanh(v) * 0.2 + 7.0;
    for (double& v : t2) v = std::exp(0.5 * v);
    CHECK(average_precision(t1, y) == Catch::Approx(base).margin(1e-15));
    CHECK(average_precision(t2, y) == Catch::Approx(base).margin(1e-15));
  }
}

TEST_CASE("mean_ap: arithmetic mean, degenerate single class, skipped classes") {
  // two classes engineered to AP 1.0 and 0.5
  PredictionSet p;
  p.images = 2;
  p.labels = 2;
  p.scores = {0.9, 0.9, 0.1, 0.8};
  p.truths = {1, 0, 0, 1};
  // class 0: positives ranked first -> 1.0; class 1: positive at rank 2 -> 0.5
  MeanApResult r = mean_ap(p);
  CHECK(r.map == Catch::Approx(0.75).margin(1e-15));
  CHECK(r.skipped.empty());

  PredictionSet single;
  single.images = 3;
  single.labels = 1;
  single.scores = {0.2, 0.9, 0.5};
  single.truths = {1, 0, 0};
  CHECK(mean_ap(single).map ==
        Catch::Approx(average_precision({0.2, 0.9, 0.5}, {1, 0, 0})).margin(1e-15));

  PredictionSet with_empty;
  with_empty.images = 2;
  with_empty.labels = 2;
  with_empty.scores = {0.9, 0.4, 0.1, 0.6};
  with_empty.truths = {1, 0, 0, 0};
  MeanApResult r2 = mean_ap(with_empty);
  CHECK(r2.skipped == std::vector<int64_t>{1});
  CHECK(r2.map == Catch::Approx(1.0));
}

TEST_CASE("mean_ap matches the brute-force enumeration oracle") {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    PredictionSet p = random_set(10, 4, rng);
    for (int64_t t = 0; t < 4; ++t) {
      bool any = false;
      for (int64_t i = 0; i < 10; ++i) any = any || p.truth(i, t) == 1.0;
      if (!any) p.truths[static_cast<size_t>(t)] = 1.0;
    }
    double want = 0.0;
    for (int64_t t = 0; t < 4; ++t) {
      oracle::vec s(10), y(10);
      for (int64_t i = 0; i < 10; ++i) {
        s[static_cast<size_t>(i)] = p.score(i, t);
        y[static_cast<size_t>(i)] = p.truth(i, t);
      }
      want += oracle::ap_bruteforce(s, y);
    }
    want /= 4.0;
    CHECK(mean_ap(p).map == Catch::Approx(want).margin(1e-12));
  }
}

TEST_CASE("prf_suite: perfect predictor scores 1 everywhere") {
  Rng rng(9);
  PredictionSet p = random_set(6, 4, rng);
  for (size_t i = 0; i < p.scores.size(); ++i) p.scores[i] = p.truths[i] == 1.0 ? 0.9 : 0.1;
  // give every class one positive so no denominator is empty
  for (int64_t t = 0; t < 4; ++t) {
    p.truths[static_cast<size_t>(t)] = 1.0;
    p.scores[static_cast<size_t>(t)] = 0.9;
  }
  PrfResult r = prf_suite(p, PrfMode::threshold());
  CHECK(r.CP == 1.0);
  CHECK(r.CR == 1.0);
  CHECK(r.CF1 == 1.0);
  CHECK(r.OP == 1.0);
  CHECK(r.OR == 1.0);
  CHECK(r.OF1 == 1.0);
}

TEST_CASE("prf_suite top-2 example evaluates by enumeration") {
  // as-written instance: second image predicts labels {1,2}, first {0,1}
  PredictionSet p;
  p.images = 2;
  p.labels = 3;
  p.scores = {0.9, 0.6, 0.1, 0.2, 0.8, 0.7};
  p.truths = {1, 0, 0, 0, 1, 1};
  PrfResult r = prf_suite(p, PrfMode::top_k(2));
  oracle::PrfBrute want = oracle::prf_bruteforce(p.scores, p.truths, 2, 3, 2);
  CHECK(r.OP == Catch::Approx(want.op).margin(1e-15));
  CHECK(r.OR == Catch::Approx(want.orr).margin(1e-15));
  CHECK(r.OF1 == Catch::Approx(want.of1).margin(1e-15));
  // predicted positives {(0,0),(0,1),(1,1),(1,2)}, TP = 3 of 4 predictions,
  // and all 3 actual positives are recovered
  CHECK(r.OP == Catch::Approx(0.75).margin(1e-15));
  CHECK(r.OR == Catch::Approx(1.0).margin(1e-15));

  // same scores with a positive added at (0,2): OP = OR = OF1 = 0.75
  PredictionSet p2 = p;
  p2.truths = {1, 0, 1, 0, 1, 1};
  PrfResult r2 = prf_suite(p2, PrfMode::top_k(2));
  CHECK(r2.OP == Catch::Approx(0.75).margin(1e-15));
  CHECK(r2.OR == Catch::Approx(0.75).margin(1e-15));
  CHECK(r2.OF1 == Catch::Approx(0.75).margin(1e-15));
}

TEST_CASE("prf_suite: k = T recalls everything, k out of range throws") {
  Rng rng(15);
  PredictionSet p = random_set(5, 3, rng);
  for (int64_t i = 0; i < 5; ++i) p.truths[static_cast<size_t>(i * 3)] = 1.0;  // >= 1 positive each
  PrfResult r = prf_suite(p, PrfMode::top_k(3));
  CHECK(r.OR == 1.0);
  CHECK_THROWS_AS(prf_suite(p, PrfMode::top_k(4)), std::invalid_argument);
}

TEST_CASE("prf_suite matches the brute-force oracle on random instances") {
  Rng rng(321);
  for (int trial = 0; trial < 200; ++trial) {
    int64_t n = 3 + static_cast<int64_t>(rng.next_below(8));
    int64_t t = 2 + static_cast<int64_t>(rng.next_below(5));
    PredictionSet p = random_set(n, t, rng);
    for (int64_t k : {int64_t{-1}, int64_t{1}, std::min<int64_t>(2, t)}) {
      PrfResult got = k < 0 ? prf_suite(p, PrfMode::threshold()) : prf_suite(p, PrfMode::top_k(k));
      oracle::PrfBrute want = oracle::prf_bruteforce(p.scores, p.truths, n, t, k);
      CHECK(got.CP == Catch::Approx(want.cp).margin(1e-12));
      CHECK(got.CR == Catch::Approx(want.cr).margin(1e-12));
      CHECK(got.CF1 == Catch::Approx(want.cf1).margin(1e-12));
      CHECK(got.OP == Catch::Approx(want.op).margin(1e-12));
      CHECK(got.OR == Catch::Approx(want.orr).margin(1e-12));
      CHECK(got.OF1 == Catch::Approx(want.of1).margin(1e-12));

      // range and F1-vs-max properties
      for (double v : {got.CP, got.CR, got.CF1, got.OP, got.OR, got.OF1}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      CHECK(got.CF1 <= std::max(got.CP, got.CR) + 1e-15);
      CHECK(got.OF1 <= std::max(got.OP, got.OR) + 1e-15);
    }
  }
}

TEST_CASE("top-k marks exactly k labels per image with deterministic ties") {
  PredictionSet p;
  p.images = 2;
  p.labels = 4;
  p.scores = {0.5, 0.5, 0.5, 0.5, 0.3, 0.9, 0.3, 0.1};
  p.truths = {1, 1, 0, 0, 0, 1, 1, 0};
  PrfResult r = prf_suite(p, PrfMode::top_k(2));
  // image 0 ties: picks labels 0 and 1 -> both correct
  // image 1: picks 1 (0.9) then 0 (0.3 ties 2, lower index wins)
  CHECK(r.OP == Catch::Approx(3.0 / 4.0).margin(1e-15));
}

TEST_CASE("csv round trip preserves matrices and validates headers") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "vlt_metrics_csv_test";
  fs::create_directories(dir);
  Rng rng(55);
  PredictionSet p = random_set(7, 3, rng);
  std::string spath = (dir / "scores.csv").string();
  write_matrix_csv(spath, p.scores, p.images, p.labels);
  CsvMatrix back = read_matrix_csv(spath);
  REQUIRE(back.images == 7);
  REQUIRE(back.labels == 3);
  for (size_t i = 0; i < p.scores.size(); ++i) CHECK(back.values[i] == p.scores[i]);

  std::ofstream bad((dir / "bad.csv").string());
  bad << "id,label_0\n0,1\n";
  bad.close();
  CHECK_THROWS_AS(read_matrix_csv((dir / "bad.csv").string()), std::invalid_argument);
  fs::remove_all(dir);
}
