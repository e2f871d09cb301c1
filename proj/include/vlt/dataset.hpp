#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "vlt/container.hpp"
#include "vlt/rng.hpp"
#include "vlt/tensor.hpp"

namespace vlt {

// Label-conditioned synthetic imagery. Each label owns a fixed motif whose
// scale class cycles through {whole-image wash, mid-size blob, small dot},
// so correct classification genuinely needs evidence from several spatial
// scales. Motif geometry and color depend only on (seed, label); per-image
// jitter and noise depend only on (seed, image index), which makes the whole
// dataset a pure function of the seed.
struct SyntheticDataset {
  int64_t images = 0, labels = 0, height = 0, width = 0;
  uint64_t seed = 0;
  std::vector<double> pixels;  // (N,3,H,W) row-major
  std::vector<double> truths;  // (N,T)

  double pixel(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return pixels[static_cast<size_t>(((n * 3 + c) * height + y) * width + x)];
  }

  Tensor image_batch(const std::vector<int64_t>& idx) const {
    int64_t B = static_cast<int64_t>(idx.size());
    int64_t per = 3 * height * width;
    std::vector<double> d(static_cast<size_t>(B * per));
    for (int64_t b = 0; b < B; ++b)
      std::copy(pixels.begin() + idx[static_cast<size_t>(b)] * per,
                pixels.begin() + (idx[static_cast<size_t>(b)] + 1) * per, d.begin() + b * per);
    return Tensor({B, 3, height, width}, std::move(d));
  }

  Tensor truth_batch(const std::vector<int64_t>& idx) const {
    int64_t B = static_cast<int64_t>(idx.size());
    std::vector<double> d(static_cast<size_t>(B * labels));
    for (int64_t b = 0; b < B; ++b)
      std::copy(truths.begin() + idx[static_cast<size_t>(b)] * labels,
                truths.begin() + (idx[static_cast<size_t>(b)] + 1) * labels, d.begin() + b * labels);
    return Tensor({B, labels}, std::move(d));
  }
};

namespace detail {

struct Motif {
  int kind = 0;            // 0 wash, 1 blob, 2 dot
  double cx = 0, cy = 0;   // center in [0,1]
  double dirx = 0, diry = 0;
  double color[3] = {0, 0, 0};
};

inline Motif label_motif(uint64_t seed, int64_t label) {
  Rng rng(Rng::derive(seed, 1000 + static_cast<uint64_t>(label)));
  Motif m;
  m.kind = static_cast<int>(label % 3);
  m.cx = rng.uniform(0.2, 0.8);
  m.cy = rng.uniform(0.2, 0.8);
  double ang = rng.uniform(0.0, 6.283185307179586);
  m.dirx = std::cos(ang);
  m.diry = std::sin(ang);
  for (double& c : m.color) c = rng.uniform(0.3, 1.0);
  return m;
}

}  // namespace detail

inline SyntheticDataset generate_dataset(uint64_t seed, int64_t images, int64_t labels,
                                         int64_t size) {
  check(images >= 1 && labels >= 1 && size >= 1, "dataset: sizes must be positive");
  SyntheticDataset ds;
  ds.images = images;
  ds.labels = labels;
  ds.height = ds.width = size;
  ds.seed = seed;
  ds.pixels.assign(static_cast<size_t>(images * 3 * size * size), 0.0);
  ds.truths.assign(static_cast<size_t>(images * labels), 0.0);

  // forced coverage: label k%T goes to image k%N for T*ceil(N/T) slots, so
  // every label appears in at least ceil(N/T) images
  int64_t per_label = (images + labels - 1) / labels;
  for (int64_t k = 0; k < labels * per_label; ++k)
    ds.truths[static_cast<size_t>((k % images) * labels + (k % labels))] = 1.0;

  std::vector<detail::Motif> motifs;
  for (int64_t t = 0; t < labels; ++t) motifs.push_back(detail::label_motif(seed, t));

  for (int64_t n = 0; n < images; ++n) {
    Rng rng(Rng::derive(seed, 2000 + static_cast<uint64_t>(n)));
    // random extra labels beyond the forced assignment
    for (int64_t t = 0; t < labels; ++t)
      if (rng.uniform01() < 0.25) ds.truths[static_cast<size_t>(n * labels + t)] = 1.0;

    double* img = ds.pixels.data() + n * 3 * size * size;
    for (int64_t i = 0; i < 3 * size * size; ++i) img[i] = rng.uniform(0.0, 0.08);

    for (int64_t t = 0; t < labels; ++t) {
      if (ds.truths[static_cast<size_t>(n * labels + t)] != 1.0) continue;
      const detail::Motif& m = motifs[static_cast<size_t>(t)];
      double amp = rng.uniform(0.8, 1.2);
      for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
          double fx = (static_cast<double>(x) + 0.5) / static_cast<double>(size);
          double fy = (static_cast<double>(y) + 0.5) / static_cast<double>(size);
          double v = 0.0;
          if (m.kind == 0) {
            // whole-image wash along a label-specific direction
            v = 0.25 * (1.0 + (fx - 0.5) * m.dirx + (fy - 0.5) * m.diry);
          } else {
            double r = m.kind == 1 ? 0.22 : 0.06;
            double dx = fx - m.cx, dy = fy - m.cy;
            v = std::exp(-(dx * dx + dy * dy) / (2.0 * r * r));
            if (v < 1e-4) continue;
          }
          for (int64_t c = 0; c < 3; ++c)
            img[(c * size + y) * size + x] += amp * m.color[c] * v;
        }
      }
    }
    // quantize through f32 so in-memory data equals a container round trip
    for (int64_t i = 0; i < 3 * size * size; ++i)
      img[i] = static_cast<double>(static_cast<float>(img[i]));
  }
  return ds;
}

inline void save_dataset(const std::string& dir, const SyntheticDataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_tensor(dir + "/images.hsvt",
              Tensor({ds.images, 3, ds.height, ds.width}, ds.pixels), kContainerF32);
  save_tensor(dir + "/truths.hsvt", Tensor({ds.images, ds.labels}, ds.truths), kContainerF32);
  std::ofstream meta(dir + "/meta.txt");
  check(static_cast<bool>(meta), "dataset: cannot write " + dir + "/meta.txt");
  meta << "seed = " << ds.seed << '\n'
       << "images = " << ds.images << '\n'
       << "labels = " << ds.labels << '\n'
       << "size = " << ds.height << '\n';
}

inline SyntheticDataset load_dataset(const std::string& dir) {
  Tensor images = load_tensor(dir + "/images.hsvt");
  Tensor truths = load_tensor(dir + "/truths.hsvt");
  check(images.dim() == 4 && images.size(1) == 3,
        "dataset: images must be (N,3,H,W), got " + shape_str(images.shape()));
  check(truths.dim() == 2 && truths.size(0) == images.size(0),
        "dataset: truths " + shape_str(truths.shape()) + " do not match images " +
            shape_str(images.shape()));
  SyntheticDataset ds;
  ds.images = images.size(0);
  ds.height = images.size(2);
  ds.width = images.size(3);
  ds.labels = truths.size(1);
  ds.pixels = images.vec();
  ds.truths = truths.vec();
  std::ifstream meta(dir + "/meta.txt");
  if (meta) {
    std::string line;
    while (std::getline(meta, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(0, eq);
      while (!key.empty() && key.back() == ' ') key.pop_back();
      if (key == "seed") ds.seed = std::stoull(line.substr(eq + 1));
    }
  }
  return ds;
}

}  // namespace vlt
