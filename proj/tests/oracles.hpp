// Test-only dense reference routines. Every function here recomputes the
// model math with plain loops over raw arrays, independent of the library's
// op implementations, so the two can be compared as separate routes.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

using vec = std::vector<double>;

// --- plain building blocks ---------------------------------------------------

// y[b,o,p] = bias[o] + sum_c w[o,c] * x[b,c,p]
inline vec chanmap(const vec& x, int64_t B, int64_t C, int64_t P, const vec& w, const vec& bias,
                   int64_t Co) {
  vec y(static_cast<size_t>(B * Co * P), 0.0);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < Co; ++o)
      for (int64_t p = 0; p < P; ++p) {
        double acc = bias.empty() ? 0.0 : bias[static_cast<size_t>(o)];
        for (int64_t c = 0; c < C; ++c)
          acc += w[static_cast<size_t>(o * C + c)] * x[static_cast<size_t>((b * C + c) * P + p)];
        y[static_cast<size_t>((b * Co + o) * P + p)] = acc;
      }
  return y;
}

// per (b,c) slice over P positions
inline vec inorm(const vec& x, int64_t B, int64_t C, int64_t P, const vec& gamma, const vec& beta,
                 double eps) {
  vec y(x.size());
  for (int64_t s = 0; s < B * C; ++s) {
    double m = 0.0;
    for (int64_t p = 0; p < P; ++p) m += x[static_cast<size_t>(s * P + p)];
    m /= static_cast<double>(P);
    double var = 0.0;
    for (int64_t p = 0; p < P; ++p) {
      double d = x[static_cast<size_t>(s * P + p)] - m;
      var += d * d;
    }
    var /= static_cast<double>(P);
    double inv = 1.0 / std::sqrt(var + eps);
    int64_t c = s % C;
    double g = gamma.empty() ? 1.0 : gamma[static_cast<size_t>(c)];
    double bt = beta.empty() ? 0.0 : beta[static_cast<size_t>(c)];
    for (int64_t p = 0; p < P; ++p)
      y[static_cast<size_t>(s * P + p)] = g * (x[static_cast<size_t>(s * P + p)] - m) * inv + bt;
  }
  return y;
}

// per (b,p) slice over C channels of a (B,C,P) block
inline vec lnorm_channels(const vec& x, int64_t B, int64_t C, int64_t P, const vec& gamma,
                          const vec& beta, double eps) {
  vec y(x.size());
  for (int64_t b = 0; b < B; ++b)
    for (int64_t p = 0; p < P; ++p) {
      double m = 0.0;
      for (int64_t c = 0; c < C; ++c) m += x[static_cast<size_t>((b * C + c) * P + p)];
      m /= static_cast<double>(C);
      double var = 0.0;
      for (int64_t c = 0; c < C; ++c) {
        double d = x[static_cast<size_t>((b * C + c) * P + p)] - m;
        var += d * d;
      }
      var /= static_cast<double>(C);
      double inv = 1.0 / std::sqrt(var + eps);
      for (int64_t c = 0; c < C; ++c) {
        size_t i = static_cast<size_t>((b * C + c) * P + p);
        double g = gamma.empty() ? 1.0 : gamma[static_cast<size_t>(c)];
        double bt = beta.empty() ? 0.0 : beta[static_cast<size_t>(c)];
        y[i] = g * (x[i] - m) * inv + bt;
      }
    }
  return y;
}

// softmax over axis 1 (p) or axis 2 (t) of a (B,P,T) block
inline vec softmax3(const vec& x, int64_t B, int64_t P, int64_t T, int axis) {
  vec y(x.size());
  if (axis == 1) {
    for (int64_t b = 0; b < B; ++b)
      for (int64_t t = 0; t < T; ++t) {
        double mx = -1e300;
        for (int64_t p = 0; p < P; ++p)
          mx = std::max(mx, x[static_cast<size_t>((b * P + p) * T + t)]);
        double s = 0.0;
        for (int64_t p = 0; p < P; ++p)
          s += std::exp(x[static_cast<size_t>((b * P + p) * T + t)] - mx);
        for (int64_t p = 0; p < P; ++p) {
          size_t i = static_cast<size_t>((b * P + p) * T + t);
          y[i] = std::exp(x[i] - mx) / s;
        }
      }
  } else {
    for (int64_t b = 0; b < B; ++b)
      for (int64_t p = 0; p < P; ++p) {
        double mx = -1e300;
        for (int64_t t = 0; t < T; ++t)
          mx = std::max(mx, x[static_cast<size_t>((b * P + p) * T + t)]);
        double s = 0.0;
        for (int64_t t = 0; t < T; ++t)
          s += std::exp(x[static_cast<size_t>((b * P + p) * T + t)] - mx);
        for (int64_t t = 0; t < T; ++t) {
          size_t i = static_cast<size_t>((b * P + p) * T + t);
          y[i] = std::exp(x[i] - mx) / s;
        }
      }
  }
  return y;
}

inline double gelu1(double x) { return x * 0.5 * (1.0 + std::erf(x * 0.70710678118654752440)); }

inline vec depthwise_conv(const vec& x, int64_t B, int64_t C, int64_t H, int64_t W, const vec& w,
                          const vec& bias, int64_t k) {
  int64_t pad = (k - 1) / 2;
  vec y(x.size(), 0.0);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t oh = 0; oh < H; ++oh)
        for (int64_t ow = 0; ow < W; ++ow) {
          double acc = bias.empty() ? 0.0 : bias[static_cast<size_t>(c)];
          for (int64_t kh = 0; kh < k; ++kh)
            for (int64_t kw = 0; kw < k; ++kw) {
              int64_t ih = oh - pad + kh, iw = ow - pad + kw;
              if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
              acc += w[static_cast<size_t>((c * k + kh) * k + kw)] *
                     x[static_cast<size_t>(((b * C + c) * H + ih) * W + iw)];
            }
          y[static_cast<size_t>(((b * C + c) * H + oh) * W + ow)] = acc;
        }
  return y;
}

// --- IVLA (one dense routine for the whole attention module) -----------------

struct IvlaWeights {
  vec wv1, bv1, gv1, bev1;  // omega_v1 conv + instance norm affine
  vec wv2, bv2, gv2, bev2;
  vec wl1, bl1, wl2, bl2, wl3, bl3;
  vec wg, bg;  // depthwise conv
  int64_t gk = 7;
  vec gva_w, gva_b, gvb_w, gvb_b;  // visual gate convs
  vec gla_w, gla_b, glb_w, glb_b;  // linguistic gate convs
  bool use_gconv = true, use_l_act = true, use_v_gate = true, use_l_gate = true;
  double eps = 1e-5;
};

struct IvlaResult {
  vec v2, l2, att;
};

inline vec gate_chain(const vec& x, int64_t B, int64_t C, int64_t P, const vec& wa, const vec& ba,
                      const vec& wb, const vec& bb) {
  vec h = chanmap(x, B, C, P, wa, ba, C);
  for (double& v : h) v = v > 0.0 ? v : 0.0;
  vec g = chanmap(h, B, C, P, wb, bb, C);
  for (double& v : g) v = std::tanh(v);
  return g;
}

inline IvlaResult ivla_dense(const vec& V, const vec& L, int64_t B, int64_t C, int64_t H,
                             int64_t W, int64_t T, const IvlaWeights& p) {
  int64_t HW = H * W;
  IvlaResult r;
  vec pv1 = inorm(chanmap(V, B, C, HW, p.wv1, p.bv1, C), B, C, HW, p.gv1, p.bev1, p.eps);
  vec pl1 = chanmap(L, B, C, T, p.wl1, p.bl1, C);
  r.att.assign(static_cast<size_t>(B * HW * T), 0.0);
  double invs = 1.0 / std::sqrt(static_cast<double>(C));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t pp = 0; pp < HW; ++pp)
      for (int64_t t = 0; t < T; ++t) {
        double acc = 0.0;
        for (int64_t c = 0; c < C; ++c)
          acc += pv1[static_cast<size_t>((b * C + c) * HW + pp)] *
                 pl1[static_cast<size_t>((b * C + c) * T + t)];
        r.att[static_cast<size_t>((b * HW + pp) * T + t)] = acc * invs;
      }

  // linguistic fusion
  vec sm_sp = softmax3(r.att, B, HW, T, 1);
  vec pv2 = inorm(chanmap(V, B, C, HW, p.wv2, p.bv2, C), B, C, HW, p.gv2, p.bev2, p.eps);
  vec pooled(static_cast<size_t>(B * C * T), 0.0);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t t = 0; t < T; ++t) {
        double acc = 0.0;
        for (int64_t pp = 0; pp < HW; ++pp)
          acc += pv2[static_cast<size_t>((b * C + c) * HW + pp)] *
                 sm_sp[static_cast<size_t>((b * HW + pp) * T + t)];
        pooled[static_cast<size_t>((b * C + c) * T + t)] = acc;
      }
  vec l_cross = pooled;
  if (p.use_l_act) {
    vec pl3 = chanmap(L, B, C, T, p.wl3, p.bl3, C);
    for (size_t i = 0; i < l_cross.size(); ++i) l_cross[i] *= pl3[i];
  }

  // visual fusion
  vec sm_lb = softmax3(r.att, B, HW, T, 2);
  vec pl2 = chanmap(L, B, C, T, p.wl2, p.bl2, C);
  vec v_cross(static_cast<size_t>(B * C * HW), 0.0);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t pp = 0; pp < HW; ++pp) {
        double acc = 0.0;
        for (int64_t t = 0; t < T; ++t)
          acc += sm_lb[static_cast<size_t>((b * HW + pp) * T + t)] *
                 pl2[static_cast<size_t>((b * C + c) * T + t)];
        v_cross[static_cast<size_t>((b * C + c) * HW + pp)] = acc;
      }
  if (p.use_gconv) {
    vec gc = depthwise_conv(V, B, C, H, W, p.wg, p.bg, p.gk);
    for (size_t i = 0; i < v_cross.size(); ++i) v_cross[i] += gelu1(gc[i]);
  }

  // gate regulation
  r.v2 = V;
  if (p.use_v_gate) {
    vec g = gate_chain(v_cross, B, C, HW, p.gva_w, p.gva_b, p.gvb_w, p.gvb_b);
    for (size_t i = 0; i < r.v2.size(); ++i) r.v2[i] += v_cross[i] * g[i];
  } else {
    for (size_t i = 0; i < r.v2.size(); ++i) r.v2[i] += v_cross[i];
  }
  r.l2 = L;
  if (p.use_l_gate) {
    vec g = gate_chain(l_cross, B, C, T, p.gla_w, p.gla_b, p.glb_w, p.glb_b);
    for (size_t i = 0; i < r.l2.size(); ++i) r.l2[i] += l_cross[i] * g[i];
  } else {
    for (size_t i = 0; i < r.l2.size(); ++i) r.l2[i] += l_cross[i];
  }
  return r;
}

// --- interaction block (pre-norm, IVLA, residual norms) ----------------------

struct BlockWeights {
  vec nvi_g, nvi_b, nli_g, nli_b;  // pre-norms
  vec nvo_g, nvo_b, nlo_g, nlo_b, ns_g, ns_b;
  IvlaWeights ivla;
  double eps = 1e-5;
};

struct BlockResult {
  vec v, l, s;
};

inline BlockResult block_dense(const vec& V0, const vec& L0, int64_t B, int64_t C, int64_t H,
                               int64_t W, int64_t T, const BlockWeights& p) {
  int64_t HW = H * W;
  vec vn = lnorm_channels(V0, B, C, HW, p.nvi_g, p.nvi_b, p.eps);
  vec ln = lnorm_channels(L0, B, C, T, p.nli_g, p.nli_b, p.eps);
  IvlaResult iv = ivla_dense(vn, ln, B, C, H, W, T, p.ivla);
  vec vsum(V0.size()), lsum(L0.size());
  for (size_t i = 0; i < vsum.size(); ++i) vsum[i] = V0[i] + iv.v2[i];
  for (size_t i = 0; i < lsum.size(); ++i) lsum[i] = L0[i] + iv.l2[i];
  BlockResult r;
  r.v = lnorm_channels(vsum, B, C, HW, p.nvo_g, p.nvo_b, p.eps);
  r.l = lnorm_channels(lsum, B, C, T, p.nlo_g, p.nlo_b, p.eps);
  r.s = lnorm_channels(iv.l2, B, C, T, p.ns_g, p.ns_b, p.eps);
  return r;
}

// --- cross-scale aggregation (concat -> hamburger -> 1x1 class) -------------

// Independent copy of the splitmix64 protocol used for the factorization
// bases stream.
inline uint64_t splitmix_next(uint64_t& s) {
  uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t salt) {
  uint64_t s = seed ^ (0xD1B54A32D192ED03ULL * (salt + 1));
  return splitmix_next(s);
}

inline vec hamburger_bases(uint64_t model_seed, int64_t channels, int64_t rank) {
  uint64_t s = derive_seed(model_seed, 0x68616dULL);
  vec d(static_cast<size_t>(channels * rank));
  for (double& v : d) {
    double u = static_cast<double>(splitmix_next(s) >> 11) * 0x1.0p-53;
    v = 0.1 + u;  // uniform(0.1, 1.1)
  }
  return d;
}

struct CsaWeights {
  vec lower_w, lower_b, upper_w, upper_b;
  vec class_w, class_b;
  int64_t rank = 8;
  int updates = 6;
  uint64_t seed = 0;
  double eps = 1e-6;
};

// X is the concatenated (B, C', T) feature; returns logits (B, T).
inline vec csa_dense(const vec& X, int64_t B, int64_t Cp, int64_t T, const CsaWeights& p) {
  vec z = chanmap(X, B, Cp, T, p.lower_w, p.lower_b, Cp);
  for (double& v : z) v = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  vec d0 = hamburger_bases(p.seed, Cp, p.rank);
  int64_t r = p.rank;
  vec ham(static_cast<size_t>(B * Cp * T), 0.0);
  for (int64_t b = 0; b < B; ++b) {
    vec D = d0;                                            // (Cp, r)
    vec C(static_cast<size_t>(r * T), 1.0 / static_cast<double>(r));  // (r, T)
    const double* xb = z.data() + b * Cp * T;
    for (int it = 0; it < p.updates; ++it) {
      // C <- C .* (D^T X) ./ (D^T D C + eps)
      vec dtx(static_cast<size_t>(r * T), 0.0);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t t = 0; t < T; ++t) {
          double acc = 0.0;
          for (int64_t c = 0; c < Cp; ++c) acc += D[static_cast<size_t>(c * r + i)] * xb[c * T + t];
          dtx[static_cast<size_t>(i * T + t)] = acc;
        }
      vec dtd(static_cast<size_t>(r * r), 0.0);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < r; ++j) {
          double acc = 0.0;
          for (int64_t c = 0; c < Cp; ++c)
            acc += D[static_cast<size_t>(c * r + i)] * D[static_cast<size_t>(c * r + j)];
          dtd[static_cast<size_t>(i * r + j)] = acc;
        }
      vec cnew(static_cast<size_t>(r * T));
      for (int64_t i = 0; i < r; ++i)
        for (int64_t t = 0; t < T; ++t) {
          double den = 0.0;
          for (int64_t j = 0; j < r; ++j)
            den += dtd[static_cast<size_t>(i * r + j)] * C[static_cast<size_t>(j * T + t)];
          cnew[static_cast<size_t>(i * T + t)] =
              C[static_cast<size_t>(i * T + t)] * dtx[static_cast<size_t>(i * T + t)] / (den + p.eps);
        }
      C = cnew;
      // D <- D .* (X C^T) ./ (D C C^T + eps)
      vec xct(static_cast<size_t>(Cp * r), 0.0);
      for (int64_t c = 0; c < Cp; ++c)
        for (int64_t i = 0; i < r; ++i) {
          double acc = 0.0;
          for (int64_t t = 0; t < T; ++t) acc += xb[c * T + t] * C[static_cast<size_t>(i * T + t)];
          xct[static_cast<size_t>(c * r + i)] = acc;
        }
      vec cct(static_cast<size_t>(r * r), 0.0);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < r; ++j) {
          double acc = 0.0;
          for (int64_t t = 0; t < T; ++t)
            acc += C[static_cast<size_t>(i * T + t)] * C[static_cast<size_t>(j * T + t)];
          cct[static_cast<size_t>(i * r + j)] = acc;
        }
      vec dnew(static_cast<size_t>(Cp * r));
      for (int64_t c = 0; c < Cp; ++c)
        for (int64_t i = 0; i < r; ++i) {
          double den = 0.0;
          for (int64_t j = 0; j < r; ++j)
            den += D[static_cast<size_t>(c * r + j)] * cct[static_cast<size_t>(j * r + i)];
          dnew[static_cast<size_t>(c * r + i)] =
              D[static_cast<size_t>(c * r + i)] * xct[static_cast<size_t>(c * r + i)] / (den + p.eps);
        }
      D = dnew;
    }
    for (int64_t c = 0; c < Cp; ++c)
      for (int64_t t = 0; t < T; ++t) {
        double acc = 0.0;
        for (int64_t i = 0; i < r; ++i)
          acc += D[static_cast<size_t>(c * r + i)] * C[static_cast<size_t>(i * T + t)];
        ham[static_cast<size_t>((b * Cp + c) * T + t)] = acc;
      }
  }
  vec up = chanmap(ham, B, Cp, T, p.upper_w, p.upper_b, Cp);
  vec logits(static_cast<size_t>(B * T), 0.0);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t t = 0; t < T; ++t) {
      double acc = p.class_b.empty() ? 0.0 : p.class_b[0];
      for (int64_t c = 0; c < Cp; ++c) {
        double h = X[static_cast<size_t>((b * Cp + c) * T + t)] +
                   up[static_cast<size_t>((b * Cp + c) * T + t)];
        acc += p.class_w[static_cast<size_t>(c)] * h;
      }
      logits[static_cast<size_t>(b * T + t)] = acc;
    }
  return logits;
}

// --- metrics by brute-force enumeration --------------------------------------

// Rank of item i under descending score, ties by ascending index, computed by
// pairwise counting (no sort).
inline int64_t rank_of(const vec& scores, int64_t i) {
  int64_t above = 0;
  for (int64_t j = 0; j < static_cast<int64_t>(scores.size()); ++j) {
    if (j == i) continue;
    if (scores[static_cast<size_t>(j)] > scores[static_cast<size_t>(i)] ||
        (scores[static_cast<size_t>(j)] == scores[static_cast<size_t>(i)] && j < i))
      ++above;
  }
  return above + 1;
}

inline double ap_bruteforce(const vec& scores, const vec& truths) {
  int64_t n = static_cast<int64_t>(scores.size());
  double acc = 0.0;
  int64_t positives = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (truths[static_cast<size_t>(i)] != 1.0) continue;
    ++positives;
    int64_t ri = rank_of(scores, i);
    int64_t pos_at_or_above = 0;
    for (int64_t j = 0; j < n; ++j)
      if (truths[static_cast<size_t>(j)] == 1.0 && rank_of(scores, j) <= ri) ++pos_at_or_above;
    acc += static_cast<double>(pos_at_or_above) / static_cast<double>(ri);
  }
  return acc / static_cast<double>(positives);
}

struct PrfBrute {
  double cp, cr, cf1, op, orr, of1;
};

// mode_k < 0 means threshold at 0.5 (strict); otherwise top-k per image.
inline PrfBrute prf_bruteforce(const vec& scores, const vec& truths, int64_t images,
                               int64_t labels, int64_t mode_k) {
  std::vector<char> pred(static_cast<size_t>(images * labels), 0);
  for (int64_t i = 0; i < images; ++i) {
    if (mode_k < 0) {
      for (int64_t t = 0; t < labels; ++t)
        pred[static_cast<size_t>(i * labels + t)] =
            scores[static_cast<size_t>(i * labels + t)] > 0.5 ? 1 : 0;
    } else {
      vec row(scores.begin() + i * labels, scores.begin() + (i + 1) * labels);
      for (int64_t t = 0; t < labels; ++t)
        pred[static_cast<size_t>(i * labels + t)] = rank_of(row, t) <= mode_k ? 1 : 0;
    }
  }
  double cp_acc = 0, cr_acc = 0;
  int64_t cp_n = 0, cr_n = 0, tp_all = 0, pred_all = 0, truth_all = 0;
  for (int64_t t = 0; t < labels; ++t) {
    int64_t tp = 0, np = 0, na = 0;
    for (int64_t i = 0; i < images; ++i) {
      bool pr = pred[static_cast<size_t>(i * labels + t)] != 0;
      bool tr = truths[static_cast<size_t>(i * labels + t)] == 1.0;
      if (pr && tr) ++tp;
      if (pr) ++np;
      if (tr) ++na;
    }
    tp_all += tp;
    pred_all += np;
    truth_all += na;
    if (np > 0) {
      cp_acc += double(tp) / double(np);
      ++cp_n;
    }
    if (na > 0) {
      cr_acc += double(tp) / double(na);
      ++cr_n;
    }
  }
  PrfBrute r{};
  r.cp = cp_n ? cp_acc / double(cp_n) : 0.0;
  r.cr = cr_n ? cr_acc / double(cr_n) : 0.0;
  r.op = pred_all ? double(tp_all) / double(pred_all) : 0.0;
  r.orr = truth_all ? double(tp_all) / double(truth_all) : 0.0;
  r.cf1 = (r.cp + r.cr) > 0 ? 2 * r.cp * r.cr / (r.cp + r.cr) : 0.0;
  r.of1 = (r.op + r.orr) > 0 ? 2 * r.op * r.orr / (r.op + r.orr) : 0.0;
  return r;
}

}  // namespace oracle
