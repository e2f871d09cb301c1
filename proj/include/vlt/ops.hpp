#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vlt/tensor.hpp"

namespace vlt {

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> y(a.vec());
  const double* pb = b.data();
  for (size_t i = 0; i < y.size(); ++i) y[i] += pb[i];
  auto ia = a.impl(), ib = b.impl();
  return make_op(a.shape(), std::move(y), {a, b}, [ia, ib](TensorImpl& self) {
    const std::vector<double>& g = self.grad;
    if (ia->requires_grad) {
      ia->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) ia->grad[i] += g[i];
    }
    if (ib->requires_grad) {
      ib->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) ib->grad[i] += g[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> y(a.vec());
  const double* pb = b.data();
  for (size_t i = 0; i < y.size(); ++i) y[i] *= pb[i];
  auto ia = a.impl(), ib = b.impl();
  return make_op(a.shape(), std::move(y), {a, b}, [ia, ib](TensorImpl& self) {
    const std::vector<double>& g = self.grad;
    if (ia->requires_grad) {
      ia->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) ia->grad[i] += g[i] * ib->data[i];
    }
    if (ib->requires_grad) {
      ib->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) ib->grad[i] += g[i] * ia->data[i];
    }
  });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  std::vector<double> y(a.vec());
  const double* pb = b.data();
  for (size_t i = 0; i < y.size(); ++i) y[i] /= pb[i];
  auto ia = a.impl(), ib = b.impl();
  return make_op(a.shape(), std::move(y), {a, b}, [ia, ib](TensorImpl& self) {
    const std::vector<double>& g = self.grad;
    if (ia->requires_grad) {
      ia->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) ia->grad[i] += g[i] / ib->data[i];
    }
    if (ib->requires_grad) {
      ib->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i)
        ib->grad[i] -= g[i] * self.data[i] / ib->data[i];
    }
  });
}

enum class EwKind { Add, Mul };

inline Tensor elementwise(const Tensor& a, const Tensor& b, EwKind kind) {
  return kind == EwKind::Add ? add(a, b) : mul(a, b);
}

inline Tensor scale(const Tensor& x, double c) {
  std::vector<double> y(x.vec());
  for (double& v : y) v *= c;
  auto ix = x.impl();
  return make_op(x.shape(), std::move(y), {x}, [ix, c](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) ix->grad[i] += c * self.grad[i];
  });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  std::vector<double> y(x.vec());
  for (double& v : y) v += c;
  auto ix = x.impl();
  return make_op(x.shape(), std::move(y), {x}, [ix](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) ix->grad[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.vec()) s += v;
  auto ix = x.impl();
  return make_op(Shape{}, {s}, {x}, [ix](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    double g = self.grad[0];
    for (double& gv : ix->grad) gv += g;
  });
}

inline Tensor mean(const Tensor& x) {
  double s = 0.0;
  for (double v : x.vec()) s += v;
  double n = static_cast<double>(x.numel());
  auto ix = x.impl();
  return make_op(Shape{}, {s / n}, {x}, [ix, n](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    double g = self.grad[0] / n;
    for (double& gv : ix->grad) gv += g;
  });
}

// ---------------------------------------------------------------------------
// matmul, batched with right-aligned broadcasting over leading dims
// ---------------------------------------------------------------------------

namespace detail {

// Per-flat-batch-index element offsets of the operand slices.
struct MatmulPlan {
  Shape out_batch;
  std::vector<int64_t> a_off, b_off;
  int64_t m = 0, k = 0, n = 0;
};

inline MatmulPlan matmul_plan(const Shape& as, const Shape& bs) {
  check(as.size() >= 2 && bs.size() >= 2,
        "matmul: operands must have rank >= 2, got " + shape_str(as) + " and " + shape_str(bs));
  MatmulPlan p;
  p.m = as[as.size() - 2];
  p.k = as[as.size() - 1];
  int64_t k2 = bs[bs.size() - 2];
  p.n = bs[bs.size() - 1];
  check(p.k == k2, "matmul: shape mismatch " + shape_str(as) + " x " + shape_str(bs));

  size_t ra = as.size() - 2, rb = bs.size() - 2;
  size_t r = std::max(ra, rb);
  Shape ob(r);
  for (size_t i = 0; i < r; ++i) {
    int64_t da = i < r - ra ? 1 : as[i - (r - ra)];
    int64_t db = i < r - rb ? 1 : bs[i - (r - rb)];
    check(da == db || da == 1 || db == 1,
          "matmul: batch dims not broadcastable, " + shape_str(as) + " x " + shape_str(bs));
    ob[i] = std::max(da, db);
  }
  p.out_batch = ob;

  int64_t nbatch = numel_of(ob);
  p.a_off.resize(static_cast<size_t>(nbatch));
  p.b_off.resize(static_cast<size_t>(nbatch));
  // strides in slice counts
  std::vector<int64_t> sa(r, 0), sb(r, 0);
  int64_t acc = 1;
  for (size_t i = ra; i-- > 0;) {
    size_t oi = i + (r - ra);
    sa[oi] = (as[i] == 1) ? 0 : acc;
    acc *= as[i];
  }
  acc = 1;
  for (size_t i = rb; i-- > 0;) {
    size_t oi = i + (r - rb);
    sb[oi] = (bs[i] == 1) ? 0 : acc;
    acc *= bs[i];
  }
  std::vector<int64_t> idx(r, 0);
  for (int64_t f = 0; f < nbatch; ++f) {
    int64_t oa = 0, obo = 0;
    for (size_t i = 0; i < r; ++i) {
      oa += idx[i] * sa[i];
      obo += idx[i] * sb[i];
    }
    p.a_off[static_cast<size_t>(f)] = oa * p.m * p.k;
    p.b_off[static_cast<size_t>(f)] = obo * p.k * p.n;
    for (size_t i = r; i-- > 0;) {
      if (++idx[i] < ob[i]) break;
      idx[i] = 0;
    }
  }
  return p;
}

inline void gemm_acc(const double* a, const double* b, double* c, int64_t m, int64_t k,
                     int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* cr = c + i * n;
    const double* ar = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      double av = ar[kk];
      const double* br = b + kk * n;
      for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

// da += g * b^T, where g is (m,n) and b is (k,n)
inline void gemm_nt_acc(const double* g, const double* b, double* da, int64_t m, int64_t k,
                        int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* gr = g + i * n;
    double* dar = da + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double* br = b + kk * n;
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j) acc += gr[j] * br[j];
      dar[kk] += acc;
    }
  }
}

// db += a^T * g, where a is (m,k) and g is (m,n)
inline void gemm_tn_acc(const double* a, const double* g, double* db, int64_t m, int64_t k,
                        int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    const double* gr = g + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      double av = ar[kk];
      double* dbr = db + kk * n;
      for (int64_t j = 0; j < n; ++j) dbr[j] += av * gr[j];
    }
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::MatmulPlan plan = detail::matmul_plan(a.shape(), b.shape());
  Shape os = plan.out_batch;
  os.push_back(plan.m);
  os.push_back(plan.n);
  std::vector<double> y(static_cast<size_t>(numel_of(os)), 0.0);
  const double* pa = a.data();
  const double* pb = b.data();
  int64_t slice = plan.m * plan.n;
  for (size_t f = 0; f < plan.a_off.size(); ++f)
    detail::gemm_acc(pa + plan.a_off[f], pb + plan.b_off[f], y.data() + static_cast<int64_t>(f) * slice,
                     plan.m, plan.k, plan.n);
  MacCounter::add(static_cast<uint64_t>(plan.a_off.size()) *
                  static_cast<uint64_t>(plan.m * plan.k * plan.n));
  auto ia = a.impl(), ib = b.impl();
  return make_op(std::move(os), std::move(y), {a, b}, [ia, ib, plan, slice](TensorImpl& self) {
    const double* g = self.grad.data();
    if (ia->requires_grad) ia->ensure_grad();
    if (ib->requires_grad) ib->ensure_grad();
    for (size_t f = 0; f < plan.a_off.size(); ++f) {
      const double* gf = g + static_cast<int64_t>(f) * slice;
      if (ia->requires_grad)
        detail::gemm_nt_acc(gf, ib->data.data() + plan.b_off[f], ia->grad.data() + plan.a_off[f],
                            plan.m, plan.k, plan.n);
      if (ib->requires_grad)
        detail::gemm_tn_acc(ia->data.data() + plan.a_off[f], gf, ib->grad.data() + plan.b_off[f],
                            plan.m, plan.k, plan.n);
    }
  });
}

// ---------------------------------------------------------------------------
// convolution, cross-correlation convention (no kernel flip)
// ---------------------------------------------------------------------------

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                     int padding, int groups) {
  check(x.dim() == 4, "conv2d: input must be (B,Cin,H,W), got " + shape_str(x.shape()));
  check(w.dim() == 4, "conv2d: weight must be (Cout,Cin/g,k,k), got " + shape_str(w.shape()));
  int64_t B = x.size(0), Cin = x.size(1), H = x.size(2), W = x.size(3);
  int64_t Cout = w.size(0), Cg = w.size(1), kh_ = w.size(2), kw_ = w.size(3);
  check(kh_ == kw_, "conv2d: kernel must be square, got " + shape_str(w.shape()));
  int64_t K = kh_;
  check(stride >= 1 && padding >= 0, "conv2d: invalid stride/padding");
  check(groups >= 1 && Cin % groups == 0 && Cout % groups == 0 && Cg == Cin / groups,
        "conv2d: invalid group/channel combination Cin=" + std::to_string(Cin) + " Cout=" +
            std::to_string(Cout) + " groups=" + std::to_string(groups) + " weight " +
            shape_str(w.shape()));
  if (bias.defined())
    check(bias.dim() == 1 && bias.size(0) == Cout,
          "conv2d: bias must be (Cout), got " + shape_str(bias.shape()));
  int64_t OH = (H + 2 * padding - K) / stride + 1;
  int64_t OW = (W + 2 * padding - K) / stride + 1;
  check(H + 2 * padding >= K && W + 2 * padding >= K && OH >= 1 && OW >= 1,
        "conv2d: non-positive output size for input " + shape_str(x.shape()) + " kernel " +
            std::to_string(K) + " stride " + std::to_string(stride) + " padding " +
            std::to_string(padding));

  Shape os{B, Cout, OH, OW};
  std::vector<double> y(static_cast<size_t>(numel_of(os)), 0.0);
  const double* px = x.data();
  const double* pw = w.data();
  int64_t oc_per_g = Cout / groups;

  for (int64_t b = 0; b < B; ++b) {
    for (int64_t oc = 0; oc < Cout; ++oc) {
      double* yo = y.data() + ((b * Cout + oc) * OH) * OW;
      if (bias.defined()) {
        double bv = bias.data()[oc];
        for (int64_t i = 0; i < OH * OW; ++i) yo[i] = bv;
      }
      int64_t icbase = (oc / oc_per_g) * Cg;
      for (int64_t ci = 0; ci < Cg; ++ci) {
        const double* xi = px + ((b * Cin + icbase + ci) * H) * W;
        for (int64_t kh = 0; kh < K; ++kh) {
          for (int64_t kw = 0; kw < K; ++kw) {
            double wv = pw[((oc * Cg + ci) * K + kh) * K + kw];
            if (wv == 0.0) continue;
            for (int64_t oh = 0; oh < OH; ++oh) {
              int64_t ih = oh * stride - padding + kh;
              if (ih < 0 || ih >= H) continue;
              // valid ow range so that 0 <= iw < W
              int64_t lo = 0, iw0 = -padding + kw;
              if (iw0 < 0) lo = (-iw0 + stride - 1) / stride;
              int64_t hi = OW - 1;
              int64_t max_iw = W - 1 - iw0;
              if (max_iw < 0) continue;
              hi = std::min(hi, max_iw / stride);
              const double* xr = xi + ih * W + iw0 + lo * stride;
              double* yr = yo + oh * OW;
              for (int64_t ow = lo; ow <= hi; ++ow, xr += stride) yr[ow] += wv * *xr;
            }
          }
        }
      }
    }
  }
  MacCounter::add(static_cast<uint64_t>(B * Cout * Cg * K * K * OH * OW));

  auto ix = x.impl(), iw = w.impl(), ibias = bias.defined() ? bias.impl() : nullptr;
  auto bwd = [ix, iw, ibias, B, Cin, H, W, Cout, Cg, K, OH, OW, stride, padding,
              oc_per_g](TensorImpl& self) {
    const double* g = self.grad.data();
    bool need_x = ix->requires_grad, need_w = iw->requires_grad;
    bool need_b = ibias && ibias->requires_grad;
    if (need_x) ix->ensure_grad();
    if (need_w) iw->ensure_grad();
    if (need_b) ibias->ensure_grad();
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t oc = 0; oc < Cout; ++oc) {
        const double* go = g + ((b * Cout + oc) * OH) * OW;
        if (need_b) {
          double acc = 0.0;
          for (int64_t i = 0; i < OH * OW; ++i) acc += go[i];
          ibias->grad[oc] += acc;
        }
        int64_t icbase = (oc / oc_per_g) * Cg;
        for (int64_t ci = 0; ci < Cg; ++ci) {
          int64_t xoff = ((b * Cin + icbase + ci) * H) * W;
          const double* xi = ix->data.data() + xoff;
          double* dxi = need_x ? ix->grad.data() + xoff : nullptr;
          for (int64_t kh = 0; kh < K; ++kh) {
            for (int64_t kw = 0; kw < K; ++kw) {
              int64_t widx = ((oc * Cg + ci) * K + kh) * K + kw;
              double wv = iw->data[widx];
              double dw_acc = 0.0;
              for (int64_t oh = 0; oh < OH; ++oh) {
                int64_t ih = oh * stride - padding + kh;
                if (ih < 0 || ih >= H) continue;
                int64_t lo = 0, iw0 = -padding + kw;
                if (iw0 < 0) lo = (-iw0 + stride - 1) / stride;
                int64_t max_iw = W - 1 - iw0;
                if (max_iw < 0) continue;
                int64_t hi = std::min(OW - 1, max_iw / stride);
                const double* gr = go + oh * OW;
                int64_t base = ih * W + iw0 + lo * stride;
                if (need_w) {
                  const double* xr = xi + base;
                  for (int64_t ow = lo; ow <= hi; ++ow, xr += stride) dw_acc += gr[ow] * *xr;
                }
                if (need_x) {
                  double* dxr = dxi + base;
                  for (int64_t ow = lo; ow <= hi; ++ow, dxr += stride) *dxr += gr[ow] * wv;
                }
              }
              if (need_w) iw->grad[widx] += dw_acc;
            }
          }
        }
      }
    }
  };
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(std::move(os), std::move(y), inputs, bwd);
}

// 1x1 channel-mixing linear map applied at every trailing position.
// x is (B, C, pos...), w is (Cout, C), bias optional (Cout).
inline Tensor channel_linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  check(x.dim() >= 3, "channel_linear: input must be (B,C,...), got " + shape_str(x.shape()));
  check(w.dim() == 2, "channel_linear: weight must be (Cout,Cin), got " + shape_str(w.shape()));
  int64_t B = x.size(0), C = x.size(1);
  int64_t P = 1;
  for (int i = 2; i < x.dim(); ++i) P *= x.size(i);
  int64_t Co = w.size(0);
  check(w.size(1) == C, "channel_linear: weight " + shape_str(w.shape()) +
                            " does not match input channels " + shape_str(x.shape()));
  if (bias.defined())
    check(bias.dim() == 1 && bias.size(0) == Co,
          "channel_linear: bias must be (Cout), got " + shape_str(bias.shape()));
  Shape os = x.shape();
  os[1] = Co;
  std::vector<double> y(static_cast<size_t>(numel_of(os)), 0.0);
  const double* px = x.data();
  const double* pw = w.data();
  for (int64_t b = 0; b < B; ++b) {
    const double* xb = px + b * C * P;
    double* yb = y.data() + b * Co * P;
    for (int64_t o = 0; o < Co; ++o) {
      double* yr = yb + o * P;
      if (bias.defined()) {
        double bv = bias.data()[o];
        for (int64_t p = 0; p < P; ++p) yr[p] = bv;
      }
      const double* wr = pw + o * C;
      for (int64_t c = 0; c < C; ++c) {
        double wv = wr[c];
        if (wv == 0.0) continue;
        const double* xr = xb + c * P;
        for (int64_t p = 0; p < P; ++p) yr[p] += wv * xr[p];
      }
    }
  }
  MacCounter::add(static_cast<uint64_t>(B * Co * C * P));

  auto ix = x.impl(), iw = w.impl(), ibias = bias.defined() ? bias.impl() : nullptr;
  auto bwd = [ix, iw, ibias, B, C, P, Co](TensorImpl& self) {
    const double* g = self.grad.data();
    bool need_x = ix->requires_grad, need_w = iw->requires_grad;
    bool need_b = ibias && ibias->requires_grad;
    if (need_x) ix->ensure_grad();
    if (need_w) iw->ensure_grad();
    if (need_b) ibias->ensure_grad();
    for (int64_t b = 0; b < B; ++b) {
      const double* gb = g + b * Co * P;
      const double* xb = ix->data.data() + b * C * P;
      double* dxb = need_x ? ix->grad.data() + b * C * P : nullptr;
      for (int64_t o = 0; o < Co; ++o) {
        const double* gr = gb + o * P;
        if (need_b) {
          double acc = 0.0;
          for (int64_t p = 0; p < P; ++p) acc += gr[p];
          ibias->grad[o] += acc;
        }
        for (int64_t c = 0; c < C; ++c) {
          double wv = iw->data[o * C + c];
          if (need_w) {
            const double* xr = xb + c * P;
            double acc = 0.0;
            for (int64_t p = 0; p < P; ++p) acc += gr[p] * xr[p];
            iw->grad[o * C + c] += acc;
          }
          if (need_x && wv != 0.0) {
            double* dxr = dxb + c * P;
            for (int64_t p = 0; p < P; ++p) dxr[p] += gr[p] * wv;
          }
        }
      }
    }
  };
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(std::move(os), std::move(y), inputs, bwd);
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& x, int axis) {
  check(axis >= 0 && axis < x.dim(),
        "softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  int64_t outer = 1, inner = 1, len = x.size(axis);
  for (int i = 0; i < axis; ++i) outer *= x.size(i);
  for (int i = axis + 1; i < x.dim(); ++i) inner *= x.size(i);
  std::vector<double> y(x.vec());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      double* base = y.data() + o * len * inner + in;
      double mx = base[0];
      for (int64_t l = 1; l < len; ++l) mx = std::max(mx, base[l * inner]);
      double s = 0.0;
      for (int64_t l = 0; l < len; ++l) {
        double e = std::exp(base[l * inner] - mx);
        base[l * inner] = e;
        s += e;
      }
      double invs = 1.0 / s;
      for (int64_t l = 0; l < len; ++l) base[l * inner] *= invs;
    }
  }
  auto ix = x.impl();
  return make_op(x.shape(), std::move(y), {x}, [ix, outer, inner, len](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    const double* yv = self.data.data();
    const double* g = self.grad.data();
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        int64_t base = o * len * inner + in;
        double dot = 0.0;
        for (int64_t l = 0; l < len; ++l) dot += g[base + l * inner] * yv[base + l * inner];
        for (int64_t l = 0; l < len; ++l) {
          int64_t i = base + l * inner;
          ix->grad[i] += yv[i] * (g[i] - dot);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

namespace detail {

// Shared slice normalization core: elements of a slice sit at base + j*step.
// Population variance, y = (x - mean) / sqrt(var + eps), then per-channel affine.
struct NormStats {
  std::vector<double> mean, inv_std;
};

}  // namespace detail

// Layer normalization over the channel axis: one slice per (batch, position).
// A rank-1 input is treated as a single slice over its only axis.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check(eps > 0, "layer_norm: eps must be positive");
  check(x.dim() >= 1, "layer_norm: rank must be >= 1");
  int64_t B = x.dim() == 1 ? 1 : x.size(0);
  int64_t C = x.dim() == 1 ? x.size(0) : x.size(1);
  int64_t P = 1;
  for (int i = 2; i < x.dim(); ++i) P *= x.size(i);
  bool affine = gamma.defined();
  if (affine) {
    check(beta.defined() && gamma.dim() == 1 && gamma.size(0) == C && beta.size(0) == C,
          "layer_norm: affine params must be (C)=(" + std::to_string(C) + ")");
  }
  int64_t nslices = B * P;
  std::vector<double> y(x.vec().size());
  std::vector<double> means(static_cast<size_t>(nslices)), invs(static_cast<size_t>(nslices));
  const double* px = x.data();
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t p = 0; p < P; ++p) {
      int64_t base = (b * C) * P + p;
      double m = 0.0;
      for (int64_t c = 0; c < C; ++c) m += px[base + c * P];
      m /= static_cast<double>(C);
      double var = 0.0;
      for (int64_t c = 0; c < C; ++c) {
        double d = px[base + c * P] - m;
        var += d * d;
      }
      var /= static_cast<double>(C);
      double inv = 1.0 / std::sqrt(var + eps);
      int64_t si = b * P + p;
      means[static_cast<size_t>(si)] = m;
      invs[static_cast<size_t>(si)] = inv;
      for (int64_t c = 0; c < C; ++c) {
        double xh = (px[base + c * P] - m) * inv;
        y[static_cast<size_t>(base + c * P)] =
            affine ? gamma.data()[c] * xh + beta.data()[c] : xh;
      }
    }
  }
  auto ix = x.impl();
  auto ig = affine ? gamma.impl() : nullptr;
  auto ib = affine ? beta.impl() : nullptr;
  std::vector<Tensor> inputs{x};
  if (affine) {
    inputs.push_back(gamma);
    inputs.push_back(beta);
  }
  return make_op(
      x.shape(), std::move(y), inputs,
      [ix, ig, ib, B, C, P, means, invs](TensorImpl& self) {
        const double* g = self.grad.data();
        const double* px = ix->data.data();
        bool need_x = ix->requires_grad;
        bool need_g = ig && ig->requires_grad;
        bool need_b = ib && ib->requires_grad;
        if (need_x) ix->ensure_grad();
        if (need_g) ig->ensure_grad();
        if (need_b) ib->ensure_grad();
        double invC = 1.0 / static_cast<double>(C);
        for (int64_t b = 0; b < B; ++b) {
          for (int64_t p = 0; p < P; ++p) {
            int64_t base = (b * C) * P + p;
            int64_t si = b * P + p;
            double m = means[static_cast<size_t>(si)], inv = invs[static_cast<size_t>(si)];
            double sum_gdy = 0.0, sum_gdy_xh = 0.0;
            for (int64_t c = 0; c < C; ++c) {
              double xh = (px[base + c * P] - m) * inv;
              double gdy = ig ? ig->data[c] * g[base + c * P] : g[base + c * P];
              sum_gdy += gdy;
              sum_gdy_xh += gdy * xh;
              if (need_g) ig->grad[c] += g[base + c * P] * xh;
              if (need_b) ib->grad[c] += g[base + c * P];
            }
            if (need_x) {
              for (int64_t c = 0; c < C; ++c) {
                double xh = (px[base + c * P] - m) * inv;
                double gdy = ig ? ig->data[c] * g[base + c * P] : g[base + c * P];
                ix->grad[base + c * P] +=
                    inv * (gdy - invC * sum_gdy - xh * invC * sum_gdy_xh);
              }
            }
          }
        }
      });
}

inline Tensor layer_norm(const Tensor& x, double eps) {
  return layer_norm(x, Tensor(), Tensor(), eps);
}

// Instance normalization over the trailing spatial/token extent, one slice
// per (batch, channel). A size-1 extent normalizes to zero.
inline Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                            double eps) {
  check(eps > 0, "instance_norm: eps must be positive");
  check(x.dim() >= 3, "instance_norm: input must be (B,C,...), got " + shape_str(x.shape()));
  int64_t B = x.size(0), C = x.size(1);
  int64_t P = 1;
  for (int i = 2; i < x.dim(); ++i) P *= x.size(i);
  bool affine = gamma.defined();
  if (affine)
    check(beta.defined() && gamma.dim() == 1 && gamma.size(0) == C && beta.size(0) == C,
          "instance_norm: affine params must be (C)=(" + std::to_string(C) + ")");
  int64_t nslices = B * C;
  std::vector<double> y(x.vec().size());
  std::vector<double> means(static_cast<size_t>(nslices)), invs(static_cast<size_t>(nslices));
  const double* px = x.data();
  for (int64_t s = 0; s < nslices; ++s) {
    const double* xr = px + s * P;
    double m = 0.0;
    for (int64_t p = 0; p < P; ++p) m += xr[p];
    m /= static_cast<double>(P);
    double var = 0.0;
    for (int64_t p = 0; p < P; ++p) {
      double d = xr[p] - m;
      var += d * d;
    }
    var /= static_cast<double>(P);
    double inv = 1.0 / std::sqrt(var + eps);
    means[static_cast<size_t>(s)] = m;
    invs[static_cast<size_t>(s)] = inv;
    int64_t c = s % C;
    double gm = affine ? gamma.data()[c] : 1.0;
    double bt = affine ? beta.data()[c] : 0.0;
    for (int64_t p = 0; p < P; ++p)
      y[static_cast<size_t>(s * P + p)] = gm * (xr[p] - m) * inv + bt;
  }
  auto ix = x.impl();
  auto ig = affine ? gamma.impl() : nullptr;
  auto ib = affine ? beta.impl() : nullptr;
  std::vector<Tensor> inputs{x};
  if (affine) {
    inputs.push_back(gamma);
    inputs.push_back(beta);
  }
  return make_op(
      x.shape(), std::move(y), inputs,
      [ix, ig, ib, C, P, nslices, means, invs](TensorImpl& self) {
        const double* g = self.grad.data();
        const double* px = ix->data.data();
        bool need_x = ix->requires_grad;
        bool need_g = ig && ig->requires_grad;
        bool need_b = ib && ib->requires_grad;
        if (need_x) ix->ensure_grad();
        if (need_g) ig->ensure_grad();
        if (need_b) ib->ensure_grad();
        double invP = 1.0 / static_cast<double>(P);
        for (int64_t s = 0; s < nslices; ++s) {
          int64_t c = s % C;
          double m = means[static_cast<size_t>(s)], inv = invs[static_cast<size_t>(s)];
          double gm = ig ? ig->data[c] : 1.0;
          const double* xr = px + s * P;
          const double* gr = g + s * P;
          double sum_gdy = 0.0, sum_gdy_xh = 0.0;
          for (int64_t p = 0; p < P; ++p) {
            double xh = (xr[p] - m) * inv;
            double gdy = gm * gr[p];
            sum_gdy += gdy;
            sum_gdy_xh += gdy * xh;
            if (need_g) ig->grad[c] += gr[p] * xh;
            if (need_b) ib->grad[c] += gr[p];
          }
          if (need_x) {
            double* dxr = ix->grad.data() + s * P;
            for (int64_t p = 0; p < P; ++p) {
              double xh = (xr[p] - m) * inv;
              double gdy = gm * gr[p];
              dxr[p] += inv * (gdy - invP * sum_gdy - xh * invP * sum_gdy_xh);
            }
          }
        }
      });
}

// Batch normalization per channel over (batch, positions). In training mode
// batch statistics normalize and the running buffers are updated in place;
// in eval mode the running buffers normalize.
inline Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         Tensor& running_mean, Tensor& running_var, bool training,
                         double momentum, double eps) {
  check(eps > 0, "batch_norm: eps must be positive");
  check(x.dim() >= 2, "batch_norm: input must be (B,C,...), got " + shape_str(x.shape()));
  int64_t B = x.size(0), C = x.size(1);
  int64_t P = 1;
  for (int i = 2; i < x.dim(); ++i) P *= x.size(i);
  check(gamma.defined() && beta.defined() && gamma.size(0) == C && beta.size(0) == C,
        "batch_norm: affine params must be (C)");
  check(running_mean.size(0) == C && running_var.size(0) == C,
        "batch_norm: running stats must be (C)");
  int64_t n = B * P;
  std::vector<double> y(x.vec().size());
  std::vector<double> means(static_cast<size_t>(C)), invs(static_cast<size_t>(C));
  const double* px = x.data();
  for (int64_t c = 0; c < C; ++c) {
    double m, var;
    if (training) {
      m = 0.0;
      for (int64_t b = 0; b < B; ++b) {
        const double* xr = px + (b * C + c) * P;
        for (int64_t p = 0; p < P; ++p) m += xr[p];
      }
      m /= static_cast<double>(n);
      var = 0.0;
      for (int64_t b = 0; b < B; ++b) {
        const double* xr = px + (b * C + c) * P;
        for (int64_t p = 0; p < P; ++p) {
          double d = xr[p] - m;
          var += d * d;
        }
      }
      var /= static_cast<double>(n);
      running_mean.data()[c] = (1.0 - momentum) * running_mean.data()[c] + momentum * m;
      running_var.data()[c] = (1.0 - momentum) * running_var.data()[c] + momentum * var;
    } else {
      m = running_mean.data()[c];
      var = running_var.data()[c];
    }
    double inv = 1.0 / std::sqrt(var + eps);
    means[static_cast<size_t>(c)] = m;
    invs[static_cast<size_t>(c)] = inv;
    double gm = gamma.data()[c], bt = beta.data()[c];
    for (int64_t b = 0; b < B; ++b) {
      const double* xr = px + (b * C + c) * P;
      double* yr = y.data() + (b * C + c) * P;
      for (int64_t p = 0; p < P; ++p) yr[p] = gm * (xr[p] - m) * inv + bt;
    }
  }
  auto ix = x.impl(), ig = gamma.impl(), ib = beta.impl();
  return make_op(
      x.shape(), std::move(y), {x, gamma, beta},
      [ix, ig, ib, B, C, P, n, means, invs, training](TensorImpl& self) {
        const double* g = self.grad.data();
        const double* px = ix->data.data();
        bool need_x = ix->requires_grad;
        bool need_g = ig->requires_grad;
        bool need_b = ib->requires_grad;
        if (need_x) ix->ensure_grad();
        if (need_g) ig->ensure_grad();
        if (need_b) ib->ensure_grad();
        double invn = 1.0 / static_cast<double>(n);
        for (int64_t c = 0; c < C; ++c) {
          double m = means[static_cast<size_t>(c)], inv = invs[static_cast<size_t>(c)];
          double gm = ig->data[c];
          double sum_dy = 0.0, sum_dy_xh = 0.0;
          for (int64_t b = 0; b < B; ++b) {
            const double* xr = px + (b * C + c) * P;
            const double* gr = g + (b * C + c) * P;
            for (int64_t p = 0; p < P; ++p) {
              double xh = (xr[p] - m) * inv;
              sum_dy += gr[p];
              sum_dy_xh += gr[p] * xh;
            }
          }
          if (need_g) ig->grad[c] += sum_dy_xh;
          if (need_b) ib->grad[c] += sum_dy;
          if (need_x) {
            for (int64_t b = 0; b < B; ++b) {
              const double* xr = px + (b * C + c) * P;
              const double* gr = g + (b * C + c) * P;
              double* dxr = ix->grad.data() + (b * C + c) * P;
              if (training) {
                for (int64_t p = 0; p < P; ++p) {
                  double xh = (xr[p] - m) * inv;
                  dxr[p] += gm * inv * (gr[p] - invn * sum_dy - xh * invn * sum_dy_xh);
                }
              } else {
                for (int64_t p = 0; p < P; ++p) dxr[p] += gm * inv * gr[p];
              }
            }
          }
        }
      });
}

enum class NormKind { Layer, Batch, Instance };

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

inline Tensor relu(const Tensor& x) {
  std::vector<double> y(x.vec());
  for (double& v : y) v = v > 0.0 ? v : 0.0;
  auto ix = x.impl();
  return make_op(x.shape(), std::move(y), {x}, [ix](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (ix->data[i] > 0.0) ix->grad[i] += self.grad[i];
  });
}

inline Tensor tanh_act(const Tensor& x) {
  std::vector<double> y(x.vec());
  for (double& v : y) v = std::tanh(v);
  auto ix = x.impl();
  return make_op(x.shape(), std::move(y), {x}, [ix](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      ix->grad[i] += self.grad[i] * (1.0 - self.data[i] * self.data[i]);
  });
}

// Exact Gaussian-CDF form: x * Phi(x).
inline Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  std::vector<double> y(x.vec());
  for (double& v : y) v = v * 0.5 * (1.0 + std::erf(v * inv_sqrt2));
  auto ix = x.impl();
  return make_op(x.shape(), std::move(y), {x}, [ix](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      double xv = ix->data[i];
      double phi = 0.5 * (1.0 + std::erf(xv * inv_sqrt2));
      double pdf = inv_sqrt2pi * std::exp(-0.5 * xv * xv);
      ix->grad[i] += self.grad[i] * (phi + xv * pdf);
    }
  });
}

// tanh with saturated values nudged one ulp into the open interval, so a
// gate built on it stays strictly inside (-1, 1) for every finite input.
inline Tensor tanh_open(const Tensor& x) {
  std::vector<double> y(x.vec());
  for (double& v : y) {
    v = std::tanh(v);
    if (v >= 1.0) v = std::nextafter(1.0, 0.0);
    if (v <= -1.0) v = std::nextafter(-1.0, 0.0);
  }
  auto ix = x.impl();
  return make_op(x.shape(), std::move(y), {x}, [ix](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      ix->grad[i] += self.grad[i] * (1.0 - self.data[i] * self.data[i]);
  });
}

enum class ActKind { Gelu, Relu, Tanh };

inline Tensor activation(const Tensor& x, ActKind kind) {
  switch (kind) {
    case ActKind::Gelu: return gelu(x);
    case ActKind::Relu: return relu(x);
    default: return tanh_act(x);
  }
}

inline Tensor sigmoid(const Tensor& x) {
  std::vector<double> y(x.vec());
  for (double& v : y) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  auto ix = x.impl();
  return make_op(x.shape(), std::move(y), {x}, [ix](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      ix->grad[i] += self.grad[i] * self.data[i] * (1.0 - self.data[i]);
  });
}

inline Tensor softplus(const Tensor& x) {
  std::vector<double> y(x.vec());
  for (double& v : y) v = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  auto ix = x.impl();
  return make_op(x.shape(), std::move(y), {x}, [ix](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      double xv = ix->data[i];
      double s = xv >= 0.0 ? 1.0 / (1.0 + std::exp(-xv)) : std::exp(xv) / (1.0 + std::exp(xv));
      ix->grad[i] += self.grad[i] * s;
    }
  });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
  check(numel_of(shape) == x.numel(),
        "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<double> y(x.vec());
  auto ix = x.impl();
  return make_op(std::move(shape), std::move(y), {x}, [ix](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) ix->grad[i] += self.grad[i];
  });
}

// (B,C,H,W) -> (B,C,H*W); position (h,w) maps to index h*W+w.
inline Tensor flatten_spatial(const Tensor& x) {
  check(x.dim() == 4, "flatten_spatial: input must be (B,C,H,W), got " + shape_str(x.shape()));
  return reshape(x, {x.size(0), x.size(1), x.size(2) * x.size(3)});
}

inline Tensor unflatten_spatial(const Tensor& x, int64_t H, int64_t W) {
  check(x.dim() == 3, "unflatten_spatial: input must be (B,C,HW), got " + shape_str(x.shape()));
  check(x.size(2) == H * W, "unflatten_spatial: HW=" + std::to_string(x.size(2)) +
                                " does not factor as " + std::to_string(H) + "x" +
                                std::to_string(W));
  return reshape(x, {x.size(0), x.size(1), H, W});
}

inline Tensor transpose_last2(const Tensor& x) {
  check(x.dim() >= 2, "transpose_last2: rank must be >= 2");
  int64_t m = x.size(x.dim() - 2), n = x.size(x.dim() - 1);
  int64_t batch = x.numel() / (m * n);
  Shape os = x.shape();
  std::swap(os[os.size() - 2], os[os.size() - 1]);
  std::vector<double> y(x.vec().size());
  const double* px = x.data();
  for (int64_t b = 0; b < batch; ++b) {
    const double* xb = px + b * m * n;
    double* yb = y.data() + b * m * n;
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) yb[j * m + i] = xb[i * n + j];
  }
  auto ix = x.impl();
  return make_op(std::move(os), std::move(y), {x}, [ix, batch, m, n](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    const double* g = self.grad.data();
    for (int64_t b = 0; b < batch; ++b) {
      const double* gb = g + b * m * n;
      double* dxb = ix->grad.data() + b * m * n;
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) dxb[i * n + j] += gb[j * m + i];
    }
  });
}

inline Tensor concat(const std::vector<Tensor>& xs, int axis) {
  check(!xs.empty(), "concat: empty input list");
  const Shape& s0 = xs[0].shape();
  check(axis >= 0 && axis < static_cast<int>(s0.size()),
        "concat: axis " + std::to_string(axis) + " invalid for " + shape_str(s0));
  int64_t total_axis = 0;
  for (const Tensor& t : xs) {
    check(t.dim() == static_cast<int>(s0.size()), "concat: rank mismatch");
    for (int i = 0; i < t.dim(); ++i)
      if (i != axis)
        check(t.size(i) == s0[static_cast<size_t>(i)],
              "concat: shape mismatch " + shape_str(t.shape()) + " vs " + shape_str(s0));
    total_axis += t.size(axis);
  }
  Shape os = s0;
  os[static_cast<size_t>(axis)] = total_axis;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<double> y(static_cast<size_t>(numel_of(os)));
  int64_t off = 0;
  std::vector<int64_t> starts;
  for (const Tensor& t : xs) {
    starts.push_back(off);
    int64_t len = t.size(axis);
    const double* pt = t.data();
    for (int64_t o = 0; o < outer; ++o) {
      double* dst = y.data() + (o * total_axis + off) * inner;
      const double* src = pt + o * len * inner;
      std::copy(src, src + len * inner, dst);
    }
    off += len;
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  std::vector<int64_t> lens;
  for (const Tensor& t : xs) {
    impls.push_back(t.impl());
    lens.push_back(t.size(axis));
  }
  return make_op(std::move(os), std::move(y), xs,
                 [impls, lens, starts, outer, inner, total_axis](TensorImpl& self) {
                   const double* g = self.grad.data();
                   for (size_t idx = 0; idx < impls.size(); ++idx) {
                     auto& im = impls[idx];
                     if (!im->requires_grad) continue;
                     im->ensure_grad();
                     int64_t len = lens[idx], st = starts[idx];
                     for (int64_t o = 0; o < outer; ++o) {
                       const double* src = g + (o * total_axis + st) * inner;
                       double* dst = im->grad.data() + o * len * inner;
                       for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                     }
                   }
                 });
}

// Repeats a leading size-1 batch dimension B times.
inline Tensor repeat_batch(const Tensor& x, int64_t B) {
  check(x.dim() >= 1 && x.size(0) == 1,
        "repeat_batch: leading dim must be 1, got " + shape_str(x.shape()));
  int64_t inner = x.numel();
  Shape os = x.shape();
  os[0] = B;
  std::vector<double> y(static_cast<size_t>(inner * B));
  for (int64_t b = 0; b < B; ++b)
    std::copy(x.data(), x.data() + inner, y.data() + b * inner);
  auto ix = x.impl();
  return make_op(std::move(os), std::move(y), {x}, [ix, B, inner](TensorImpl& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    const double* g = self.grad.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < inner; ++i) ix->grad[i] += g[b * inner + i];
  });
}

// Column gather from a (C, V) table: out[:, t] = table[:, ids[t]].
inline Tensor gather_columns(const Tensor& table, const std::vector<int64_t>& ids) {
  check(table.dim() == 2, "gather_columns: table must be (C,V), got " + shape_str(table.shape()));
  int64_t C = table.size(0), V = table.size(1);
  for (int64_t id : ids)
    check(id >= 0 && id < V,
          "gather_columns: id " + std::to_string(id) + " outside vocabulary of " +
              std::to_string(V));
  int64_t T = static_cast<int64_t>(ids.size());
  std::vector<double> y(static_cast<size_t>(C * T));
  const double* pt = table.data();
  for (int64_t c = 0; c < C; ++c)
    for (int64_t t = 0; t < T; ++t) y[static_cast<size_t>(c * T + t)] = pt[c * V + ids[static_cast<size_t>(t)]];
  auto it = table.impl();
  return make_op({C, T}, std::move(y), {table}, [it, ids, C, T](TensorImpl& self) {
    if (!it->requires_grad) return;
    it->ensure_grad();
    int64_t V = it->shape[1];
    const double* g = self.grad.data();
    for (int64_t c = 0; c < C; ++c)
      for (int64_t t = 0; t < T; ++t)
        it->grad[c * V + ids[static_cast<size_t>(t)]] += g[c * T + t];
  });
}

// ---------------------------------------------------------------------------
// loss
// ---------------------------------------------------------------------------

// Mean binary cross-entropy from logits, evaluated in the stable form
// max(z,0) - z*y + log1p(exp(-|z|)).
inline Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  check_same_shape(logits, targets, "bce_with_logits");
  for (double t : targets.vec())
    check(t == 0.0 || t == 1.0, "bce_with_logits: targets must be binary 0/1");
  double acc = 0.0;
  const double* z = logits.data();
  const double* y = targets.data();
  int64_t n = logits.numel();
  for (int64_t i = 0; i < n; ++i) {
    double zi = z[i];
    acc += std::max(zi, 0.0) - zi * y[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  auto iz = logits.impl();
  auto it = targets.impl();
  double invn = 1.0 / static_cast<double>(n);
  return make_op(Shape{}, {acc * invn}, {logits}, [iz, it, n, invn](TensorImpl& self) {
    if (!iz->requires_grad) return;
    iz->ensure_grad();
    double g = self.grad[0] * invn;
    for (int64_t i = 0; i < n; ++i) {
      double zi = iz->data[i];
      double s = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi)) : std::exp(zi) / (1.0 + std::exp(zi));
      iz->grad[i] += g * (s - it->data[i]);
    }
  });
}

}  // namespace vlt
