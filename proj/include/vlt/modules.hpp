#pragma once

#include <string>

#include "vlt/ops.hpp"
#include "vlt/params.hpp"

namespace vlt {

// Default init: conv/linear weights truncated normal std 0.02, biases zero,
// norm affine gamma=1 / beta=0, eps 1e-5 everywhere.
inline constexpr double kWeightInitStd = 0.02;
inline constexpr double kNormEps = 1e-5;

// Convs feeding straight into a normalization are created bias-free: the
// norm's mean subtraction cancels any bias exactly, so the parameter would
// be untrainable dead weight.
struct Conv2dLayer {
  Tensor w, b;
  int stride = 1, padding = 0, groups = 1;

  static Conv2dLayer create(ParamStore& ps, const std::string& prefix, int64_t cin, int64_t cout,
                            int64_t k, int stride, int padding, int groups, Rng& rng,
                            bool with_bias = true) {
    Conv2dLayer m;
    m.stride = stride;
    m.padding = padding;
    m.groups = groups;
    m.w = ps.create(prefix + ".weight", {cout, cin / groups, k, k},
                    InitSpec::trunc_normal(kWeightInitStd), rng);
    if (with_bias) m.b = ps.create(prefix + ".bias", {cout}, InitSpec::zeros(), rng);
    return m;
  }

  Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride, padding, groups); }
};

// 1x1 convolution over the channel axis; works on (B,C,T) and (B,C,H,W).
struct ChannelLinearLayer {
  Tensor w, b;

  static ChannelLinearLayer create(ParamStore& ps, const std::string& prefix, int64_t cin,
                                   int64_t cout, Rng& rng, bool with_bias = true) {
    ChannelLinearLayer m;
    m.w = ps.create(prefix + ".weight", {cout, cin}, InitSpec::trunc_normal(kWeightInitStd), rng);
    if (with_bias) m.b = ps.create(prefix + ".bias", {cout}, InitSpec::zeros(), rng);
    return m;
  }

  Tensor forward(const Tensor& x) const { return channel_linear(x, w, b); }
};

struct LayerNormLayer {
  Tensor gamma, beta;
  double eps = kNormEps;

  static LayerNormLayer create(ParamStore& ps, const std::string& prefix, int64_t c, Rng& rng) {
    LayerNormLayer m;
    m.gamma = ps.create(prefix + ".gamma", {c}, InitSpec::ones(), rng);
    m.beta = ps.create(prefix + ".beta", {c}, InitSpec::zeros(), rng);
    return m;
  }

  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
};

struct InstanceNormLayer {
  Tensor gamma, beta;
  double eps = kNormEps;

  static InstanceNormLayer create(ParamStore& ps, const std::string& prefix, int64_t c, Rng& rng) {
    InstanceNormLayer m;
    m.gamma = ps.create(prefix + ".gamma", {c}, InitSpec::ones(), rng);
    m.beta = ps.create(prefix + ".beta", {c}, InitSpec::zeros(), rng);
    return m;
  }

  Tensor forward(const Tensor& x) const { return instance_norm(x, gamma, beta, eps); }
};

struct BatchNormLayer {
  Tensor gamma, beta;
  mutable Tensor running_mean, running_var;
  double eps = kNormEps;
  double momentum = 0.1;

  static BatchNormLayer create(ParamStore& ps, const std::string& prefix, int64_t c, Rng& rng) {
    BatchNormLayer m;
    m.gamma = ps.create(prefix + ".gamma", {c}, InitSpec::ones(), rng);
    m.beta = ps.create(prefix + ".beta", {c}, InitSpec::zeros(), rng);
    m.running_mean = ps.create_buffer(prefix + ".running_mean", {c}, 0.0);
    m.running_var = ps.create_buffer(prefix + ".running_var", {c}, 1.0);
    return m;
  }

  Tensor forward(const Tensor& x, bool training) const {
    return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
  }
};

// Gate(X) = tanh(conv_b(relu(conv_a(X)))); output strictly inside (-1, 1).
struct GateLayer {
  ChannelLinearLayer conv_a, conv_b;

  static GateLayer create(ParamStore& ps, const std::string& prefix, int64_t c, Rng& rng) {
    GateLayer m;
    m.conv_a = ChannelLinearLayer::create(ps, prefix + ".conv_a", c, c, rng);
    m.conv_b = ChannelLinearLayer::create(ps, prefix + ".conv_b", c, c, rng);
    return m;
  }

  Tensor forward(const Tensor& x) const {
    return tanh_open(conv_b.forward(relu(conv_a.forward(x))));
  }
};

}  // namespace vlt
