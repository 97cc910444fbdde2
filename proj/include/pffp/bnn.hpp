#pragma once
// Bayesian 1D CNN likelihood over the 211-bin normalized deceleration
// profile. Every parameter carries a mean-field Gaussian posterior
// (mean, rho) with softplus(rho) as its standard deviation; forward passes
// sample weights by reparameterization, so repeated prediction yields a
// distribution over class probabilities.
//
// Architecture: conv(8x7, same) -> relu -> maxpool2 -> conv(16x5, same)
// -> relu -> maxpool2 -> flatten -> fc 64 -> relu -> fc 32 -> relu
// -> fc 4 -> softmax. Pooling uses floor division (odd tails dropped).
//
// Training maximizes the evidence lower bound: cross-entropy of one sampled
// pass plus the closed-form Gaussian KL to a zero-mean prior, with analytic
// gradients through every layer (verified against finite differences).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pffp/errors.hpp"
#include "pffp/rng.hpp"

namespace pffp::bnn {

inline constexpr int kInputLen = 211;
inline constexpr int kNumClasses = 4;

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double softplus_inv(double y) { return std::log(std::expm1(y)); }

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;  // odd; same padding of (kernel-1)/2
};

struct NetworkArch {
  ConvSpec conv1{1, 8, 7};
  ConvSpec conv2{8, 16, 5};
  int fc1_width = 64;
  int fc2_width = 32;

  int pool1_len() const { return kInputLen / 2; }
  int pool2_len() const { return pool1_len() / 2; }
  int flatten_dim() const { return conv2.out_channels * pool2_len(); }

  void validate() const {
    if (conv1.in_channels != 1 || conv2.in_channels != conv1.out_channels) {
      throw DataError("network channel counts are inconsistent");
    }
    if (conv1.kernel % 2 == 0 || conv2.kernel % 2 == 0) {
      throw DataError("conv kernels must be odd for same padding");
    }
    if (conv1.out_channels < 1 || conv2.out_channels < 1 || fc1_width < 1 || fc2_width < 1) {
      throw DataError("layer widths must be positive");
    }
  }

  std::size_t parameter_count() const {
    const auto conv1_n = static_cast<std::size_t>(conv1.out_channels) *
                             static_cast<std::size_t>(conv1.in_channels) *
                             static_cast<std::size_t>(conv1.kernel) +
                         static_cast<std::size_t>(conv1.out_channels);
    const auto conv2_n = static_cast<std::size_t>(conv2.out_channels) *
                             static_cast<std::size_t>(conv2.in_channels) *
                             static_cast<std::size_t>(conv2.kernel) +
                         static_cast<std::size_t>(conv2.out_channels);
    const auto fc1_n = static_cast<std::size_t>(flatten_dim()) * static_cast<std::size_t>(fc1_width) +
                       static_cast<std::size_t>(fc1_width);
    const auto fc2_n = static_cast<std::size_t>(fc1_width) * static_cast<std::size_t>(fc2_width) +
                       static_cast<std::size_t>(fc2_width);
    const auto out_n = static_cast<std::size_t>(fc2_width) * kNumClasses + kNumClasses;
    return conv1_n + conv2_n + fc1_n + fc2_n + out_n;
  }
};

struct ParamSlice {
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ParamLayout {
  ParamSlice conv1_w, conv1_b, conv2_w, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b, out_w, out_b;
  std::size_t total = 0;

  static ParamLayout make(const NetworkArch& arch) {
    ParamLayout layout;
    std::size_t at = 0;
    const auto slice = [&at](std::size_t n) {
      const ParamSlice s{at, n};
      at += n;
      return s;
    };
    layout.conv1_w = slice(static_cast<std::size_t>(arch.conv1.out_channels) *
                           static_cast<std::size_t>(arch.conv1.in_channels) *
                           static_cast<std::size_t>(arch.conv1.kernel));
    layout.conv1_b = slice(static_cast<std::size_t>(arch.conv1.out_channels));
    layout.conv2_w = slice(static_cast<std::size_t>(arch.conv2.out_channels) *
                           static_cast<std::size_t>(arch.conv2.in_channels) *
                           static_cast<std::size_t>(arch.conv2.kernel));
    layout.conv2_b = slice(static_cast<std::size_t>(arch.conv2.out_channels));
    layout.fc1_w = slice(static_cast<std::size_t>(arch.flatten_dim()) *
                         static_cast<std::size_t>(arch.fc1_width));
    layout.fc1_b = slice(static_cast<std::size_t>(arch.fc1_width));
    layout.fc2_w = slice(static_cast<std::size_t>(arch.fc1_width) *
                         static_cast<std::size_t>(arch.fc2_width));
    layout.fc2_b = slice(static_cast<std::size_t>(arch.fc2_width));
    layout.out_w = slice(static_cast<std::size_t>(arch.fc2_width) * kNumClasses);
    layout.out_b = slice(kNumClasses);
    layout.total = at;
    return layout;
  }

  // Named slices in layout order, for per-layer checks and serialization.
  std::vector<std::pair<std::string, ParamSlice>> named() const {
    return {{"conv1_w", conv1_w}, {"conv1_b", conv1_b}, {"conv2_w", conv2_w},
            {"conv2_b", conv2_b}, {"fc1_w", fc1_w},     {"fc1_b", fc1_b},
            {"fc2_w", fc2_w},     {"fc2_b", fc2_b},     {"out_w", out_w},
            {"out_b", out_b}};
  }
};

struct VariationalNetwork {
  NetworkArch arch;
  double prior_variance = 0.1;  // zero-mean Gaussian prior on every weight
  std::vector<double> mean;
  std::vector<double> rho;  // softplus(rho) = posterior standard deviation

  ParamLayout layout() const { return ParamLayout::make(arch); }
};

// Uniform fan-in initialization for the means; every posterior deviation
// starts at init_sigma.
inline VariationalNetwork init_network(const NetworkArch& arch, std::uint64_t seed,
                                       double init_sigma = 0.05) {
  arch.validate();
  if (!(init_sigma > 0.0)) throw DataError("init_sigma must be positive");

  VariationalNetwork net;
  net.arch = arch;
  const auto layout = net.layout();
  net.mean.resize(layout.total);
  net.rho.assign(layout.total, softplus_inv(init_sigma));

  Rng rng(seed);
  const auto fill = [&](const ParamSlice& weights, const ParamSlice& bias, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < weights.size; ++i) {
      net.mean[weights.offset + i] = rng.uniform(-bound, bound);
    }
    for (std::size_t i = 0; i < bias.size; ++i) {
      net.mean[bias.offset + i] = rng.uniform(-bound, bound);
    }
  };
  fill(layout.conv1_w, layout.conv1_b, arch.conv1.in_channels * arch.conv1.kernel);
  fill(layout.conv2_w, layout.conv2_b, arch.conv2.in_channels * arch.conv2.kernel);
  fill(layout.fc1_w, layout.fc1_b, arch.flatten_dim());
  fill(layout.fc2_w, layout.fc2_b, arch.fc1_width);
  fill(layout.out_w, layout.out_b, arch.fc2_width);
  return net;
}

struct Example {
  std::array<double, kInputLen> x{};
  int class_index = 0;
};

namespace detail {

struct Workspace {
  std::vector<double> weights;  // one sampled parameter vector
  std::vector<double> conv1_pre, pool1, conv2_pre, pool2, fc1_pre, fc2_pre;
  std::vector<int> pool1_arg, pool2_arg;
  std::array<double, kNumClasses> logits{}, probs{};
  // backward scratch
  std::vector<double> d_conv1_pre, d_pool1, d_conv2_pre, d_pool2, d_fc1, d_fc2;

  void resize(const NetworkArch& arch) {
    conv1_pre.resize(static_cast<std::size_t>(arch.conv1.out_channels) * kInputLen);
    pool1.resize(static_cast<std::size_t>(arch.conv1.out_channels) *
                 static_cast<std::size_t>(arch.pool1_len()));
    pool1_arg.resize(pool1.size());
    conv2_pre.resize(static_cast<std::size_t>(arch.conv2.out_channels) *
                     static_cast<std::size_t>(arch.pool1_len()));
    pool2.resize(static_cast<std::size_t>(arch.flatten_dim()));
    pool2_arg.resize(pool2.size());
    fc1_pre.resize(static_cast<std::size_t>(arch.fc1_width));
    fc2_pre.resize(static_cast<std::size_t>(arch.fc2_width));
    d_conv1_pre.resize(conv1_pre.size());
    d_pool1.resize(pool1.size());
    d_conv2_pre.resize(conv2_pre.size());
    d_pool2.resize(pool2.size());
    d_fc1.resize(fc1_pre.size());
    d_fc2.resize(fc2_pre.size());
  }
};

// out[oc][i] = b[oc] + sum_ic sum_j w[oc][ic][j] * in[ic][i + j - pad]
inline void conv1d_forward(std::span<const double> input, int in_channels, int length,
                           std::span<const double> weights, std::span<const double> bias,
                           int out_channels, int kernel, std::span<double> output) {
  const int pad = (kernel - 1) / 2;
  for (int oc = 0; oc < out_channels; ++oc) {
    double* out_row = output.data() + static_cast<std::size_t>(oc) * static_cast<std::size_t>(length);
    for (int i = 0; i < length; ++i) out_row[i] = bias[static_cast<std::size_t>(oc)];
    for (int ic = 0; ic < in_channels; ++ic) {
      const double* in_row =
          input.data() + static_cast<std::size_t>(ic) * static_cast<std::size_t>(length);
      const double* w_row = weights.data() +
                            (static_cast<std::size_t>(oc) * static_cast<std::size_t>(in_channels) +
                             static_cast<std::size_t>(ic)) *
                                static_cast<std::size_t>(kernel);
      for (int j = 0; j < kernel; ++j) {
        const double w = w_row[j];
        const int shift = j - pad;
        const int lo = std::max(0, -shift);
        const int hi = std::min(length, length - shift);
        for (int i = lo; i < hi; ++i) out_row[i] += w * in_row[i + shift];
      }
    }
  }
}

// Accumulates weight/bias gradients; optionally propagates into d_input.
inline void conv1d_backward(std::span<const double> input, int in_channels, int length,
                            std::span<const double> weights, int out_channels, int kernel,
                            std::span<const double> d_output, std::span<double> gw,
                            std::span<double> gb, std::span<double> d_input) {
  const int pad = (kernel - 1) / 2;
  for (int oc = 0; oc < out_channels; ++oc) {
    const double* dout_row =
        d_output.data() + static_cast<std::size_t>(oc) * static_cast<std::size_t>(length);
    double bias_grad = 0.0;
    for (int i = 0; i < length; ++i) bias_grad += dout_row[i];
    gb[static_cast<std::size_t>(oc)] += bias_grad;

    for (int ic = 0; ic < in_channels; ++ic) {
      const double* in_row =
          input.data() + static_cast<std::size_t>(ic) * static_cast<std::size_t>(length);
      const std::size_t w_base =
          (static_cast<std::size_t>(oc) * static_cast<std::size_t>(in_channels) +
           static_cast<std::size_t>(ic)) *
          static_cast<std::size_t>(kernel);
      double* din_row =
          d_input.empty() ? nullptr
                          : d_input.data() + static_cast<std::size_t>(ic) * static_cast<std::size_t>(length);
      for (int j = 0; j < kernel; ++j) {
        const int shift = j - pad;
        const int lo = std::max(0, -shift);
        const int hi = std::min(length, length - shift);
        double wgrad = 0.0;
        const double w = weights[w_base + static_cast<std::size_t>(j)];
        for (int i = lo; i < hi; ++i) {
          const double g = dout_row[i];
          wgrad += g * in_row[i + shift];
          if (din_row) din_row[i + shift] += g * w;
        }
        gw[w_base + static_cast<std::size_t>(j)] += wgrad;
      }
    }
  }
}

// ReLU then max-pool with window/stride 2; records which half won.
inline void relu_maxpool(std::span<const double> pre, int channels, int length,
                         std::span<double> pooled, std::span<int> arg) {
  const int out_len = length / 2;
  for (int c = 0; c < channels; ++c) {
    const double* row = pre.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(length);
    double* out = pooled.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(out_len);
    int* amax = arg.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(out_len);
    for (int t = 0; t < out_len; ++t) {
      const double a0 = std::max(row[2 * t], 0.0);
      const double a1 = std::max(row[2 * t + 1], 0.0);
      const int pick = a1 > a0 ? 1 : 0;  // ties to the first element
      out[t] = pick ? a1 : a0;
      amax[t] = pick;
    }
  }
}

inline void relu_maxpool_backward(std::span<const double> pre, int channels, int length,
                                  std::span<const double> d_pooled, std::span<const int> arg,
                                  std::span<double> d_pre) {
  const int out_len = length / 2;
  std::fill(d_pre.begin(), d_pre.end(), 0.0);
  for (int c = 0; c < channels; ++c) {
    const double* row = pre.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(length);
    const double* dout =
        d_pooled.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(out_len);
    const int* amax = arg.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(out_len);
    double* dpre_row = d_pre.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(length);
    for (int t = 0; t < out_len; ++t) {
      const int i = 2 * t + amax[t];
      if (row[i] > 0.0) dpre_row[i] += dout[t];
    }
  }
}

inline void fc_forward(std::span<const double> input, std::span<const double> weights,
                       std::span<const double> bias, int out_dim, int in_dim,
                       std::span<double> output) {
  for (int o = 0; o < out_dim; ++o) {
    const double* w_row =
        weights.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(in_dim);
    double acc = bias[static_cast<std::size_t>(o)];
    for (int i = 0; i < in_dim; ++i) acc += w_row[i] * input[static_cast<std::size_t>(i)];
    output[static_cast<std::size_t>(o)] = acc;
  }
}

inline void fc_backward(std::span<const double> input, std::span<const double> weights,
                        int out_dim, int in_dim, std::span<const double> d_output,
                        std::span<double> gw, std::span<double> gb, std::span<double> d_input) {
  if (!d_input.empty()) std::fill(d_input.begin(), d_input.end(), 0.0);
  for (int o = 0; o < out_dim; ++o) {
    const double g = d_output[static_cast<std::size_t>(o)];
    gb[static_cast<std::size_t>(o)] += g;
    const std::size_t base = static_cast<std::size_t>(o) * static_cast<std::size_t>(in_dim);
    for (int i = 0; i < in_dim; ++i) {
      gw[base + static_cast<std::size_t>(i)] += g * input[static_cast<std::size_t>(i)];
      if (!d_input.empty()) {
        d_input[static_cast<std::size_t>(i)] += g * weights[base + static_cast<std::size_t>(i)];
      }
    }
  }
}

inline void softmax(const std::array<double, kNumClasses>& logits,
                    std::array<double, kNumClasses>& probs) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    probs[c] = std::exp(logits[c] - peak);
    sum += probs[c];
  }
  for (auto& p : probs) p /= sum;
}

inline void forward(const VariationalNetwork& net, const ParamLayout& layout,
                    std::span<const double> weights, std::span<const double> x, Workspace& ws) {
  const auto& arch = net.arch;
  const auto w = [&](const ParamSlice& s) { return weights.subspan(s.offset, s.size); };

  conv1d_forward(x, arch.conv1.in_channels, kInputLen, w(layout.conv1_w), w(layout.conv1_b),
                 arch.conv1.out_channels, arch.conv1.kernel, ws.conv1_pre);
  relu_maxpool(ws.conv1_pre, arch.conv1.out_channels, kInputLen, ws.pool1, ws.pool1_arg);

  conv1d_forward(ws.pool1, arch.conv2.in_channels, arch.pool1_len(), w(layout.conv2_w),
                 w(layout.conv2_b), arch.conv2.out_channels, arch.conv2.kernel, ws.conv2_pre);
  relu_maxpool(ws.conv2_pre, arch.conv2.out_channels, arch.pool1_len(), ws.pool2, ws.pool2_arg);

  fc_forward(ws.pool2, w(layout.fc1_w), w(layout.fc1_b), arch.fc1_width, arch.flatten_dim(),
             ws.fc1_pre);
  std::vector<double> h1(ws.fc1_pre);
  for (auto& v : h1) v = std::max(v, 0.0);
  fc_forward(h1, w(layout.fc2_w), w(layout.fc2_b), arch.fc2_width, arch.fc1_width, ws.fc2_pre);
  std::vector<double> h2(ws.fc2_pre);
  for (auto& v : h2) v = std::max(v, 0.0);
  fc_forward(h2, w(layout.out_w), w(layout.out_b), kNumClasses, arch.fc2_width,
             std::span<double>(ws.logits.data(), kNumClasses));
  softmax(ws.logits, ws.probs);
}

// Backward for one sample; d_logits already carries the batch scaling.
inline void backward(const VariationalNetwork& net, const ParamLayout& layout,
                     std::span<const double> weights, std::span<const double> x, Workspace& ws,
                     const std::array<double, kNumClasses>& d_logits, std::span<double> gw_total) {
  const auto& arch = net.arch;
  const auto w = [&](const ParamSlice& s) { return weights.subspan(s.offset, s.size); };
  const auto g = [&](const ParamSlice& s) { return gw_total.subspan(s.offset, s.size); };

  // recompute the relu'd fc activations from the stored pre-activations
  std::vector<double> h1(ws.fc1_pre), h2(ws.fc2_pre);
  for (auto& v : h1) v = std::max(v, 0.0);
  for (auto& v : h2) v = std::max(v, 0.0);

  fc_backward(h2, w(layout.out_w), kNumClasses, arch.fc2_width,
              std::span<const double>(d_logits.data(), kNumClasses), g(layout.out_w),
              g(layout.out_b), ws.d_fc2);
  for (int i = 0; i < arch.fc2_width; ++i) {
    if (ws.fc2_pre[static_cast<std::size_t>(i)] <= 0.0) ws.d_fc2[static_cast<std::size_t>(i)] = 0.0;
  }

  fc_backward(h1, w(layout.fc2_w), arch.fc2_width, arch.fc1_width, ws.d_fc2, g(layout.fc2_w),
              g(layout.fc2_b), ws.d_fc1);
  for (int i = 0; i < arch.fc1_width; ++i) {
    if (ws.fc1_pre[static_cast<std::size_t>(i)] <= 0.0) ws.d_fc1[static_cast<std::size_t>(i)] = 0.0;
  }

  fc_backward(ws.pool2, w(layout.fc1_w), arch.fc1_width, arch.flatten_dim(), ws.d_fc1,
              g(layout.fc1_w), g(layout.fc1_b), ws.d_pool2);

  relu_maxpool_backward(ws.conv2_pre, arch.conv2.out_channels, arch.pool1_len(), ws.d_pool2,
                        ws.pool2_arg, ws.d_conv2_pre);
  std::fill(ws.d_pool1.begin(), ws.d_pool1.end(), 0.0);
  conv1d_backward(ws.pool1, arch.conv2.in_channels, arch.pool1_len(), w(layout.conv2_w),
                  arch.conv2.out_channels, arch.conv2.kernel, ws.d_conv2_pre, g(layout.conv2_w),
                  g(layout.conv2_b), ws.d_pool1);

  relu_maxpool_backward(ws.conv1_pre, arch.conv1.out_channels, kInputLen, ws.d_pool1, ws.pool1_arg,
                        ws.d_conv1_pre);
  conv1d_backward(x, arch.conv1.in_channels, kInputLen, w(layout.conv1_w),
                  arch.conv1.out_channels, arch.conv1.kernel, ws.d_conv1_pre, g(layout.conv1_w),
                  g(layout.conv1_b), {});
}

inline void sample_weights(const VariationalNetwork& net, std::span<const double> eps,
                           std::vector<double>& out) {
  out.resize(net.mean.size());
  for (std::size_t i = 0; i < net.mean.size(); ++i) {
    out[i] = net.mean[i] + softplus(net.rho[i]) * eps[i];
  }
}

}  // namespace detail

// One reparameterized draw: w = mean + softplus(rho) * eps, eps ~ N(0, 1).
inline std::array<double, kNumClasses> forward_with_eps(const VariationalNetwork& net,
                                                        std::span<const double> features,
                                                        std::span<const double> eps) {
  if (features.size() != kInputLen) throw DataError("feature vector must have 211 bins");
  const auto layout = net.layout();
  detail::Workspace ws;
  ws.resize(net.arch);
  detail::sample_weights(net, eps, ws.weights);
  detail::forward(net, layout, ws.weights, features, ws);
  return ws.probs;
}

inline std::array<double, kNumClasses> forward_sample(const VariationalNetwork& net,
                                                      std::span<const double> features, Rng& rng) {
  std::vector<double> eps(net.mean.size());
  for (auto& e : eps) e = rng.normal();
  return forward_with_eps(net, features, eps);
}

// Deterministic pass through the posterior means (eps = 0).
inline std::array<double, kNumClasses> forward_mean(const VariationalNetwork& net,
                                                    std::span<const double> features) {
  const std::vector<double> eps(net.mean.size(), 0.0);
  return forward_with_eps(net, features, eps);
}

struct LossGrad {
  double loss = 0.0;
  double data_loss = 0.0;  // mean categorical cross-entropy
  double kl = 0.0;         // total KL(posterior || prior)
  std::vector<double> grad_mean;
  std::vector<double> grad_rho;
};

// ELBO loss of one sampled pass over the batch, with analytic gradients for
// both variational parameter vectors. Per-parameter KL against the zero-mean
// Gaussian prior: log(sp/sq) + (sq^2 + mu^2) / (2 sp^2) - 1/2.
inline LossGrad elbo_loss_with_eps(const VariationalNetwork& net, std::span<const Example> batch,
                                   double kl_weight, std::span<const double> eps) {
  if (batch.empty()) throw DataError("elbo batch must be non-empty");
  if (eps.size() != net.mean.size()) throw DataError("eps size mismatch");

  const auto layout = net.layout();
  detail::Workspace ws;
  ws.resize(net.arch);
  detail::sample_weights(net, eps, ws.weights);

  std::vector<double> gw(layout.total, 0.0);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double data_loss = 0.0;

  for (const auto& sample : batch) {
    detail::forward(net, layout, ws.weights, sample.x, ws);
    const double p = std::max(ws.probs[static_cast<std::size_t>(sample.class_index)], 1e-300);
    data_loss -= std::log(p) * inv_batch;

    std::array<double, kNumClasses> d_logits = ws.probs;
    d_logits[static_cast<std::size_t>(sample.class_index)] -= 1.0;
    for (auto& d : d_logits) d *= inv_batch;
    detail::backward(net, layout, ws.weights, sample.x, ws, d_logits, gw);
  }

  LossGrad result;
  result.data_loss = data_loss;
  result.grad_mean.resize(layout.total);
  result.grad_rho.resize(layout.total);

  const double prior_var = net.prior_variance;
  const double prior_sd = std::sqrt(prior_var);
  double kl = 0.0;
  for (std::size_t i = 0; i < layout.total; ++i) {
    const double sd = softplus(net.rho[i]);
    const double mu = net.mean[i];
    kl += std::log(prior_sd / sd) + (sd * sd + mu * mu) / (2.0 * prior_var) - 0.5;

    const double d_sd = sigmoid(net.rho[i]);  // d softplus / d rho
    result.grad_mean[i] = gw[i] + kl_weight * mu / prior_var;
    result.grad_rho[i] = gw[i] * eps[i] * d_sd + kl_weight * (sd / prior_var - 1.0 / sd) * d_sd;
  }
  result.kl = kl;
  result.loss = data_loss + kl_weight * kl;
  return result;
}

inline LossGrad elbo_loss(const VariationalNetwork& net, std::span<const Example> batch,
                          double kl_weight, Rng& rng) {
  std::vector<double> eps(net.mean.size());
  for (auto& e : eps) e = rng.normal();
  return elbo_loss_with_eps(net, batch, kl_weight, eps);
}

struct TrainConfig {
  double learning_rate = 1e-3;
  int max_epochs = 200;
  int patience = 20;  // epochs without validation improvement
  int batch_size = 32;
  double prior_variance = 0.1;
  double init_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0) || max_epochs < 0 || patience < 1 || batch_size < 1 ||
        !(prior_variance > 0.0) || !(init_sigma > 0.0)) {
      throw DataError("invalid training configuration");
    }
  }
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
};

inline double mean_cross_entropy(const VariationalNetwork& net, std::span<const Example> rows) {
  double total = 0.0;
  for (const auto& row : rows) {
    const auto probs = forward_mean(net, row.x);
    total -= std::log(std::max(probs[static_cast<std::size_t>(row.class_index)], 1e-300));
  }
  return total / static_cast<double>(rows.size());
}

// Mini-batch training with the adaptive-moment update rule, one weight
// sample per step, per-batch KL weight 1/(batches per epoch), and early
// stopping that restores the best-validation parameters. The validation loss
// is the deterministic posterior-mean cross-entropy.
inline TrainResult train(VariationalNetwork& net, std::span<const Example> train_rows,
                         std::span<const Example> val_rows, const TrainConfig& config) {
  config.validate();
  if (train_rows.empty() || val_rows.empty()) {
    throw DataError("training and validation sets must be non-empty");
  }
  net.prior_variance = config.prior_variance;

  TrainResult result;
  if (config.max_epochs == 0) return result;

  const auto layout = net.layout();
  const std::size_t n = train_rows.size();
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  const std::size_t batches = (n + batch_size - 1) / batch_size;
  // Per-batch KL share of 1/batches, restated for the mean (not summed)
  // cross-entropy term: divide by the batch size as well, so one epoch prices
  // the full KL once against the full data term.
  const double kl_weight = 1.0 / (static_cast<double>(batches) * static_cast<double>(batch_size));

  std::vector<double> m_mean(layout.total, 0.0), v_mean(layout.total, 0.0);
  std::vector<double> m_rho(layout.total, 0.0), v_rho(layout.total, 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  long step = 0;

  Rng rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_mean, best_rho;
  std::vector<double> eps(layout.total);
  std::vector<Example> batch;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;

    for (std::size_t b = 0; b < batches; ++b) {
      batch.clear();
      const std::size_t begin = b * batch_size;
      const std::size_t end = std::min(begin + batch_size, n);
      for (std::size_t i = begin; i < end; ++i) batch.push_back(train_rows[order[i]]);

      for (auto& e : eps) e = rng.normal();
      const auto lg = elbo_loss_with_eps(net, batch, kl_weight, eps);
      if (!std::isfinite(lg.loss)) throw Diverged();
      epoch_loss += lg.loss;

      ++step;
      const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t i = 0; i < layout.total; ++i) {
        m_mean[i] = kBeta1 * m_mean[i] + (1.0 - kBeta1) * lg.grad_mean[i];
        v_mean[i] = kBeta2 * v_mean[i] + (1.0 - kBeta2) * lg.grad_mean[i] * lg.grad_mean[i];
        net.mean[i] -= config.learning_rate * (m_mean[i] / bias1) /
                       (std::sqrt(v_mean[i] / bias2) + kAdamEps);

        m_rho[i] = kBeta1 * m_rho[i] + (1.0 - kBeta1) * lg.grad_rho[i];
        v_rho[i] = kBeta2 * v_rho[i] + (1.0 - kBeta2) * lg.grad_rho[i] * lg.grad_rho[i];
        net.rho[i] -= config.learning_rate * (m_rho[i] / bias1) /
                      (std::sqrt(v_rho[i] / bias2) + kAdamEps);
      }
    }

    EpochStats stats;
    stats.train_loss = epoch_loss / static_cast<double>(batches);
    stats.val_loss = mean_cross_entropy(net, val_rows);
    if (!std::isfinite(stats.val_loss)) throw Diverged();
    result.history.push_back(stats);

    if (stats.val_loss < best_val) {
      best_val = stats.val_loss;
      result.best_epoch = epoch;
      best_mean = net.mean;
      best_rho = net.rho;
    } else if (epoch - result.best_epoch >= config.patience) {
      break;
    }
  }

  if (result.best_epoch >= 0) {
    net.mean = std::move(best_mean);
    net.rho = std::move(best_rho);
  }
  return result;
}

// n independent reparameterized draws; each row is a probability 4-vector.
// Draws consume the generator sequentially, so n=1 equals forward_sample.
inline std::vector<std::array<double, kNumClasses>> predict_mc(const VariationalNetwork& net,
                                                               std::span<const double> features,
                                                               int n, Rng& rng) {
  if (n < 1) throw DataError("predict_mc needs n >= 1");
  std::vector<std::array<double, kNumClasses>> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    rows.push_back(forward_sample(net, features, rng));
  }
  return rows;
}

}  // namespace pffp::bnn
