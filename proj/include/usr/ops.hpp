#pragma once

#include "usr/tensor.hpp"

namespace usr::nn {

enum class Activation { relu, leaky_relu, sigmoid, gelu };
enum class LossKind { mse, l1 };

// Projection weights for windowed multi-head self-attention. Each w* is CxC
// row-major (out x in), each b* is a C-vector.
struct WmsaParams {
    TensorPtr wq, bq, wk, bk, wv, bv, wo, bo;
};

// input: C_in x H x W, weight: C_out x C_in x k x k, bias: C_out.
// Zero padding, H' = (H + 2*padding - k) / stride + 1 (floor).
TensorPtr conv2d(const TensorPtr& input, const TensorPtr& weight, const TensorPtr& bias,
                 int padding, int stride = 1);

// feat: C x H x W, kernels: C x h x w applied per channel with zero padding of
// (h-1)/2 so the output keeps C x H x W. Kernels are data, not parameters;
// gradients flow to both arguments.
TensorPtr depthwise_dynamic_conv(const TensorPtr& feat, const TensorPtr& kernels);

// C*r^2 x H x W -> C x rH x rW, out[c][y*r+dy][x*r+dx] = in[c*r^2+dy*r+dx][y][x].
TensorPtr pixel_shuffle(const TensorPtr& x, int r);
// Exact inverse rearrangement of pixel_shuffle.
TensorPtr pixel_unshuffle(const TensorPtr& x, int r);

// Attention within non-overlapping window x window patches; softmax over keys
// scaled by 1/sqrt(C/heads). When attention_out is non-null the softmax rows
// are captured (per window, per head, L x L row-major) for inspection.
TensorPtr window_msa(const TensorPtr& feat, const WmsaParams& p, int window, int heads,
                     std::vector<double>* attention_out = nullptr);

// Normalizes the channel vector at each spatial position (3-D C x H x W input)
// or the whole vector (1-D input); gamma/beta are C-vectors, epsilon 1e-5.
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta);

TensorPtr activation(Activation kind, const TensorPtr& x, double slope = 0.1);

// C x H x W -> C per-channel spatial mean.
TensorPtr global_avg_pool(const TensorPtr& feat);

// y = W x + b with W: out x in row-major.
TensorPtr linear(const TensorPtr& x, const TensorPtr& weight, const TensorPtr& bias);

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);  // elementwise
// Scalar sum of all elements.
TensorPtr sum_all(const TensorPtr& x);
TensorPtr scale(const TensorPtr& x, double c);
// Scale by a 1-element graph node; gradient reaches both arguments.
TensorPtr scale_by(const TensorPtr& x, const TensorPtr& s);
// feat: C x H x W multiplied per channel by gates: C.
TensorPtr channel_scale(const TensorPtr& feat, const TensorPtr& gates);

TensorPtr concat(const TensorPtr& a, const TensorPtr& b);
TensorPtr slice(const TensorPtr& x, std::int64_t start, std::int64_t len);
TensorPtr reshape(const TensorPtr& x, Shape shape);
TensorPtr clamp(const TensorPtr& x, double lo, double hi);

// mu + exp(logvar/2) .* z; z is treated as a constant (reparameterization).
TensorPtr gaussian_reparam(const TensorPtr& mu, const TensorPtr& logvar, const TensorPtr& z);

// Scalar sum_i |a_i - b_i| with subgradient 0 at ties.
TensorPtr sum_abs_diff(const TensorPtr& a, const TensorPtr& b);

// Mean over all elements of squared (mse) or absolute (l1) difference.
TensorPtr reconstruction_loss(LossKind kind, const TensorPtr& pred, const TensorPtr& target);

}  // namespace usr::nn
