#pragma once

// Differentiable operations over Variables. Each op computes its value
// eagerly and, when a tape is active and any input requires gradients,
// records a closure that propagates output gradients to its inputs.

#include <cstddef>
#include <vector>

#include "hdst/autograd.hpp"
#include "hdst/tensor.hpp"

namespace hdst::ops {

/// Dilated, grouped 2-D cross-correlation with "same" zero padding.
/// `bias` may be an undefined Variable.
Variable conv2d(const Variable& x, const Variable& weight, const Variable& bias,
                long dilation = 1, long groups = 1);

// Elementwise. Binary ops require equal shapes.
Variable add(const Variable& a, const Variable& b);
Variable sub(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable scale(const Variable& a, double s);
/// s * a + t
Variable affine(const Variable& a, double s, double t);
/// a times a one-element Variable.
Variable scale_by(const Variable& a, const Variable& s);
Variable sigmoid(const Variable& a);
/// Exact form x * Phi(x).
Variable gelu(const Variable& a);

/// x[B,C,H,W] + b[C] broadcast over batch and space.
Variable add_channel_bias(const Variable& x, const Variable& bias);
/// x[B,C,H,W] * s[B,C,1,1].
Variable channel_scale(const Variable& x, const Variable& s);
Variable global_avg_pool(const Variable& x);
Variable broadcast_spatial(const Variable& x, std::size_t height, std::size_t width);
Variable concat_channels(const std::vector<Variable>& parts);

/// Per-pixel normalization across channels of [B,C,H,W] with affine gamma/beta [C].
Variable layer_norm_channels(const Variable& x, const Variable& gamma, const Variable& beta,
                             double eps = 1e-5);

/// Orthonormal 2-D FFT of a real [B,C,H,W] input packed as [B,2C,H,W]:
/// channels [0,C) hold real parts, [C,2C) imaginary parts.
Variable fft_packed(const Variable& x);
/// Inverse of the packed layout, keeping the real part: [B,2C,H,W] -> [B,C,H,W].
Variable ifft_packed_real(const Variable& z);

/// [B,C,H,W] -> [B*(H/wh)*(W/ww), wh*ww, C]. Requires wh | H and ww | W.
Variable window_partition(const Variable& x, std::size_t wh, std::size_t ww);
/// Inverse of window_partition for the given output shape.
Variable window_merge(const Variable& windows, const Shape& image_shape, std::size_t wh, std::size_t ww);

/// x[..., in] times weight[out, in]^T, no bias.
Variable linear(const Variable& x, const Variable& weight);
/// Multi-head scaled dot-product attention over [N,L,C]; heads split channels
/// contiguously. When `probs` is given it receives the [N,heads,L,L] weights.
Variable attention(const Variable& q, const Variable& k, const Variable& v, std::size_t heads,
                   Tensor* probs = nullptr);

Variable softmax(const Variable& x, std::size_t axis);

/// Reflective padding on the bottom/right edges of [B,C,H,W].
Variable reflect_pad(const Variable& x, std::size_t pad_bottom, std::size_t pad_right);
/// Keeps the top-left height x width region of [B,C,H,W].
Variable crop(const Variable& x, std::size_t height, std::size_t width);

Variable sum(const Variable& x);
Variable mean_squared_error(const Variable& prediction, const Tensor& target);

// Value-level helpers shared with non-differentiable callers.
Tensor softmax(const Tensor& x, std::size_t axis);
double gelu_value(double x);
double sigmoid_value(double x);
std::size_t reflect_index(std::ptrdiff_t i, std::size_t extent);

}  // namespace hdst::ops
