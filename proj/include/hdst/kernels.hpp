#pragma once

// Data-parallel numeric kernels. Every kernel partitions work over disjoint
// output slices and keeps a fixed per-element accumulation order, so results
// are bit-identical for any thread count. Serial counterparts written from the
// defining formulas live in hdst/reference.hpp.

#include <cstddef>

#include "hdst/tensor.hpp"

namespace hdst::kernels {

struct ConvGeometry {
    std::size_t batch, in_channels, out_channels, height, width;
    std::size_t kernel_h, kernel_w, dilation, groups;
    std::ptrdiff_t pad_y, pad_x;

    std::size_t in_per_group() const { return in_channels / groups; }
    std::size_t out_per_group() const { return out_channels / groups; }
};

/// Validates a conv2d call and derives "same" zero padding. Throws ShapeError
/// naming the offending dimension, or std::invalid_argument for dilation < 1.
ConvGeometry conv_geometry(const Shape& input, const Shape& weight, const Tensor* bias,
                           long dilation, long groups);

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                      const ConvGeometry& g);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight, const ConvGeometry& g);
Tensor conv2d_backward_weight(const Tensor& grad_out, const Tensor& input, const ConvGeometry& g);

/// Orthonormal 2-D DFT over the trailing two axes of paired planes, in place.
void fft2_planes(Tensor& real, Tensor& imag, bool inverse);

/// rows x in_features times (out_features x in_features)^T.
Tensor linear_forward(const Tensor& x, const Tensor& weight);
Tensor linear_backward_input(const Tensor& grad_out, const Tensor& weight);
Tensor linear_backward_weight(const Tensor& grad_out, const Tensor& x);

/// Scaled dot-product attention on [N, L, C] sequences split into `heads`
/// contiguous channel slices. `probs` receives [N, heads, L, L] row-stochastic
/// weights for reuse in the backward pass.
Tensor attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                         Tensor& probs);

struct AttentionGrads {
    Tensor q, k, v;
};
AttentionGrads attention_backward(const Tensor& grad_out, const Tensor& q, const Tensor& k,
                                  const Tensor& v, const Tensor& probs, std::size_t heads);

int max_threads();

}  // namespace hdst::kernels
