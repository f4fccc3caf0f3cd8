#pragma once

// Serial reference kernels written directly from the defining sums, one
// output element at a time. Slow; kept for parity tests and the benchmark.

#include "hdst/kernels.hpp"
#include "hdst/tensor.hpp"

namespace hdst::kernels::reference {

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                      const ConvGeometry& g);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight, const ConvGeometry& g);
Tensor conv2d_backward_weight(const Tensor& grad_out, const Tensor& input, const ConvGeometry& g);

/// O((HW)^2) direct orthonormal DFT over the trailing two axes.
void dft2_planes(Tensor& real, Tensor& imag, bool inverse);

Tensor attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                         Tensor& probs);

}  // namespace hdst::kernels::reference
