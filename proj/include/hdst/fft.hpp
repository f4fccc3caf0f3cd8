#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

#include "hdst/tensor.hpp"

namespace hdst {

namespace fft {

using cplx = std::complex<double>;

/// Unnormalized 1-D DFT of a fixed length. Power-of-two lengths use an
/// iterative radix-2 transform; other lengths go through Bluestein's chirp-z
/// reformulation on a power-of-two convolution.
class Plan1d {
public:
    explicit Plan1d(std::size_t n);

    std::size_t size() const noexcept { return n_; }

    /// In place. Forward uses exp(-2*pi*i*jk/n); inverse the conjugate kernel.
    /// `scratch` must hold at least scratch_size() elements.
    void execute(cplx* data, bool inverse, cplx* scratch) const;
    std::size_t scratch_size() const noexcept { return bluestein_ ? conv_len_ : 0; }

private:
    void radix2(cplx* data, bool inverse) const;

    std::size_t n_ = 0;
    bool bluestein_ = false;
    std::vector<cplx> twiddles_;       // radix-2 twiddles, size n/2
    std::vector<std::size_t> bitrev_;  // radix-2 permutation

    // Bluestein state
    std::size_t conv_len_ = 0;
    std::vector<cplx> chirp_;          // exp(-i*pi*k^2/n), k < n
    std::vector<cplx> chirp_kernel_fft_;
    std::unique_ptr<Plan1d> inner_;
};

/// Cached plan for length n, shared per thread.
const Plan1d& plan_for(std::size_t n);

/// Orthonormal 2-D transform of one h-by-w row-major plane, in place.
void transform_plane(cplx* plane, std::size_t h, std::size_t w, bool inverse);

}  // namespace fft

/// Orthonormal 2-D DFT over the last two axes (1/sqrt(HW) in both directions).
/// Rejects non-finite input.
ComplexTensor spectral_forward(const Tensor& x);
ComplexTensor spectral_forward(const ComplexTensor& x);

/// Inverse orthonormal 2-D DFT returning the real part. When `imag_residue`
/// is given it receives the largest discarded imaginary magnitude.
Tensor spectral_inverse(const ComplexTensor& f, double* imag_residue = nullptr);
ComplexTensor spectral_inverse_complex(const ComplexTensor& f);

}  // namespace hdst
