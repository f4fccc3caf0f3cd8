#include "hdst/fft.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "hdst/kernels.hpp"

namespace hdst {
namespace fft {

namespace {

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

std::size_t next_pow2(std::size_t n) {
    std::size_t m = 1;
    while (m < n) m <<= 1;
    return m;
}

}  // namespace

Plan1d::Plan1d(std::size_t n) : n_(n) {
    if (n == 0) throw ShapeError("fft length must be positive");
    if (is_pow2(n)) {
        twiddles_.resize(n / 2);
        for (std::size_t k = 0; k < n / 2; ++k) {
            const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
            twiddles_[k] = cplx(std::cos(a), std::sin(a));
        }
        bitrev_.resize(n);
        std::size_t bits = 0;
        while ((std::size_t{1} << bits) < n) ++bits;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < bits; ++b)
                if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
            bitrev_[i] = r;
        }
        return;
    }

    bluestein_ = true;
    conv_len_ = next_pow2(2 * n - 1);
    chirp_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the phase argument small
        const std::size_t k2 = (k * k) % (2 * n);
        const double a = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        chirp_[k] = cplx(std::cos(a), std::sin(a));
    }
    inner_ = std::make_unique<Plan1d>(conv_len_);
    chirp_kernel_fft_.assign(conv_len_, cplx(0.0, 0.0));
    chirp_kernel_fft_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n; ++k) {
        chirp_kernel_fft_[k] = std::conj(chirp_[k]);
        chirp_kernel_fft_[conv_len_ - k] = std::conj(chirp_[k]);
    }
    inner_->radix2(chirp_kernel_fft_.data(), false);
}

void Plan1d::radix2(cplx* data, bool inverse) const {
    const std::size_t n = n_;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = bitrev_[i];
        if (i < r) std::swap(data[i], data[r]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                cplx t = twiddles_[k * step];
                if (inverse) t = std::conj(t);
                const cplx u = data[start + k];
                const cplx v = data[start + k + half] * t;
                data[start + k] = u + v;
                data[start + k + half] = u - v;
            }
        }
    }
}

void Plan1d::execute(cplx* data, bool inverse, cplx* scratch) const {
    if (!bluestein_) {
        radix2(data, inverse);
        return;
    }
    // inverse(x) = conj(forward(conj(x)))
    const std::size_t n = n_;
    const std::size_t m = conv_len_;
    for (std::size_t k = 0; k < n; ++k) {
        const cplx x = inverse ? std::conj(data[k]) : data[k];
        scratch[k] = x * chirp_[k];
    }
    for (std::size_t k = n; k < m; ++k) scratch[k] = cplx(0.0, 0.0);
    inner_->radix2(scratch, false);
    for (std::size_t k = 0; k < m; ++k) scratch[k] *= chirp_kernel_fft_[k];
    inner_->radix2(scratch, true);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k) {
        const cplx y = scratch[k] * inv_m * chirp_[k];
        data[k] = inverse ? std::conj(y) : y;
    }
}

const Plan1d& plan_for(std::size_t n) {
    thread_local std::map<std::size_t, std::unique_ptr<Plan1d>> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, std::make_unique<Plan1d>(n)).first;
    return *it->second;
}

void transform_plane(cplx* plane, std::size_t h, std::size_t w, bool inverse) {
    const Plan1d& row_plan = plan_for(w);
    const Plan1d& col_plan = plan_for(h);
    std::vector<cplx> scratch(std::max(row_plan.scratch_size(), col_plan.scratch_size()));
    for (std::size_t y = 0; y < h; ++y) row_plan.execute(plane + y * w, inverse, scratch.data());
    std::vector<cplx> column(h);
    for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t y = 0; y < h; ++y) column[y] = plane[y * w + x];
        col_plan.execute(column.data(), inverse, scratch.data());
        for (std::size_t y = 0; y < h; ++y) plane[y * w + x] = column[y];
    }
    const double norm = 1.0 / std::sqrt(static_cast<double>(h * w));
    for (std::size_t i = 0; i < h * w; ++i) plane[i] *= norm;
}

}  // namespace fft

namespace {

void require_spatial(const Shape& s, const char* what) {
    if (s.size() < 2) throw ShapeError(std::string(what) + ": need at least 2 axes, got " + shape_string(s));
}

}  // namespace

ComplexTensor spectral_forward(const Tensor& x) {
    require_spatial(x.shape(), "spectral_forward");
    if (!x.all_finite()) throw NumericError("spectral_forward: non-finite input");
    ComplexTensor out(x, Tensor::zeros(x.shape()));
    kernels::fft2_planes(out.real, out.imag, false);
    return out;
}

ComplexTensor spectral_forward(const ComplexTensor& x) {
    require_spatial(x.shape(), "spectral_forward");
    if (!x.real.all_finite() || !x.imag.all_finite())
        throw NumericError("spectral_forward: non-finite input");
    ComplexTensor out = x;
    kernels::fft2_planes(out.real, out.imag, false);
    return out;
}

ComplexTensor spectral_inverse_complex(const ComplexTensor& f) {
    require_spatial(f.shape(), "spectral_inverse");
    if (!f.real.all_finite() || !f.imag.all_finite())
        throw NumericError("spectral_inverse: non-finite input");
    ComplexTensor out = f;
    kernels::fft2_planes(out.real, out.imag, true);
    return out;
}

Tensor spectral_inverse(const ComplexTensor& f, double* imag_residue) {
    ComplexTensor out = spectral_inverse_complex(f);
    if (imag_residue) *imag_residue = out.imag.max_abs();
    return std::move(out.real);
}

}  // namespace hdst
