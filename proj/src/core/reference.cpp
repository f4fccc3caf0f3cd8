#include "hdst/reference.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace hdst::kernels::reference {

namespace {

using idx = std::ptrdiff_t;

bool inside(idx v, std::size_t extent) { return v >= 0 && v < static_cast<idx>(extent); }

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                      const ConvGeometry& g) {
    Tensor out(Shape{g.batch, g.out_channels, g.height, g.width});
    const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t co = 0; co < g.out_channels; ++co)
            for (std::size_t y = 0; y < g.height; ++y)
                for (std::size_t x = 0; x < g.width; ++x) {
                    double acc = (bias && !bias->empty()) ? (*bias)[co] : 0.0;
                    for (std::size_t cil = 0; cil < cin_g; ++cil) {
                        const std::size_t ci = (co / cout_g) * cin_g + cil;
                        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                                const idx iy = static_cast<idx>(y + ky * g.dilation) - g.pad_y;
                                const idx ix = static_cast<idx>(x + kx * g.dilation) - g.pad_x;
                                if (!inside(iy, g.height) || !inside(ix, g.width)) continue;
                                acc += weight.at(co, cil, ky, kx) *
                                       input.at(b, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                            }
                    }
                    out.at(b, co, y, x) = acc;
                }
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight, const ConvGeometry& g) {
    Tensor gin(Shape{g.batch, g.in_channels, g.height, g.width});
    const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t iy = 0; iy < g.height; ++iy)
                for (std::size_t ix = 0; ix < g.width; ++ix) {
                    double acc = 0.0;
                    const std::size_t grp = ci / cin_g, cil = ci % cin_g;
                    for (std::size_t col = 0; col < cout_g; ++col) {
                        const std::size_t co = grp * cout_g + col;
                        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                                const idx y = static_cast<idx>(iy) + g.pad_y - static_cast<idx>(ky * g.dilation);
                                const idx x = static_cast<idx>(ix) + g.pad_x - static_cast<idx>(kx * g.dilation);
                                if (!inside(y, g.height) || !inside(x, g.width)) continue;
                                acc += weight.at(co, cil, ky, kx) *
                                       grad_out.at(b, co, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
                            }
                    }
                    gin.at(b, ci, iy, ix) = acc;
                }
    return gin;
}

Tensor conv2d_backward_weight(const Tensor& grad_out, const Tensor& input, const ConvGeometry& g) {
    const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
    Tensor gw(Shape{g.out_channels, cin_g, g.kernel_h, g.kernel_w});
    for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t cil = 0; cil < cin_g; ++cil)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                    const std::size_t ci = (co / cout_g) * cin_g + cil;
                    double acc = 0.0;
                    for (std::size_t b = 0; b < g.batch; ++b)
                        for (std::size_t y = 0; y < g.height; ++y)
                            for (std::size_t x = 0; x < g.width; ++x) {
                                const idx iy = static_cast<idx>(y + ky * g.dilation) - g.pad_y;
                                const idx ix = static_cast<idx>(x + kx * g.dilation) - g.pad_x;
                                if (!inside(iy, g.height) || !inside(ix, g.width)) continue;
                                acc += grad_out.at(b, co, y, x) *
                                       input.at(b, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                            }
                    gw.at(co, cil, ky, kx) = acc;
                }
    return gw;
}

void dft2_planes(Tensor& real, Tensor& imag, bool inverse) {
    require_same_shape(real, imag, "dft2_planes");
    const std::size_t h = real.shape()[real.rank() - 2];
    const std::size_t w = real.shape()[real.rank() - 1];
    const std::size_t plane = h * w;
    const double sign = inverse ? 1.0 : -1.0;
    const double norm = 1.0 / std::sqrt(static_cast<double>(plane));
    std::vector<double> re(plane), im(plane);
    for (std::size_t base = 0; base < real.numel(); base += plane) {
        for (std::size_t u = 0; u < h; ++u)
            for (std::size_t v = 0; v < w; ++v) {
                double sr = 0.0, si = 0.0;
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x) {
                        const double a = sign * 2.0 * std::numbers::pi *
                                         (static_cast<double>((u * y) % h) / static_cast<double>(h) +
                                          static_cast<double>((v * x) % w) / static_cast<double>(w));
                        const double c = std::cos(a), s = std::sin(a);
                        const double xr = real[base + y * w + x], xi = imag[base + y * w + x];
                        sr += xr * c - xi * s;
                        si += xr * s + xi * c;
                    }
                re[u * w + v] = sr * norm;
                im[u * w + v] = si * norm;
            }
        for (std::size_t i = 0; i < plane; ++i) {
            real[base + i] = re[i];
            imag[base + i] = im[i];
        }
    }
}

Tensor attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                         Tensor& probs) {
    const std::size_t N = q.dim(0), L = q.dim(1), C = q.dim(2);
    const std::size_t ch = C / heads;
    probs = Tensor(Shape{N, heads, L, L});
    Tensor out(q.shape());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < L; ++i) {
                std::vector<double> logits(L);
                double mx = -INFINITY;
                for (std::size_t j = 0; j < L; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < ch; ++c)
                        s += q[(n * L + i) * C + h * ch + c] * k[(n * L + j) * C + h * ch + c];
                    logits[j] = s / std::sqrt(static_cast<double>(ch));
                    mx = std::max(mx, logits[j]);
                }
                double z = 0.0;
                for (double& l : logits) z += (l = std::exp(l - mx));
                for (std::size_t j = 0; j < L; ++j) probs[((n * heads + h) * L + i) * L + j] = logits[j] / z;
                for (std::size_t c = 0; c < ch; ++c) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < L; ++j)
                        acc += probs[((n * heads + h) * L + i) * L + j] * v[(n * L + j) * C + h * ch + c];
                    out[(n * L + i) * C + h * ch + c] = acc;
                }
            }
    return out;
}

}  // namespace hdst::kernels::reference
