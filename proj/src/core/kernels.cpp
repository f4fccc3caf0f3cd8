#include "hdst/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "hdst/fft.hpp"

namespace hdst::kernels {

namespace {

using idx = std::ptrdiff_t;

// Valid output range [lo, hi) along one axis for tap offset `off`.
inline void tap_range(idx off, idx extent, idx& lo, idx& hi) {
    lo = std::max<idx>(0, -off);
    hi = std::min<idx>(extent, extent - off);
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

ConvGeometry conv_geometry(const Shape& input, const Shape& weight, const Tensor* bias,
                           long dilation, long groups) {
    if (dilation < 1) throw std::invalid_argument("conv2d: dilation must be >= 1, got " + std::to_string(dilation));
    if (groups < 1) throw std::invalid_argument("conv2d: groups must be >= 1, got " + std::to_string(groups));
    if (input.size() != 4) throw ShapeError("conv2d: input must be [B,Cin,H,W], got " + shape_string(input));
    if (weight.size() != 4) throw ShapeError("conv2d: weight must be [Cout,Cin/groups,kh,kw], got " + shape_string(weight));
    const auto G = static_cast<std::size_t>(groups);
    ConvGeometry g{};
    g.batch = input[0];
    g.in_channels = input[1];
    g.height = input[2];
    g.width = input[3];
    g.out_channels = weight[0];
    g.kernel_h = weight[2];
    g.kernel_w = weight[3];
    g.dilation = static_cast<std::size_t>(dilation);
    g.groups = G;
    if (g.in_channels % G != 0)
        throw ShapeError("conv2d: input channels " + std::to_string(g.in_channels) +
                         " not divisible by groups " + std::to_string(G));
    if (g.out_channels % G != 0)
        throw ShapeError("conv2d: output channels " + std::to_string(g.out_channels) +
                         " not divisible by groups " + std::to_string(G));
    if (weight[1] != g.in_channels / G)
        throw ShapeError("conv2d: weight dim 1 (Cin/groups) is " + std::to_string(weight[1]) +
                         ", expected " + std::to_string(g.in_channels / G));
    if (g.kernel_h == 0 || g.kernel_w == 0) throw ShapeError("conv2d: empty kernel");
    if (bias && !bias->empty() && (bias->rank() != 1 || bias->dim(0) != g.out_channels))
        throw ShapeError("conv2d: bias must be [Cout=" + std::to_string(g.out_channels) + "], got " +
                         shape_string(bias->shape()));
    g.pad_y = static_cast<idx>((g.kernel_h - 1) * g.dilation / 2);
    g.pad_x = static_cast<idx>((g.kernel_w - 1) * g.dilation / 2);
    return g;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                      const ConvGeometry& g) {
    const idx H = static_cast<idx>(g.height), W = static_cast<idx>(g.width);
    const std::size_t plane = g.height * g.width;
    const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
    const std::size_t taps = g.kernel_h * g.kernel_w;
    Tensor out(Shape{g.batch, g.out_channels, g.height, g.width});
    const double* in = input.raw();
    const double* wt = weight.raw();
    double* o = out.raw();
    const bool has_bias = bias && !bias->empty();
    const auto jobs = static_cast<idx>(g.batch * g.out_channels);

#pragma omp parallel for schedule(static)
    for (idx job = 0; job < jobs; ++job) {
        const std::size_t b = static_cast<std::size_t>(job) / g.out_channels;
        const std::size_t co = static_cast<std::size_t>(job) % g.out_channels;
        double* dst = o + (b * g.out_channels + co) * plane;
        std::fill(dst, dst + plane, has_bias ? (*bias)[co] : 0.0);
        const std::size_t grp = co / cout_g;
        for (std::size_t cil = 0; cil < cin_g; ++cil) {
            const std::size_t ci = grp * cin_g + cil;
            const double* src = in + (b * g.in_channels + ci) * plane;
            const double* wk = wt + (co * cin_g + cil) * taps;
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                const idx dy = static_cast<idx>(ky * g.dilation) - g.pad_y;
                idx y0, y1;
                tap_range(dy, H, y0, y1);
                for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                    const double wv = wk[ky * g.kernel_w + kx];
                    const idx dx = static_cast<idx>(kx * g.dilation) - g.pad_x;
                    idx x0, x1;
                    tap_range(dx, W, x0, x1);
                    for (idx y = y0; y < y1; ++y) {
                        double* row = dst + y * W;
                        const double* srow = src + (y + dy) * W + dx;
                        for (idx x = x0; x < x1; ++x) row[x] += wv * srow[x];
                    }
                }
            }
        }
    }
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight, const ConvGeometry& g) {
    const idx H = static_cast<idx>(g.height), W = static_cast<idx>(g.width);
    const std::size_t plane = g.height * g.width;
    const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
    const std::size_t taps = g.kernel_h * g.kernel_w;
    Tensor gin(Shape{g.batch, g.in_channels, g.height, g.width});
    const double* go = grad_out.raw();
    const double* wt = weight.raw();
    double* gi = gin.raw();
    const auto jobs = static_cast<idx>(g.batch * g.in_channels);

#pragma omp parallel for schedule(static)
    for (idx job = 0; job < jobs; ++job) {
        const std::size_t b = static_cast<std::size_t>(job) / g.in_channels;
        const std::size_t ci = static_cast<std::size_t>(job) % g.in_channels;
        double* dst = gi + (b * g.in_channels + ci) * plane;
        const std::size_t grp = ci / cin_g;
        const std::size_t cil = ci % cin_g;
        for (std::size_t col = 0; col < cout_g; ++col) {
            const std::size_t co = grp * cout_g + col;
            const double* src = go + (b * g.out_channels + co) * plane;
            const double* wk = wt + (co * cin_g + cil) * taps;
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                const idx dy = static_cast<idx>(ky * g.dilation) - g.pad_y;
                idx y0, y1;
                tap_range(dy, H, y0, y1);
                for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                    const double wv = wk[ky * g.kernel_w + kx];
                    const idx dx = static_cast<idx>(kx * g.dilation) - g.pad_x;
                    idx x0, x1;
                    tap_range(dx, W, x0, x1);
                    for (idx y = y0; y < y1; ++y) {
                        const double* grow = src + y * W;
                        double* drow = dst + (y + dy) * W + dx;
                        for (idx x = x0; x < x1; ++x) drow[x] += wv * grow[x];
                    }
                }
            }
        }
    }
    return gin;
}

Tensor conv2d_backward_weight(const Tensor& grad_out, const Tensor& input, const ConvGeometry& g) {
    const idx H = static_cast<idx>(g.height), W = static_cast<idx>(g.width);
    const std::size_t plane = g.height * g.width;
    const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
    const std::size_t taps = g.kernel_h * g.kernel_w;
    Tensor gw(Shape{g.out_channels, cin_g, g.kernel_h, g.kernel_w});
    const double* go = grad_out.raw();
    const double* in = input.raw();
    double* gwp = gw.raw();
    const auto jobs = static_cast<idx>(g.out_channels * cin_g);

#pragma omp parallel for schedule(static)
    for (idx job = 0; job < jobs; ++job) {
        const std::size_t co = static_cast<std::size_t>(job) / cin_g;
        const std::size_t cil = static_cast<std::size_t>(job) % cin_g;
        const std::size_t ci = (co / cout_g) * cin_g + cil;
        double* wk = gwp + (co * cin_g + cil) * taps;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const idx dy = static_cast<idx>(ky * g.dilation) - g.pad_y;
            idx y0, y1;
            tap_range(dy, H, y0, y1);
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const idx dx = static_cast<idx>(kx * g.dilation) - g.pad_x;
                idx x0, x1;
                tap_range(dx, W, x0, x1);
                double acc = 0.0;
                for (std::size_t b = 0; b < g.batch; ++b) {
                    const double* grad = go + (b * g.out_channels + co) * plane;
                    const double* src = in + (b * g.in_channels + ci) * plane;
                    for (idx y = y0; y < y1; ++y) {
                        const double* grow = grad + y * W;
                        const double* srow = src + (y + dy) * W + dx;
                        for (idx x = x0; x < x1; ++x) acc += grow[x] * srow[x];
                    }
                }
                wk[ky * g.kernel_w + kx] = acc;
            }
        }
    }
    return gw;
}

void fft2_planes(Tensor& real, Tensor& imag, bool inverse) {
    require_same_shape(real, imag, "fft2_planes");
    if (real.rank() < 2) throw ShapeError("fft2_planes: need at least 2 axes");
    const std::size_t h = real.shape()[real.rank() - 2];
    const std::size_t w = real.shape()[real.rank() - 1];
    const std::size_t plane = h * w;
    if (plane == 0) return;
    const auto planes = static_cast<idx>(real.numel() / plane);
    double* re = real.raw();
    double* im = imag.raw();

#pragma omp parallel
    {
        std::vector<fft::cplx> buf(plane);
#pragma omp for schedule(static)
        for (idx p = 0; p < planes; ++p) {
            const std::size_t base = static_cast<std::size_t>(p) * plane;
            for (std::size_t i = 0; i < plane; ++i) buf[i] = fft::cplx(re[base + i], im[base + i]);
            fft::transform_plane(buf.data(), h, w, inverse);
            for (std::size_t i = 0; i < plane; ++i) {
                re[base + i] = buf[i].real();
                im[base + i] = buf[i].imag();
            }
        }
    }
}

Tensor linear_forward(const Tensor& x, const Tensor& weight) {
    require_rank(weight, 2, "linear weight");
    const std::size_t cin = weight.dim(1), cout = weight.dim(0);
    if (x.numel() % cin != 0 || x.shape().back() != cin)
        throw ShapeError("linear: input last dim " + std::to_string(x.shape().back()) +
                         " != weight in_features " + std::to_string(cin));
    const auto rows = static_cast<idx>(x.numel() / cin);
    Shape os = x.shape();
    os.back() = cout;
    Tensor out(os);
    const double* xp = x.raw();
    const double* wp = weight.raw();
    double* op = out.raw();
#pragma omp parallel for schedule(static)
    for (idx r = 0; r < rows; ++r) {
        const double* xr = xp + r * cin;
        double* orow = op + r * cout;
        for (std::size_t o = 0; o < cout; ++o) {
            const double* wr = wp + o * cin;
            double acc = 0.0;
            for (std::size_t i = 0; i < cin; ++i) acc += xr[i] * wr[i];
            orow[o] = acc;
        }
    }
    return out;
}

Tensor linear_backward_input(const Tensor& grad_out, const Tensor& weight) {
    const std::size_t cin = weight.dim(1), cout = weight.dim(0);
    const auto rows = static_cast<idx>(grad_out.numel() / cout);
    Shape s = grad_out.shape();
    s.back() = cin;
    Tensor gx(s);
    const double* gp = grad_out.raw();
    const double* wp = weight.raw();
    double* xp = gx.raw();
#pragma omp parallel for schedule(static)
    for (idx r = 0; r < rows; ++r) {
        const double* gr = gp + r * cout;
        double* xr = xp + r * cin;
        for (std::size_t o = 0; o < cout; ++o) {
            const double gv = gr[o];
            const double* wr = wp + o * cin;
            for (std::size_t i = 0; i < cin; ++i) xr[i] += gv * wr[i];
        }
    }
    return gx;
}

Tensor linear_backward_weight(const Tensor& grad_out, const Tensor& x) {
    const std::size_t cin = x.shape().back(), cout = grad_out.shape().back();
    const std::size_t rows = x.numel() / cin;
    Tensor gw(Shape{cout, cin});
    const double* gp = grad_out.raw();
    const double* xp = x.raw();
    double* wp = gw.raw();
#pragma omp parallel for schedule(static)
    for (idx o = 0; o < static_cast<idx>(cout); ++o) {
        double* wr = wp + o * cin;
        for (std::size_t r = 0; r < rows; ++r) {
            const double gv = gp[r * cout + o];
            const double* xr = xp + r * cin;
            for (std::size_t i = 0; i < cin; ++i) wr[i] += gv * xr[i];
        }
    }
    return gw;
}

Tensor attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                         Tensor& probs) {
    require_rank(q, 3, "attention q");
    require_same_shape(q, k, "attention q/k");
    require_same_shape(q, v, "attention q/v");
    const std::size_t N = q.dim(0), L = q.dim(1), C = q.dim(2);
    if (heads == 0 || C % heads != 0)
        throw ShapeError("attention: channels " + std::to_string(C) + " not divisible by heads " +
                         std::to_string(heads));
    const std::size_t ch = C / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(ch));
    probs = Tensor(Shape{N, heads, L, L});
    Tensor out(q.shape());
    const double* qp = q.raw();
    const double* kp = k.raw();
    const double* vp = v.raw();
    double* pp = probs.raw();
    double* op = out.raw();
    const auto jobs = static_cast<idx>(N * heads);

#pragma omp parallel for schedule(static)
    for (idx job = 0; job < jobs; ++job) {
        const std::size_t n = static_cast<std::size_t>(job) / heads;
        const std::size_t h = static_cast<std::size_t>(job) % heads;
        const std::size_t off = h * ch;
        const double* qn = qp + n * L * C;
        const double* kn = kp + n * L * C;
        const double* vn = vp + n * L * C;
        double* on = op + n * L * C;
        double* P = pp + (n * heads + h) * L * L;
        for (std::size_t i = 0; i < L; ++i) {
            double* prow = P + i * L;
            double mx = -INFINITY;
            for (std::size_t j = 0; j < L; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < ch; ++c) s += qn[i * C + off + c] * kn[j * C + off + c];
                prow[j] = s * scale;
                mx = std::max(mx, prow[j]);
            }
            double z = 0.0;
            for (std::size_t j = 0; j < L; ++j) {
                prow[j] = std::exp(prow[j] - mx);
                z += prow[j];
            }
            for (std::size_t j = 0; j < L; ++j) prow[j] /= z;
            double* orow = on + i * C + off;
            for (std::size_t j = 0; j < L; ++j) {
                const double pv = prow[j];
                const double* vrow = vn + j * C + off;
                for (std::size_t c = 0; c < ch; ++c) orow[c] += pv * vrow[c];
            }
        }
    }
    return out;
}

AttentionGrads attention_backward(const Tensor& grad_out, const Tensor& q, const Tensor& k,
                                  const Tensor& v, const Tensor& probs, std::size_t heads) {
    const std::size_t N = q.dim(0), L = q.dim(1), C = q.dim(2);
    const std::size_t ch = C / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(ch));
    AttentionGrads g{Tensor(q.shape()), Tensor(k.shape()), Tensor(v.shape())};
    const double* gop = grad_out.raw();
    const double* qp = q.raw();
    const double* kp = k.raw();
    const double* vp = v.raw();
    const double* pp = probs.raw();
    const auto jobs = static_cast<idx>(N * heads);

#pragma omp parallel
    {
        std::vector<double> dS(L);
#pragma omp for schedule(static)
        for (idx job = 0; job < jobs; ++job) {
            const std::size_t n = static_cast<std::size_t>(job) / heads;
            const std::size_t h = static_cast<std::size_t>(job) % heads;
            const std::size_t off = h * ch;
            const std::size_t base = n * L * C;
            const double* P = pp + (n * heads + h) * L * L;
            for (std::size_t i = 0; i < L; ++i) {
                const double* prow = P + i * L;
                const double* gorow = gop + base + i * C + off;
                double dot = 0.0;
                for (std::size_t j = 0; j < L; ++j) {
                    const double* vrow = vp + base + j * C + off;
                    double dp = 0.0;
                    for (std::size_t c = 0; c < ch; ++c) dp += gorow[c] * vrow[c];
                    dS[j] = dp;
                    dot += prow[j] * dp;
                }
                double* gqrow = g.q.raw() + base + i * C + off;
                const double* qrow = qp + base + i * C + off;
                for (std::size_t j = 0; j < L; ++j) {
                    const double pv = prow[j];
                    const double ds = pv * (dS[j] - dot) * scale;
                    const double* krow = kp + base + j * C + off;
                    double* gkrow = g.k.raw() + base + j * C + off;
                    double* gvrow = g.v.raw() + base + j * C + off;
                    for (std::size_t c = 0; c < ch; ++c) {
                        gqrow[c] += ds * krow[c];
                        gkrow[c] += ds * qrow[c];
                        gvrow[c] += pv * gorow[c];
                    }
                }
            }
        }
    }
    return g;
}

}  // namespace hdst::kernels
