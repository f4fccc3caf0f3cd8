#include "hdst/ops.hpp"

#include <cmath>
#include <initializer_list>
#include <numbers>

#include "hdst/kernels.hpp"

namespace hdst::ops {

namespace {

using NodePtr = std::shared_ptr<Node>;

bool recording(std::initializer_list<const Variable*> inputs) {
    if (!Tape::active()) return false;
    for (const Variable* v : inputs)
        if (v && v->defined() && v->requires_grad()) return true;
    return false;
}

void record(const Variable& out, Tape::BackwardFn fn) {
    Tape::active()->record({out.node()}, std::move(fn));
}

bool wants(const NodePtr& n) { return n && n->requires_grad; }

void require_4d(const Tensor& t, const char* what) { require_rank(t, 4, what); }

}  // namespace

double sigmoid_value(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double gelu_value(double x) { return 0.5 * x * std::erfc(-x / std::numbers::sqrt2); }

namespace {
double gelu_derivative(double x) {
    const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}
}  // namespace

std::size_t reflect_index(std::ptrdiff_t i, std::size_t extent) {
    if (extent == 1) return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (extent - 1));
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(extent) ? m : period - m);
}

Variable conv2d(const Variable& x, const Variable& weight, const Variable& bias, long dilation, long groups) {
    const Tensor* b = bias.defined() ? &bias.value() : nullptr;
    const auto g = kernels::conv_geometry(x.shape(), weight.shape(), b, dilation, groups);
    Variable out(kernels::conv2d_forward(x.value(), weight.value(), b, g),
                 recording({&x, &weight, &bias}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), wn = weight.node(), bn = bias.node(), on = out.node();
        record(out, [xn, wn, bn, on, g] {
            const Tensor& go = on->grad_buffer();
            if (wants(xn)) xn->accumulate(kernels::conv2d_backward_input(go, wn->value, g));
            if (wants(wn)) wn->accumulate(kernels::conv2d_backward_weight(go, xn->value, g));
            if (wants(bn)) {
                Tensor& gb = bn->grad_buffer();
                const std::size_t plane = g.height * g.width;
                for (std::size_t bi = 0; bi < g.batch; ++bi)
                    for (std::size_t c = 0; c < g.out_channels; ++c) {
                        const double* p = go.raw() + (bi * g.out_channels + c) * plane;
                        double s = 0.0;
                        for (std::size_t i = 0; i < plane; ++i) s += p[i];
                        gb[c] += s;
                    }
            }
        });
    }
    return out;
}

Variable add(const Variable& a, const Variable& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor v = a.value();
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] += b.value()[i];
    Variable out(std::move(v), recording({&a, &b}));
    if (out.requires_grad()) {
        NodePtr an = a.node(), bn = b.node(), on = out.node();
        record(out, [an, bn, on] {
            if (wants(an)) an->accumulate(on->grad_buffer());
            if (wants(bn)) bn->accumulate(on->grad_buffer());
        });
    }
    return out;
}

Variable sub(const Variable& a, const Variable& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor v = a.value();
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] -= b.value()[i];
    Variable out(std::move(v), recording({&a, &b}));
    if (out.requires_grad()) {
        NodePtr an = a.node(), bn = b.node(), on = out.node();
        record(out, [an, bn, on] {
            const Tensor& go = on->grad_buffer();
            if (wants(an)) an->accumulate(go);
            if (wants(bn)) {
                Tensor& gb = bn->grad_buffer();
                for (std::size_t i = 0; i < go.numel(); ++i) gb[i] -= go[i];
            }
        });
    }
    return out;
}

Variable mul(const Variable& a, const Variable& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor v = a.value();
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] *= b.value()[i];
    Variable out(std::move(v), recording({&a, &b}));
    if (out.requires_grad()) {
        NodePtr an = a.node(), bn = b.node(), on = out.node();
        record(out, [an, bn, on] {
            const Tensor& go = on->grad_buffer();
            if (wants(an)) {
                Tensor& ga = an->grad_buffer();
                for (std::size_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * bn->value[i];
            }
            if (wants(bn)) {
                Tensor& gb = bn->grad_buffer();
                for (std::size_t i = 0; i < go.numel(); ++i) gb[i] += go[i] * an->value[i];
            }
        });
    }
    return out;
}

Variable affine(const Variable& a, double s, double t) {
    Tensor v = a.value();
    for (double& e : v.storage()) e = s * e + t;
    Variable out(std::move(v), recording({&a}));
    if (out.requires_grad()) {
        NodePtr an = a.node(), on = out.node();
        record(out, [an, on, s] {
            const Tensor& go = on->grad_buffer();
            Tensor& ga = an->grad_buffer();
            for (std::size_t i = 0; i < go.numel(); ++i) ga[i] += s * go[i];
        });
    }
    return out;
}

Variable scale(const Variable& a, double s) { return affine(a, s, 0.0); }

Variable scale_by(const Variable& a, const Variable& s) {
    if (s.value().numel() != 1)
        throw ShapeError("scale_by: scale must be a single scalar, got " + shape_string(s.shape()));
    const double sv = s.value()[0];
    Tensor v = a.value();
    for (double& e : v.storage()) e *= sv;
    Variable out(std::move(v), recording({&a, &s}));
    if (out.requires_grad()) {
        NodePtr an = a.node(), sn = s.node(), on = out.node();
        record(out, [an, sn, on] {
            const Tensor& go = on->grad_buffer();
            if (wants(an)) {
                Tensor& ga = an->grad_buffer();
                const double k = sn->value[0];
                for (std::size_t i = 0; i < go.numel(); ++i) ga[i] += k * go[i];
            }
            if (wants(sn)) {
                double acc = 0.0;
                for (std::size_t i = 0; i < go.numel(); ++i) acc += go[i] * an->value[i];
                sn->grad_buffer()[0] += acc;
            }
        });
    }
    return out;
}

Variable sigmoid(const Variable& a) {
    Tensor v = a.value();
    for (double& e : v.storage()) e = sigmoid_value(e);
    Variable out(std::move(v), recording({&a}));
    if (out.requires_grad()) {
        NodePtr an = a.node(), on = out.node();
        record(out, [an, on] {
            const Tensor& go = on->grad_buffer();
            Tensor& ga = an->grad_buffer();
            for (std::size_t i = 0; i < go.numel(); ++i) {
                const double s = on->value[i];
                ga[i] += go[i] * s * (1.0 - s);
            }
        });
    }
    return out;
}

Variable gelu(const Variable& a) {
    Tensor v = a.value();
    for (double& e : v.storage()) e = gelu_value(e);
    Variable out(std::move(v), recording({&a}));
    if (out.requires_grad()) {
        NodePtr an = a.node(), on = out.node();
        record(out, [an, on] {
            const Tensor& go = on->grad_buffer();
            Tensor& ga = an->grad_buffer();
            for (std::size_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * gelu_derivative(an->value[i]);
        });
    }
    return out;
}

Variable add_channel_bias(const Variable& x, const Variable& bias) {
    require_4d(x.value(), "add_channel_bias");
    const auto& s = x.shape();
    if (bias.value().numel() != s[1])
        throw ShapeError("add_channel_bias: bias has " + std::to_string(bias.value().numel()) +
                         " entries, channels dim is " + std::to_string(s[1]));
    const std::size_t plane = s[2] * s[3];
    Tensor v = x.value();
    for (std::size_t b = 0; b < s[0]; ++b)
        for (std::size_t c = 0; c < s[1]; ++c) {
            double* p = v.raw() + (b * s[1] + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] += bias.value()[c];
        }
    Variable out(std::move(v), recording({&x, &bias}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), bn = bias.node(), on = out.node();
        record(out, [xn, bn, on, s, plane] {
            const Tensor& go = on->grad_buffer();
            if (wants(xn)) xn->accumulate(go);
            if (wants(bn)) {
                Tensor& gb = bn->grad_buffer();
                for (std::size_t b = 0; b < s[0]; ++b)
                    for (std::size_t c = 0; c < s[1]; ++c) {
                        const double* p = go.raw() + (b * s[1] + c) * plane;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
                        gb[c] += acc;
                    }
            }
        });
    }
    return out;
}

Variable channel_scale(const Variable& x, const Variable& sc) {
    require_4d(x.value(), "channel_scale");
    const auto& s = x.shape();
    if (sc.shape() != Shape{s[0], s[1], 1, 1})
        throw ShapeError("channel_scale: scale must be [B,C,1,1], got " + shape_string(sc.shape()));
    const std::size_t plane = s[2] * s[3];
    Tensor v = x.value();
    for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc) {
        double* p = v.raw() + bc * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] *= sc.value()[bc];
    }
    Variable out(std::move(v), recording({&x, &sc}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), sn = sc.node(), on = out.node();
        record(out, [xn, sn, on, s, plane] {
            const Tensor& go = on->grad_buffer();
            for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc) {
                const double* g = go.raw() + bc * plane;
                const double* xv = xn->value.raw() + bc * plane;
                if (wants(xn)) {
                    double* gx = xn->grad_buffer().raw() + bc * plane;
                    for (std::size_t i = 0; i < plane; ++i) gx[i] += g[i] * sn->value[bc];
                }
                if (wants(sn)) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) acc += g[i] * xv[i];
                    sn->grad_buffer()[bc] += acc;
                }
            }
        });
    }
    return out;
}

Variable global_avg_pool(const Variable& x) {
    require_4d(x.value(), "global_avg_pool");
    const auto& s = x.shape();
    const std::size_t plane = s[2] * s[3];
    Tensor v(Shape{s[0], s[1], 1, 1});
    for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc) {
        const double* p = x.value().raw() + bc * plane;
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        v[bc] = acc / static_cast<double>(plane);
    }
    Variable out(std::move(v), recording({&x}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), on = out.node();
        record(out, [xn, on, s, plane] {
            const Tensor& go = on->grad_buffer();
            Tensor& gx = xn->grad_buffer();
            for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc) {
                const double g = go[bc] / static_cast<double>(plane);
                double* p = gx.raw() + bc * plane;
                for (std::size_t i = 0; i < plane; ++i) p[i] += g;
            }
        });
    }
    return out;
}

Variable broadcast_spatial(const Variable& x, std::size_t height, std::size_t width) {
    const auto& s = x.shape();
    if (s.size() != 4 || s[2] != 1 || s[3] != 1)
        throw ShapeError("broadcast_spatial: input must be [B,C,1,1], got " + shape_string(s));
    const std::size_t plane = height * width;
    Tensor v(Shape{s[0], s[1], height, width});
    for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc)
        std::fill(v.raw() + bc * plane, v.raw() + (bc + 1) * plane, x.value()[bc]);
    Variable out(std::move(v), recording({&x}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), on = out.node();
        record(out, [xn, on, s, plane] {
            const Tensor& go = on->grad_buffer();
            Tensor& gx = xn->grad_buffer();
            for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc) {
                const double* p = go.raw() + bc * plane;
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += p[i];
                gx[bc] += acc;
            }
        });
    }
    return out;
}

Variable concat_channels(const std::vector<Variable>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape& s0 = parts[0].shape();
    if (s0.size() != 4) throw ShapeError("concat_channels: inputs must be [B,C,H,W]");
    std::size_t total = 0;
    bool rec = false;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3])
            throw ShapeError("concat_channels: incompatible part " + shape_string(s) + " vs " + shape_string(s0));
        total += s[1];
        rec = rec || recording({&p});
    }
    const std::size_t B = s0[0], plane = s0[2] * s0[3];
    Tensor v(Shape{B, total, s0[2], s0[3]});
    for (std::size_t b = 0; b < B; ++b) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            const std::size_t c = p.shape()[1];
            const double* src = p.value().raw() + b * c * plane;
            std::copy(src, src + c * plane, v.raw() + (b * total + off) * plane);
            off += c;
        }
    }
    Variable out(std::move(v), rec);
    if (out.requires_grad()) {
        std::vector<NodePtr> nodes;
        for (const auto& p : parts) nodes.push_back(p.node());
        NodePtr on = out.node();
        record(out, [nodes, on, B, total, plane] {
            const Tensor& go = on->grad_buffer();
            std::size_t off = 0;
            for (const auto& n : nodes) {
                const std::size_t c = n->value.shape()[1];
                if (wants(n)) {
                    Tensor& g = n->grad_buffer();
                    for (std::size_t b = 0; b < B; ++b) {
                        const double* src = go.raw() + (b * total + off) * plane;
                        double* dst = g.raw() + b * c * plane;
                        for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
                    }
                }
                off += c;
            }
        });
    }
    return out;
}

Variable layer_norm_channels(const Variable& x, const Variable& gamma, const Variable& beta, double eps) {
    require_4d(x.value(), "layer_norm_channels");
    const auto& s = x.shape();
    const std::size_t B = s[0], C = s[1], plane = s[2] * s[3];
    if (gamma.value().numel() != C || beta.value().numel() != C)
        throw ShapeError("layer_norm_channels: gamma/beta must have " + std::to_string(C) + " entries");
    Tensor v(s);
    auto xhat = std::make_shared<Tensor>(s);
    auto inv_std = std::make_shared<Tensor>(Shape{B, plane});
    const double* xv = x.value().raw();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < plane; ++p) {
            double mean = 0.0;
            for (std::size_t c = 0; c < C; ++c) mean += xv[(b * C + c) * plane + p];
            mean /= static_cast<double>(C);
            double var = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                const double d = xv[(b * C + c) * plane + p] - mean;
                var += d * d;
            }
            var /= static_cast<double>(C);
            const double is = 1.0 / std::sqrt(var + eps);
            (*inv_std)[b * plane + p] = is;
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t i = (b * C + c) * plane + p;
                const double h = (xv[i] - mean) * is;
                (*xhat)[i] = h;
                v[i] = h * gamma.value()[c] + beta.value()[c];
            }
        }
    Variable out(std::move(v), recording({&x, &gamma, &beta}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
        record(out, [xn, gn, bn, on, xhat, inv_std, B, C, plane] {
            const Tensor& go = on->grad_buffer();
            if (wants(gn) || wants(bn)) {
                for (std::size_t c = 0; c < C; ++c) {
                    double sg = 0.0, sb = 0.0;
                    for (std::size_t b = 0; b < B; ++b)
                        for (std::size_t p = 0; p < plane; ++p) {
                            const std::size_t i = (b * C + c) * plane + p;
                            sg += go[i] * (*xhat)[i];
                            sb += go[i];
                        }
                    if (wants(gn)) gn->grad_buffer()[c] += sg;
                    if (wants(bn)) bn->grad_buffer()[c] += sb;
                }
            }
            if (wants(xn)) {
                Tensor& gx = xn->grad_buffer();
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t p = 0; p < plane; ++p) {
                        double m1 = 0.0, m2 = 0.0;
                        for (std::size_t c = 0; c < C; ++c) {
                            const std::size_t i = (b * C + c) * plane + p;
                            const double gh = go[i] * gn->value[c];
                            m1 += gh;
                            m2 += gh * (*xhat)[i];
                        }
                        m1 /= static_cast<double>(C);
                        m2 /= static_cast<double>(C);
                        const double is = (*inv_std)[b * plane + p];
                        for (std::size_t c = 0; c < C; ++c) {
                            const std::size_t i = (b * C + c) * plane + p;
                            const double gh = go[i] * gn->value[c];
                            gx[i] += is * (gh - m1 - (*xhat)[i] * m2);
                        }
                    }
            }
        });
    }
    return out;
}

namespace {

// Splits [B,2C,H,W] into real/imag [B,C,H,W] planes or packs them back.
void unpack_complex(const Tensor& z, Tensor& re, Tensor& im) {
    const auto& s = z.shape();
    const std::size_t B = s[0], C = s[1] / 2, plane = s[2] * s[3];
    re = Tensor(Shape{B, C, s[2], s[3]});
    im = Tensor(Shape{B, C, s[2], s[3]});
    for (std::size_t b = 0; b < B; ++b) {
        const double* src = z.raw() + b * 2 * C * plane;
        std::copy(src, src + C * plane, re.raw() + b * C * plane);
        std::copy(src + C * plane, src + 2 * C * plane, im.raw() + b * C * plane);
    }
}

Tensor pack_complex(const Tensor& re, const Tensor& im) {
    const auto& s = re.shape();
    const std::size_t B = s[0], C = s[1], plane = s[2] * s[3];
    Tensor z(Shape{B, 2 * C, s[2], s[3]});
    for (std::size_t b = 0; b < B; ++b) {
        std::copy(re.raw() + b * C * plane, re.raw() + (b + 1) * C * plane, z.raw() + b * 2 * C * plane);
        std::copy(im.raw() + b * C * plane, im.raw() + (b + 1) * C * plane, z.raw() + (b * 2 + 1) * C * plane);
    }
    return z;
}

}  // namespace

Variable fft_packed(const Variable& x) {
    require_4d(x.value(), "fft_packed");
    if (!x.value().all_finite()) throw NumericError("fft_packed: non-finite input");
    Tensor re = x.value();
    Tensor im = Tensor::zeros(re.shape());
    kernels::fft2_planes(re, im, false);
    Variable out(pack_complex(re, im), recording({&x}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), on = out.node();
        record(out, [xn, on] {
            Tensor gr, gi;
            unpack_complex(on->grad_buffer(), gr, gi);
            kernels::fft2_planes(gr, gi, true);
            xn->accumulate(gr);
        });
    }
    return out;
}

Variable ifft_packed_real(const Variable& z) {
    require_4d(z.value(), "ifft_packed_real");
    if (z.shape()[1] % 2 != 0)
        throw ShapeError("ifft_packed_real: channel dim must be even, got " + std::to_string(z.shape()[1]));
    if (!z.value().all_finite()) throw NumericError("ifft_packed_real: non-finite input");
    Tensor re, im;
    unpack_complex(z.value(), re, im);
    kernels::fft2_planes(re, im, true);
    Variable out(std::move(re), recording({&z}));
    if (out.requires_grad()) {
        NodePtr zn = z.node(), on = out.node();
        record(out, [zn, on] {
            Tensor gr = on->grad_buffer();
            Tensor gi = Tensor::zeros(gr.shape());
            kernels::fft2_planes(gr, gi, false);
            zn->accumulate(pack_complex(gr, gi));
        });
    }
    return out;
}

namespace {

// Index map between [B,C,H,W] and [B*nh*nw, wh*ww, C]; calls f(image_idx, window_idx).
template <typename F>
void for_each_window_pair(const Shape& s, std::size_t wh, std::size_t ww, F&& f) {
    const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
    const std::size_t nh = H / wh, nw = W / ww, L = wh * ww;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t wy = 0; wy < nh; ++wy)
            for (std::size_t wx = 0; wx < nw; ++wx) {
                const std::size_t n = (b * nh + wy) * nw + wx;
                for (std::size_t ty = 0; ty < wh; ++ty)
                    for (std::size_t tx = 0; tx < ww; ++tx) {
                        const std::size_t t = ty * ww + tx;
                        const std::size_t y = wy * wh + ty, x = wx * ww + tx;
                        for (std::size_t c = 0; c < C; ++c)
                            f(((b * C + c) * H + y) * W + x, (n * L + t) * C + c);
                    }
            }
}

void check_windows(const Shape& s, std::size_t wh, std::size_t ww) {
    if (s.size() != 4) throw ShapeError("window_partition: input must be [B,C,H,W], got " + shape_string(s));
    if (wh == 0 || ww == 0) throw ShapeError("window_partition: window extent must be positive");
    if (s[2] % wh != 0)
        throw ShapeError("window_partition: height " + std::to_string(s[2]) + " not divisible by window height " +
                         std::to_string(wh));
    if (s[3] % ww != 0)
        throw ShapeError("window_partition: width " + std::to_string(s[3]) + " not divisible by window width " +
                         std::to_string(ww));
}

}  // namespace

Variable window_partition(const Variable& x, std::size_t wh, std::size_t ww) {
    const Shape s = x.shape();
    check_windows(s, wh, ww);
    const std::size_t n = s[0] * (s[2] / wh) * (s[3] / ww);
    Tensor v(Shape{n, wh * ww, s[1]});
    const double* src = x.value().raw();
    double* dst = v.raw();
    for_each_window_pair(s, wh, ww, [&](std::size_t i, std::size_t w) { dst[w] = src[i]; });
    Variable out(std::move(v), recording({&x}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), on = out.node();
        record(out, [xn, on, s, wh, ww] {
            const double* g = on->grad_buffer().raw();
            double* gx = xn->grad_buffer().raw();
            for_each_window_pair(s, wh, ww, [&](std::size_t i, std::size_t w) { gx[i] += g[w]; });
        });
    }
    return out;
}

Variable window_merge(const Variable& windows, const Shape& s, std::size_t wh, std::size_t ww) {
    check_windows(s, wh, ww);
    const std::size_t n = s[0] * (s[2] / wh) * (s[3] / ww);
    if (windows.shape() != Shape{n, wh * ww, s[1]})
        throw ShapeError("window_merge: windows " + shape_string(windows.shape()) + " do not tile image " +
                         shape_string(s));
    Tensor v(s);
    const double* src = windows.value().raw();
    double* dst = v.raw();
    for_each_window_pair(s, wh, ww, [&](std::size_t i, std::size_t w) { dst[i] = src[w]; });
    Variable out(std::move(v), recording({&windows}));
    if (out.requires_grad()) {
        NodePtr wn = windows.node(), on = out.node();
        record(out, [wn, on, s, wh, ww] {
            const double* g = on->grad_buffer().raw();
            double* gw = wn->grad_buffer().raw();
            for_each_window_pair(s, wh, ww, [&](std::size_t i, std::size_t w) { gw[w] += g[i]; });
        });
    }
    return out;
}

Variable linear(const Variable& x, const Variable& weight) {
    Variable out(kernels::linear_forward(x.value(), weight.value()), recording({&x, &weight}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), wn = weight.node(), on = out.node();
        record(out, [xn, wn, on] {
            const Tensor& go = on->grad_buffer();
            if (wants(xn)) xn->accumulate(kernels::linear_backward_input(go, wn->value));
            if (wants(wn)) wn->accumulate(kernels::linear_backward_weight(go, xn->value));
        });
    }
    return out;
}

Variable attention(const Variable& q, const Variable& k, const Variable& v, std::size_t heads, Tensor* probs_out) {
    auto probs = std::make_shared<Tensor>();
    Variable out(kernels::attention_forward(q.value(), k.value(), v.value(), heads, *probs),
                 recording({&q, &k, &v}));
    if (probs_out) *probs_out = *probs;
    if (out.requires_grad()) {
        NodePtr qn = q.node(), kn = k.node(), vn = v.node(), on = out.node();
        record(out, [qn, kn, vn, on, probs, heads] {
            auto g = kernels::attention_backward(on->grad_buffer(), qn->value, kn->value, vn->value, *probs, heads);
            if (wants(qn)) qn->accumulate(g.q);
            if (wants(kn)) kn->accumulate(g.k);
            if (wants(vn)) vn->accumulate(g.v);
        });
    }
    return out;
}

namespace {
struct AxisSplit {
    std::size_t outer, len, inner;
};
AxisSplit split_axis(const Shape& s, std::size_t axis) {
    if (axis >= s.size())
        throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_string(s));
    AxisSplit a{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
    return a;
}
}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
    const AxisSplit a = split_axis(x.shape(), axis);
    Tensor y(x.shape());
    for (std::size_t o = 0; o < a.outer; ++o)
        for (std::size_t in = 0; in < a.inner; ++in) {
            const std::size_t base = o * a.len * a.inner + in;
            double mx = -INFINITY;
            for (std::size_t j = 0; j < a.len; ++j) mx = std::max(mx, x[base + j * a.inner]);
            double z = 0.0;
            for (std::size_t j = 0; j < a.len; ++j) z += (y[base + j * a.inner] = std::exp(x[base + j * a.inner] - mx));
            for (std::size_t j = 0; j < a.len; ++j) y[base + j * a.inner] /= z;
        }
    return y;
}

Variable softmax(const Variable& x, std::size_t axis) {
    const AxisSplit a = split_axis(x.shape(), axis);
    Variable out(softmax(x.value(), axis), recording({&x}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), on = out.node();
        record(out, [xn, on, a] {
            const Tensor& go = on->grad_buffer();
            const Tensor& y = on->value;
            Tensor& gx = xn->grad_buffer();
            for (std::size_t o = 0; o < a.outer; ++o)
                for (std::size_t in = 0; in < a.inner; ++in) {
                    const std::size_t base = o * a.len * a.inner + in;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < a.len; ++j) dot += go[base + j * a.inner] * y[base + j * a.inner];
                    for (std::size_t j = 0; j < a.len; ++j) {
                        const std::size_t i = base + j * a.inner;
                        gx[i] += y[i] * (go[i] - dot);
                    }
                }
        });
    }
    return out;
}

Variable reflect_pad(const Variable& x, std::size_t pad_bottom, std::size_t pad_right) {
    require_4d(x.value(), "reflect_pad");
    if (pad_bottom == 0 && pad_right == 0) return x;
    const Shape s = x.shape();
    const std::size_t H = s[2], W = s[3], Ho = H + pad_bottom, Wo = W + pad_right;
    Tensor v(Shape{s[0], s[1], Ho, Wo});
    for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc)
        for (std::size_t y = 0; y < Ho; ++y)
            for (std::size_t xx = 0; xx < Wo; ++xx)
                v[(bc * Ho + y) * Wo + xx] =
                    x.value()[(bc * H + reflect_index(static_cast<std::ptrdiff_t>(y), H)) * W +
                              reflect_index(static_cast<std::ptrdiff_t>(xx), W)];
    Variable out(std::move(v), recording({&x}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), on = out.node();
        record(out, [xn, on, s, H, W, Ho, Wo] {
            const Tensor& go = on->grad_buffer();
            Tensor& gx = xn->grad_buffer();
            for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc)
                for (std::size_t y = 0; y < Ho; ++y)
                    for (std::size_t xx = 0; xx < Wo; ++xx)
                        gx[(bc * H + reflect_index(static_cast<std::ptrdiff_t>(y), H)) * W +
                           reflect_index(static_cast<std::ptrdiff_t>(xx), W)] += go[(bc * Ho + y) * Wo + xx];
        });
    }
    return out;
}

Variable crop(const Variable& x, std::size_t height, std::size_t width) {
    require_4d(x.value(), "crop");
    const Shape s = x.shape();
    if (height > s[2] || width > s[3])
        throw ShapeError("crop: target " + std::to_string(height) + "x" + std::to_string(width) +
                         " exceeds input " + shape_string(s));
    if (height == s[2] && width == s[3]) return x;
    Tensor v(Shape{s[0], s[1], height, width});
    for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc)
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t xx = 0; xx < width; ++xx)
                v[(bc * height + y) * width + xx] = x.value()[(bc * s[2] + y) * s[3] + xx];
    Variable out(std::move(v), recording({&x}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), on = out.node();
        record(out, [xn, on, s, height, width] {
            const Tensor& go = on->grad_buffer();
            Tensor& gx = xn->grad_buffer();
            for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc)
                for (std::size_t y = 0; y < height; ++y)
                    for (std::size_t xx = 0; xx < width; ++xx)
                        gx[(bc * s[2] + y) * s[3] + xx] += go[(bc * height + y) * width + xx];
        });
    }
    return out;
}

Variable sum(const Variable& x) {
    Variable out(Tensor::scalar(x.value().sum()), recording({&x}));
    if (out.requires_grad()) {
        NodePtr xn = x.node(), on = out.node();
        record(out, [xn, on] {
            const double g = on->grad_buffer()[0];
            Tensor& gx = xn->grad_buffer();
            for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
        });
    }
    return out;
}

Variable mean_squared_error(const Variable& prediction, const Tensor& target) {
    require_same_shape(prediction.value(), target, "mean_squared_error");
    const Tensor& p = prediction.value();
    // Extended accumulator: the loss is differenced by gradient checks and
    // training logs, so its rounding floor matters more than its cost.
    long double acc = 0.0L;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        const long double d = static_cast<long double>(p[i]) - target[i];
        acc += d * d;
    }
    const double n = static_cast<double>(p.numel());
    Variable out(Tensor::scalar(static_cast<double>(acc / n)), recording({&prediction}));
    if (out.requires_grad()) {
        NodePtr pn = prediction.node(), on = out.node();
        auto tgt = std::make_shared<Tensor>(target);
        record(out, [pn, on, tgt, n] {
            const double g = on->grad_buffer()[0] * 2.0 / n;
            Tensor& gp = pn->grad_buffer();
            for (std::size_t i = 0; i < gp.numel(); ++i) gp[i] += g * (pn->value[i] - (*tgt)[i]);
        });
    }
    return out;
}

}  // namespace hdst::ops
