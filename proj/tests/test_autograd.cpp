#include <cmath>

#include "doctest.h"
#include "hdst/gradcheck.hpp"
#include "hdst/ops.hpp"
#include "hdst/optim.hpp"
#include "test_support.hpp"

using namespace hdst;
using hdst::testing::random_tensor;

namespace {

Parameter param(const std::string& name, Shape shape, std::uint64_t seed, double scale = 1.0) {
    return Parameter{name, Variable(random_tensor(std::move(shape), seed, -scale, scale), true)};
}

}  // namespace

TEST_CASE("gradient of sum is all ones") {
    const Parameter p = param("p", Shape{3, 4}, 1);
    Tape tape;
    Variable loss;
    {
        Tape::Scope s(tape);
        loss = ops::sum(p.var);
    }
    const auto g = backward(loss, tape, {p});
    for (double v : g.at("p").storage()) CHECK(v == 1.0);
}

TEST_CASE("gradient of sum of squares is 2p, reaches only the path, repeats across calls") {
    const Parameter p = param("p", Shape{5}, 2);
    const Parameter q = param("q", Shape{5}, 3);
    Tape tape;
    Variable loss;
    {
        Tape::Scope s(tape);
        loss = ops::sum(ops::mul(p.var, p.var));
    }
    auto g = backward(loss, tape, {p, q});
    for (std::size_t i = 0; i < 5; ++i) CHECK(g.at("p")[i] == doctest::Approx(2 * p.var.value()[i]));
    for (double v : g.at("q").storage()) CHECK(v == 0.0);
    g = backward(loss, tape, {p});
    for (std::size_t i = 0; i < 5; ++i) CHECK(g.at("p")[i] == doctest::Approx(2 * p.var.value()[i]));
}

TEST_CASE("backward rejects non-scalar loss") {
    const Parameter p = param("p", Shape{2}, 4);
    Tape tape;
    Variable y;
    {
        Tape::Scope s(tape);
        y = ops::scale(p.var, 2.0);
    }
    CHECK_THROWS_AS(backward(y, tape, {p}), ShapeError);
}

TEST_CASE("no tape means no recording") {
    const Parameter p = param("p", Shape{2}, 4);
    const Variable y = ops::sigmoid(p.var);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("finite difference check: linear functional is exact") {
    const Parameter p = param("p", Shape{4, 3}, 5);
    const auto r = finite_diff_check([&] { return ops::sum(p.var); }, p, 1e-4);
    CHECK(r.max_rel_error <= 1e-10);
}

TEST_CASE("finite difference check: one-layer conv L2 loss on 1x1x4x4") {
    const Variable x(random_tensor(Shape{1, 1, 4, 4}, 6));
    const Tensor target = random_tensor(Shape{1, 1, 4, 4}, 7);
    const Parameter w = param("w", Shape{1, 1, 3, 3}, 8);
    const Parameter b = param("b", Shape{1}, 9);
    const auto r = finite_diff_check_all([&] { return ops::mean_squared_error(ops::conv2d(x, w.var, b.var), target); },
                                         {w, b}, 1e-5);
    CHECK(r.at("w").max_rel_error <= 1e-5);
    CHECK(r.at("b").max_rel_error <= 1e-5);
}

TEST_CASE("conv, fft and softmax composite gradients match central differences") {
    const Tensor target = random_tensor(Shape{1, 2, 6, 5}, 10);
    const Parameter x = param("x", Shape{1, 2, 6, 5}, 11);
    const Parameter w = param("w", Shape{4, 1, 3, 3}, 12, 0.5);
    const Parameter b = param("b", Shape{4}, 13, 0.5);
    const Parameter w2 = param("w2", Shape{2, 2, 3, 3}, 14, 0.5);
    auto f = [&] {
        Variable h = ops::fft_packed(x.var);  // [1,4,6,5]
        h = ops::conv2d(h, w.var, b.var, 2, 4);  // depthwise, dilated
        h = ops::softmax(h, 1);
        Variable s = ops::ifft_packed_real(h);  // [1,2,6,5]
        s = ops::conv2d(ops::gelu(s), w2.var, Variable{});
        return ops::mean_squared_error(s, target);
    };
    for (const auto& [name, r] : finite_diff_check_all(f, {x, w, b, w2}, 1e-5)) {
        CAPTURE(name);
        CHECK(r.max_rel_error <= 1e-4);
    }
}

TEST_CASE("remaining op gradients match central differences") {
    const Parameter x = param("x", Shape{2, 4, 4, 8}, 20);
    const Parameter g = param("gamma", Shape{4}, 21);
    const Parameter be = param("beta", Shape{4}, 22);
    const Parameter wq = param("wq", Shape{4, 4}, 23);
    const Parameter wk = param("wk", Shape{4, 4}, 24);
    const Parameter wv = param("wv", Shape{4, 4}, 25);
    const Parameter bias = param("bias", Shape{4}, 26);
    const Parameter s = param("s", Shape{1}, 27);
    const Parameter se = param("se", Shape{4, 4, 1, 1}, 28);
    const Tensor target = random_tensor(Shape{2, 4, 5, 11}, 29);
    auto f = [&] {
        Variable h = ops::layer_norm_channels(x.var, g.var, be.var);
        Variable win = ops::window_partition(h, 2, 4);
        Variable a = ops::attention(ops::linear(win, wq.var), ops::linear(win, wk.var), ops::linear(win, wv.var), 2);
        Variable m = ops::window_merge(a, h.shape(), 2, 4);
        m = ops::add_channel_bias(m, bias.var);
        Variable pooled = ops::sigmoid(ops::conv2d(ops::global_avg_pool(m), se.var, Variable{}));
        m = ops::channel_scale(m, pooled);
        m = ops::add(m, ops::broadcast_spatial(pooled, 4, 8));
        m = ops::sub(ops::scale_by(m, s.var), ops::affine(x.var, 0.5, 0.1));
        Variable cat = ops::concat_channels({m, x.var});
        cat = ops::reflect_pad(cat, 1, 3);
        cat = ops::crop(cat, 5, 11);
        return ops::mean_squared_error(ops::conv2d(cat, Variable(random_tensor(Shape{4, 8, 1, 1}, 30)), Variable{}),
                                       target);
    };
    for (const auto& [name, r] : finite_diff_check_all(f, {x, g, be, wq, wk, wv, bias, s, se}, 1e-5)) {
        CAPTURE(name);
        CAPTURE(r.analytic);
        CAPTURE(r.numeric);
        CHECK(r.max_rel_error <= 1e-4);
    }
}

TEST_CASE("adam step") {
    Parameter p{"p", Variable(Tensor::scalar(0.0), true)};
    OptimizerState st;
    st.learning_rate = 0.1;
    adam_step({p}, {{"p", Tensor::scalar(1.0)}}, st);
    CHECK(std::abs(p.var.value()[0] - (-0.1 / (1.0 + 1e-8))) < 1e-15);

    Parameter q{"q", Variable(random_tensor(Shape{3}, 1), true)};
    const Tensor q0 = q.var.value();
    OptimizerState s2;
    for (int i = 0; i < 3; ++i) adam_step({q}, {{"q", Tensor::zeros(Shape{3})}}, s2);
    CHECK(q.var.value() == q0);

    OptimizerState s3;
    s3.learning_rate = 0.0;
    for (int i = 0; i < 3; ++i) adam_step({q}, {{"q", random_tensor(Shape{3}, i)}}, s3);
    CHECK(q.var.value() == q0);
    CHECK(s3.moments.at("q").first.shape() == q0.shape());

    CHECK_THROWS_AS(adam_step({q}, {{"q", Tensor::zeros(Shape{4})}}, s3), ShapeError);
    CHECK_THROWS_AS(adam_step({q}, {}, s3), std::invalid_argument);
}

TEST_CASE("piecewise lr schedule") {
    const LrSchedule s({{0, 1e-4}, {200, 5e-5}, {400, 1e-5}});
    CHECK(s.at(0) == 1e-4);
    CHECK(s.at(199) == 1e-4);
    CHECK(s.at(200) == 5e-5);
    CHECK(s.at(499) == 1e-5);
    CHECK_THROWS(LrSchedule({{0, 1e-4}, {0, 1e-5}}));
    CHECK_THROWS(LrSchedule({{5, 1e-4}}));
}
