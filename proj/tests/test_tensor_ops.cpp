#include <cmath>
#include <numbers>

#include "doctest.h"
#include "hdst/kernels.hpp"
#include "hdst/ops.hpp"
#include "hdst/reference.hpp"
#include "test_support.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace hdst;
using hdst::testing::direct_conv;
using hdst::testing::max_abs_diff;
using hdst::testing::random_tensor;

namespace {

Tensor conv(const Tensor& x, const Tensor& w, const Tensor* b, long dil = 1, long groups = 1) {
    const auto g = kernels::conv_geometry(x.shape(), w.shape(), b, dil, groups);
    return kernels::conv2d_forward(x, w, b, g);
}

Tensor identity_kernel(std::size_t channels) {
    Tensor w(Shape{channels, channels, 3, 3});
    for (std::size_t c = 0; c < channels; ++c) w.at(c, c, 1, 1) = 1.0;
    return w;
}

}  // namespace

TEST_CASE("tensor invariants") {
    Tensor t(Shape{2, 3, 4});
    CHECK(t.numel() == 24);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>(3)), ShapeError);
    CHECK_THROWS_AS(t.reshaped(Shape{5, 5}), ShapeError);
    CHECK_THROWS_AS(ComplexTensor(Tensor(Shape{2}), Tensor(Shape{3})), ShapeError);
}

TEST_CASE("conv2d ones kernel on ones image") {
    const Tensor x = Tensor::full(Shape{1, 1, 3, 3}, 1.0);
    const Tensor w = Tensor::full(Shape{1, 1, 3, 3}, 1.0);
    const Tensor y = conv(x, w, nullptr);
    CHECK(y.at(0, 0, 1, 1) == 9.0);
    CHECK(y.at(0, 0, 0, 0) == 4.0);
    CHECK(y.at(0, 0, 2, 2) == 4.0);
    CHECK(y.at(0, 0, 0, 1) == 6.0);
    CHECK(max_abs_diff(y, direct_conv(x, w, {}, 1, 1)) == 0.0);
}

TEST_CASE("conv2d identity kernel is exact for every dilation") {
    const Tensor x = random_tensor(Shape{2, 3, 9, 7}, 11);
    for (long d : {1L, 2L, 4L, 8L, 18L}) {
        CAPTURE(d);
        CHECK(conv(x, identity_kernel(3), nullptr, d) == x);
    }
}

TEST_CASE("conv2d zero kernel annihilates") {
    const Tensor x = random_tensor(Shape{1, 2, 5, 5}, 3);
    const Tensor b = Tensor::zeros(Shape{2});
    const Tensor y = conv(x, Tensor::zeros(Shape{2, 2, 3, 3}), &b, 2);
    CHECK(y.max_abs() == 0.0);
}

TEST_CASE("conv2d matches direct-sum oracle") {
    struct Case {
        Shape x, w;
        int dil, groups;
    };
    for (const Case& c : {Case{{2, 4, 8, 8}, {6, 2, 3, 3}, 2, 2}, Case{{1, 3, 7, 5}, {2, 3, 3, 3}, 1, 1},
                          Case{{1, 4, 6, 6}, {4, 1, 3, 3}, 4, 4}, Case{{1, 2, 5, 9}, {3, 2, 1, 1}, 1, 1}}) {
        const Tensor x = random_tensor(c.x, 21);
        const Tensor w = random_tensor(c.w, 22);
        std::vector<double> bias;
        for (std::size_t i = 0; i < c.w[0]; ++i) bias.push_back(0.1 * double(i) - 0.2);
        const Tensor bt(Shape{c.w[0]}, bias);
        CHECK(max_abs_diff(conv(x, w, &bt, c.dil, c.groups), direct_conv(x, w, bias, c.dil, c.groups)) < 1e-12);
    }
}

TEST_CASE("conv2d rejects bad geometry with descriptive errors") {
    const Shape x{1, 4, 5, 5};
    CHECK_THROWS_AS(kernels::conv_geometry(x, Shape{2, 4, 3, 3}, nullptr, 0, 1), std::invalid_argument);
    try {
        kernels::conv_geometry(x, Shape{2, 3, 3, 3}, nullptr, 1, 1);
        FAIL("expected throw");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("Cin/groups") != std::string::npos);
    }
    try {
        kernels::conv_geometry(Shape{1, 3, 5, 5}, Shape{2, 1, 3, 3}, nullptr, 1, 2);
        FAIL("expected throw");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("input channels") != std::string::npos);
    }
    const Tensor bad_bias(Shape{3});
    CHECK_THROWS_AS(kernels::conv_geometry(x, Shape{2, 4, 3, 3}, &bad_bias, 1, 1), ShapeError);
}

TEST_CASE("parallel kernels agree with serial references") {
    const Tensor x = random_tensor(Shape{2, 4, 9, 11}, 5);
    const Tensor w = random_tensor(Shape{6, 2, 3, 3}, 6);
    const Tensor b = random_tensor(Shape{6}, 7);
    const Tensor gy = random_tensor(Shape{2, 6, 9, 11}, 8);
    const auto g = kernels::conv_geometry(x.shape(), w.shape(), &b, 3, 2);
    CHECK(max_abs_diff(kernels::conv2d_forward(x, w, &b, g), kernels::reference::conv2d_forward(x, w, &b, g)) < 1e-12);
    CHECK(max_abs_diff(kernels::conv2d_backward_input(gy, w, g), kernels::reference::conv2d_backward_input(gy, w, g)) <
          1e-12);
    CHECK(max_abs_diff(kernels::conv2d_backward_weight(gy, x, g),
                       kernels::reference::conv2d_backward_weight(gy, x, g)) < 1e-11);

    Tensor re = random_tensor(Shape{3, 6, 10}, 9), im = random_tensor(Shape{3, 6, 10}, 10);
    Tensor re2 = re, im2 = im;
    kernels::fft2_planes(re, im, false);
    kernels::reference::dft2_planes(re2, im2, false);
    CHECK(max_abs_diff(re, re2) < 1e-12);
    CHECK(max_abs_diff(im, im2) < 1e-12);

    const Tensor q = random_tensor(Shape{3, 8, 6}, 12), k = random_tensor(Shape{3, 8, 6}, 13),
                 v = random_tensor(Shape{3, 8, 6}, 14);
    Tensor p1, p2;
    CHECK(max_abs_diff(kernels::attention_forward(q, k, v, 2, p1), kernels::reference::attention_forward(q, k, v, 2, p2)) <
          1e-13);
    CHECK(max_abs_diff(p1, p2) < 1e-14);
}

#ifdef _OPENMP
TEST_CASE("kernel results are bit-identical across thread counts") {
    const Tensor x = random_tensor(Shape{3, 4, 16, 16}, 31);
    const Tensor w = random_tensor(Shape{4, 4, 3, 3}, 32);
    const auto g = kernels::conv_geometry(x.shape(), w.shape(), nullptr, 2, 1);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const Tensor y1 = kernels::conv2d_forward(x, w, nullptr, g);
    const Tensor gw1 = kernels::conv2d_backward_weight(x, x, kernels::conv_geometry(x.shape(), Shape{4, 4, 3, 3}, nullptr, 2, 1));
    omp_set_num_threads(4);
    const Tensor y4 = kernels::conv2d_forward(x, w, nullptr, g);
    const Tensor gw4 = kernels::conv2d_backward_weight(x, x, kernels::conv_geometry(x.shape(), Shape{4, 4, 3, 3}, nullptr, 2, 1));
    omp_set_num_threads(saved);
    CHECK(y1 == y4);
    CHECK(gw1 == gw4);
}
#endif

TEST_CASE("softmax closed forms and invariants") {
    const Tensor a = ops::softmax(Tensor(Shape{2}, {0.0, 0.0}), 0);
    CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-15));
    const Tensor b = ops::softmax(Tensor(Shape{2}, {0.0, std::log(3.0)}), 0);
    CHECK(std::abs(b[0] - 0.25) < 1e-12);
    CHECK(std::abs(b[1] - 0.75) < 1e-12);

    const Tensor x = random_tensor(Shape{3, 5, 4}, 41, -20.0, 20.0);
    for (std::size_t axis = 0; axis < 3; ++axis) {
        const Tensor y = ops::softmax(x, axis);
        Tensor shifted = x;
        for (double& v : shifted.storage()) v += 123.25;
        CHECK(max_abs_diff(y, ops::softmax(shifted, axis)) < 1e-9);
        for (double v : y.storage()) CHECK(v > 0.0);
    }
    const Tensor y = ops::softmax(x, 1);
    for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t i = 0; i < 4; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 5; ++j) s += y[(o * 5 + j) * 4 + i];
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    CHECK_THROWS_AS(ops::softmax(x, 3), ShapeError);
}

TEST_CASE("pointwise values") {
    CHECK(ops::sigmoid_value(0.0) == 0.5);
    CHECK(ops::gelu_value(0.0) == 0.0);
    CHECK(ops::gelu_value(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
    CHECK(ops::sigmoid_value(-800.0) >= 0.0);
    CHECK(ops::sigmoid_value(800.0) == 1.0);
    const Variable x(random_tensor(Shape{2, 3}, 51));
    const Variable ones(Tensor::full(Shape{2, 3}, 1.0));
    CHECK(ops::mul(x, ones).value() == x.value());
    CHECK_THROWS_AS(ops::mul(x, Variable(Tensor(Shape{3, 2}))), ShapeError);
    CHECK_THROWS_AS(ops::add(x, Variable(Tensor(Shape{6}))), ShapeError);
}

TEST_CASE("window partition bijection") {
    const Variable x(random_tensor(Shape{2, 3, 8, 12}, 61));
    for (auto [wh, ww] : {std::pair{4u, 4u}, std::pair{4u, 12u}, std::pair{8u, 4u}, std::pair{1u, 1u}}) {
        const Variable w = ops::window_partition(x, wh, ww);
        CHECK(w.shape() == Shape{2 * (8 / wh) * (12 / ww), wh * ww, 3});
        CHECK(ops::window_merge(w, x.shape(), wh, ww).value() == x.value());
    }
    const Variable single = ops::window_partition(Variable(random_tensor(Shape{1, 2, 4, 4}, 1)), 4, 4);
    CHECK(single.shape() == Shape{1, 16, 2});
    CHECK_THROWS_AS(ops::window_partition(x, 5, 4), ShapeError);
}

TEST_CASE("window partition of 4x4 by 2 permutes the input multiset") {
    Tensor t(Shape{1, 1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) t[i] = double(i);
    const Tensor w = ops::window_partition(Variable(t), 2, 2).value();
    CHECK(w.shape() == Shape{4, 4, 1});
    std::vector<double> seen(w.storage());
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 0; i < 16; ++i) CHECK(seen[i] == double(i));
    // window 1 is the top-right 2x2 block
    CHECK(w[4] == 2.0);
    CHECK(w[5] == 3.0);
    CHECK(w[6] == 6.0);
    CHECK(w[7] == 7.0);
}

TEST_CASE("reflect index") {
    CHECK(ops::reflect_index(4, 4) == 2);
    CHECK(ops::reflect_index(5, 4) == 1);
    CHECK(ops::reflect_index(6, 4) == 0);
    CHECK(ops::reflect_index(7, 4) == 1);
    CHECK(ops::reflect_index(3, 1) == 0);
    const Variable x(random_tensor(Shape{1, 1, 3, 2}, 2));
    const Tensor p = ops::reflect_pad(x, 2, 3).value();
    CHECK(p.shape() == Shape{1, 1, 5, 5});
    CHECK(p.at(0, 0, 3, 0) == x.value().at(0, 0, 1, 0));
    CHECK(p.at(0, 0, 0, 2) == x.value().at(0, 0, 0, 0));
    CHECK(ops::crop(Variable(p), 3, 2).value() == x.value());
}
