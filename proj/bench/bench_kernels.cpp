// Serial reference kernels against the OpenMP kernels, plus one full toy
// forward/backward step. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "hdst/autograd.hpp"
#include "hdst/kernels.hpp"
#include "hdst/model/hdst.hpp"
#include "hdst/ops.hpp"
#include "hdst/reference.hpp"
#include "hdst/rng.hpp"

using namespace hdst;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
    Tensor t(std::move(s));
    CounterRng rng(seed);
    for (double& v : t.storage()) v = rng.uniform(-1.0, 1.0);
    return t;
}

struct ConvCase {
    Tensor x, w, b;
    kernels::ConvGeometry g;
    explicit ConvCase(std::size_t size)
        : x(random_tensor(Shape{1, 16, size, size}, 1)),
          w(random_tensor(Shape{16, 16, 3, 3}, 2)),
          b(random_tensor(Shape{16}, 3)),
          g(kernels::conv_geometry(x.shape(), w.shape(), &b, 1, 1)) {}
};

void BM_conv_reference(benchmark::State& st) {
    const ConvCase c(std::size_t(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(kernels::reference::conv2d_forward(c.x, c.w, &c.b, c.g));
    st.counters["threads"] = kernels::max_threads();
}

void BM_conv_parallel(benchmark::State& st) {
    const ConvCase c(std::size_t(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(kernels::conv2d_forward(c.x, c.w, &c.b, c.g));
    st.counters["threads"] = kernels::max_threads();
}

void BM_conv_backward_weight_reference(benchmark::State& st) {
    const ConvCase c(std::size_t(st.range(0)));
    const Tensor go = random_tensor(Shape{1, 16, c.x.dim(2), c.x.dim(3)}, 4);
    for (auto _ : st) benchmark::DoNotOptimize(kernels::reference::conv2d_backward_weight(go, c.x, c.g));
}

void BM_conv_backward_weight_parallel(benchmark::State& st) {
    const ConvCase c(std::size_t(st.range(0)));
    const Tensor go = random_tensor(Shape{1, 16, c.x.dim(2), c.x.dim(3)}, 4);
    for (auto _ : st) benchmark::DoNotOptimize(kernels::conv2d_backward_weight(go, c.x, c.g));
}

void BM_dft_reference(benchmark::State& st) {
    const std::size_t n = std::size_t(st.range(0));
    const Tensor re0 = random_tensor(Shape{8, n, n}, 5);
    for (auto _ : st) {
        Tensor re = re0, im(re0.shape());
        kernels::reference::dft2_planes(re, im, false);
        benchmark::DoNotOptimize(re);
    }
}

void BM_fft_parallel(benchmark::State& st) {
    const std::size_t n = std::size_t(st.range(0));
    const Tensor re0 = random_tensor(Shape{8, n, n}, 5);
    for (auto _ : st) {
        Tensor re = re0, im(re0.shape());
        kernels::fft2_planes(re, im, false);
        benchmark::DoNotOptimize(re);
    }
}

// 64 windows of 8x8 tokens, 16 channels, 2 heads
struct AttnCase {
    Tensor q = random_tensor(Shape{64, 64, 16}, 6), k = random_tensor(Shape{64, 64, 16}, 7),
           v = random_tensor(Shape{64, 64, 16}, 8);
};

void BM_attention_reference(benchmark::State& st) {
    const AttnCase c;
    Tensor probs;
    for (auto _ : st) benchmark::DoNotOptimize(kernels::reference::attention_forward(c.q, c.k, c.v, 2, probs));
}

void BM_attention_parallel(benchmark::State& st) {
    const AttnCase c;
    Tensor probs;
    for (auto _ : st) benchmark::DoNotOptimize(kernels::attention_forward(c.q, c.k, c.v, 2, probs));
}

void BM_toy_train_step(benchmark::State& st) {
    const model::HdstModel m(model::ModelConfig::toy(4));
    const std::size_t n = std::size_t(st.range(0));
    const Tensor x = random_tensor(Shape{1, 4, n, n}, 9), y = random_tensor(Shape{1, 4, n, n}, 10);
    for (auto _ : st) {
        Tape tape;
        Variable loss;
        {
            Tape::Scope s(tape);
            loss = ops::mean_squared_error(m.forward(Variable(x)), y);
        }
        benchmark::DoNotOptimize(backward(loss, tape, m.parameters()));
    }
}

}  // namespace

BENCHMARK(BM_conv_reference)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_parallel)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_backward_weight_reference)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_backward_weight_parallel)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_dft_reference)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_fft_parallel)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_attention_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_attention_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_toy_train_step)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
