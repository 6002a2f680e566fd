// Microbenchmarks for the hot paths: the 3D convolution kernel, one coupling
// block in both directions, and a full gradient step under each engine.

#include <benchmark/benchmark.h>

#include "revsci/conv3d.hpp"
#include "revsci/engine.hpp"
#include "revsci/network.hpp"
#include "revsci/rng.hpp"

using namespace revsci;

namespace {

NetworkConfig bench_config(std::size_t L) {
    NetworkConfig config;
    config.c1 = 16;
    config.m = 2;
    config.L = L;
    config.B = 8;
    config.dtype = Dtype::f32;
    config.seed = 7;
    return config;
}

void BM_conv3d_forward(benchmark::State& state) {
    const std::size_t channels = static_cast<std::size_t>(state.range(0));
    Conv3dSpec spec;
    spec.kernel = {3, 3, 3};
    spec.padding = {1, 1, 1};
    spec.in_channels = channels;
    spec.out_channels = channels;
    Rng rng(1);
    Tensor<float> input = Tensor<float>::uniform({channels, 8, 32, 32}, rng, -1.0, 1.0);
    Tensor<float> weights =
        Tensor<float>::uniform({channels, channels, 3, 3, 3}, rng, -0.1, 0.1);
    Tensor<float> bias = Tensor<float>::uniform({channels}, rng, -0.1, 0.1);
    for (auto _ : state)
        benchmark::DoNotOptimize(conv3d_forward(input, weights, bias, spec));
}

void BM_rev_block(benchmark::State& state) {
    const bool inverse = state.range(0) != 0;
    Network<float> net = build_network<float>(bench_config(1));
    Rng rng(2);
    Tensor<float> h = Tensor<float>::uniform({16, 8, 32, 32}, rng, -1.0, 1.0);
    for (auto _ : state) {
        if (inverse)
            benchmark::DoNotOptimize(rev_block_inverse(net.blocks[0], h));
        else
            benchmark::DoNotOptimize(rev_block_forward(net.blocks[0], h));
    }
}

void BM_backward(benchmark::State& state) {
    const bool reversible = state.range(0) != 0;
    const std::size_t L = static_cast<std::size_t>(state.range(1));
    Network<float> net = build_network<float>(bench_config(L));
    Rng rng(3);
    Tensor<float> input = Tensor<float>::uniform({1, 8, 32, 32}, rng, 0.0, 1.0);
    Tensor<float> truth = Tensor<float>::uniform({1, 8, 32, 32}, rng, 0.0, 1.0);
    std::size_t peak = 0;
    for (auto _ : state) {
        auto [grads, mem] = reversible ? backward_reversible(net, input, truth)
                                       : backward_naive(net, input, truth);
        benchmark::DoNotOptimize(grads);
        peak = mem.peak_activation_bytes;
    }
    state.counters["peak_activation_bytes"] = static_cast<double>(peak);
}

} // namespace

BENCHMARK(BM_conv3d_forward)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_rev_block)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_backward)
    ->Args({0, 2})
    ->Args({1, 2})
    ->Args({0, 6})
    ->Args({1, 6})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
