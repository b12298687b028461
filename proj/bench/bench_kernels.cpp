// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS to pick the
// thread count for the parallel variants.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cocole/kernels.hpp"
#include "cocole/trainer.hpp"

using namespace cocole;

namespace {

std::vector<double> random_values(std::size_t n, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    std::vector<double> v(n);
    for (double& x : v) x = nd(gen);
    return v;
}

template <kernels::Policy P>
void BM_GemmNN(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        kernels::gemm_nn(a, b, c, n, n, n, P);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * n * n));
}

template <kernels::Policy P>
void BM_GemmNT(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_values(n * n, 3), b = random_values(n * n, 4);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        kernels::gemm_nt(a, b, c, n, n, n, P);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * n * n));
}

// One desk-sized training batch: forward and backward over 8 examples.
template <kernels::Policy P>
void BM_BatchGradient(benchmark::State& state) {
    const FrozenEncoders enc(42, EncoderDims{});
    auto cb = ConceptualCodebook::init(16, 4, enc.dims().d, 0);
    std::vector<Tensor> classes, handcrafted;
    for (int c = 0; c < 4; ++c) {
        classes.push_back(enc.embed_word("class" + std::to_string(c)));
        handcrafted.push_back(l2_normalize(Tensor::vector(random_values(enc.dims().d, 10 + c))));
    }
    std::vector<TrainingExample> batch;
    for (std::size_t b = 0; b < 8; ++b)
        batch.push_back({enc.encode_image(Tensor::vector(random_values(enc.dims().d_in, 20 + b))), b % 4});
    ObjectiveConfig cfg;
    cfg.k3 = 2;
    for (auto _ : state) {
        auto g = batch_gradient(enc, cb, batch, classes, handcrafted, cfg, P);
        benchmark::DoNotOptimize(g.grad.data());
    }
}

}  // namespace

BENCHMARK(BM_GemmNN<kernels::Policy::kSerial>)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_GemmNN<kernels::Policy::kParallel>)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_GemmNT<kernels::Policy::kSerial>)->Arg(64)->Arg(256);
BENCHMARK(BM_GemmNT<kernels::Policy::kParallel>)->Arg(64)->Arg(256);
BENCHMARK(BM_BatchGradient<kernels::Policy::kSerial>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradient<kernels::Policy::kParallel>)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
