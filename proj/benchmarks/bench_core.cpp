#include <benchmark/benchmark.h>

#include "r3ds/model.hpp"
#include "r3ds/nn3d.hpp"
#include "r3ds/ops.hpp"
#include "r3ds/rng.hpp"

using namespace r3ds;

namespace {

Tensor32 randn(Shape shape, uint64_t seed) {
    Rng rng(seed);
    Tensor32 t = Tensor32::zeros(std::move(shape));
    for (float& v : t.data) v = float(rng.normal());
    return t;
}

void BM_Matmul(benchmark::State& state) {
    int64_t n = state.range(0);
    Tensor32 a = randn({n, n}, 1), b = randn({n, n}, 2);
    for (auto _ : state) {
        Tensor32 c = matmul<float>(nullptr, a, b);
        benchmark::DoNotOptimize(c.data.data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_WindowAttention(benchmark::State& state) {
    EncoderConfig cfg = EncoderConfig::preset("desk");
    ParamStore<float> store;
    SwinEncoder<float> enc = SwinEncoder<float>::build(cfg, store, 3);
    Tensor32 fm = randn({4, 16, 16, 16}, 4);
    for (auto _ : state) {
        Tensor32 out = enc.block_forward(nullptr, store, fm, 0, enc.blocks[0][0], nullptr);
        benchmark::DoNotOptimize(out.data.data());
    }
}
BENCHMARK(BM_WindowAttention);

void BM_ShiftedWindowAttention(benchmark::State& state) {
    EncoderConfig cfg = EncoderConfig::preset("desk");
    cfg.depths = {2, 1, 2, 1};  // make stage 0 hold a shifted block
    ParamStore<float> store;
    SwinEncoder<float> enc = SwinEncoder<float>::build(cfg, store, 3);
    Tensor32 fm = randn({4, 16, 16, 16}, 4);
    for (auto _ : state) {
        Tensor32 out = enc.block_forward(nullptr, store, fm, 0, enc.blocks[0][1], nullptr);
        benchmark::DoNotOptimize(out.data.data());
    }
}
BENCHMARK(BM_ShiftedWindowAttention);

void BM_ConvTranspose3d(benchmark::State& state) {
    Tensor32 x = randn({1, 16, 8, 8, 8}, 5);
    Tensor32 w = randn({16, 8, 4, 4, 4}, 6);
    Tensor32 b = randn({8}, 7);
    for (auto _ : state) {
        Tensor32 y = conv_transpose3d<float>(nullptr, x, w, b);
        benchmark::DoNotOptimize(y.data.data());
    }
    state.SetItemsProcessed(state.iterations() * 16 * 8 * 512 * 64);
}
BENCHMARK(BM_ConvTranspose3d);

void BM_EncoderForward(benchmark::State& state) {
    Model<float> m = Model<float>::build(EncoderConfig::preset("desk"),
                                         DecoderConfig::preset("tiny"), 3);
    Tensor32 img = randn({1, 3, 64, 64}, 8);
    for (auto _ : state) {
        Tensor32 fm = m.encoder.forward(nullptr, m.params, img);
        benchmark::DoNotOptimize(fm.data.data());
    }
}
BENCHMARK(BM_EncoderForward);

void BM_ModelForward(benchmark::State& state) {
    Model<float> m = Model<float>::build(EncoderConfig::preset("desk"),
                                         DecoderConfig::preset("desk"), 3);
    Tensor32 img = randn({1, 3, 64, 64}, 8);
    for (auto _ : state) {
        Tensor32 probs = m.forward(nullptr, img, false);
        benchmark::DoNotOptimize(probs.data.data());
    }
}
BENCHMARK(BM_ModelForward);

void BM_TrainStep(benchmark::State& state) {
    Model<float> m = Model<float>::build(EncoderConfig::preset("tiny"),
                                         DecoderConfig::preset("tiny"), 3);
    Tensor32 img = randn({4, 3, 64, 64}, 8);
    Rng rng(9);
    Tensor32 target = Tensor32::zeros({4, 32 * 32 * 32});
    for (float& v : target.data) v = rng.next_double() < 0.3 ? 1.f : 0.f;
    for (auto _ : state) {
        Tape<float> tape;
        m.params.watch_all(tape);
        Tensor32 loss = m.loss(&tape, img, target, true);
        tape.backward(loss);
        benchmark::DoNotOptimize(loss.data.data());
    }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
