// Microbenchmarks for the pipeline's hot paths: feature extraction, the
// network forward pass, metric accumulation and label rasterization.

#include <benchmark/benchmark.h>

#include <random>

#include "iptdet/dataset.hpp"
#include "iptdet/evaluation.hpp"
#include "iptdet/features.hpp"
#include "iptdet/model.hpp"
#include "iptdet/synth.hpp"

namespace {

using namespace iptdet;

void bm_cqt_clip(benchmark::State& state) {
    const SynthResult synth = synth_fixture(random_fixture_spec(7, 4.0));
    AudioClip clip;
    clip.samples.assign(synth.audio.samples.begin(),
                        synth.audio.samples.begin() + kClipSamples);
    clip.source_id = "bench";
    for (auto _ : state) {
        const CqtSpectrogram cqt = compute_cqt(clip);
        benchmark::DoNotOptimize(cqt.mag.data());
    }
}
BENCHMARK(bm_cqt_clip)->Unit(benchmark::kMillisecond);

void bm_forward_clip(benchmark::State& state) {
    MultiScaleNet net(ModelConfig{}, 1);
    nn::Tensor x(1, kCqtBins, 259, 1);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (auto& v : x.v) v = ud(rng);
    for (auto _ : state) {
        const nn::Tensor y = net.forward(x, false);
        benchmark::DoNotOptimize(y.v.data());
    }
}
BENCHMARK(bm_forward_clip)->Unit(benchmark::kMillisecond);

void bm_train_step(benchmark::State& state) {
    MultiScaleNet net(ModelConfig{}, 3);
    nn::Tensor x(1, kCqtBins, 259, 1);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (auto& v : x.v) v = ud(rng);
    for (auto _ : state) {
        nn::Tensor y = net.forward(x, true);
        for (auto& v : y.v) v = 1.0; // stand-in loss gradient
        net.backward(y);
        benchmark::DoNotOptimize(y.v.data());
    }
}
BENCHMARK(bm_train_step)->Unit(benchmark::kMillisecond);

void bm_frame_metrics(benchmark::State& state) {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution bit(0.3);
    FrameLabelMatrix pred(3000, kHop, kTargetSampleRate), truth(3000, kHop, kTargetSampleRate);
    for (int c = 0; c < kNumIptClasses; ++c)
        for (int t = 0; t < 3000; ++t) {
            if (bit(rng)) pred.set(c, t, 1);
            if (bit(rng)) truth.set(c, t, 1);
        }
    for (auto _ : state) {
        const FrameMetrics m = frame_metrics(pred, truth);
        benchmark::DoNotOptimize(&m);
    }
}
BENCHMARK(bm_frame_metrics);

void bm_rasterize(benchmark::State& state) {
    const SynthResult synth = synth_fixture(random_fixture_spec(9, 30.0));
    const int frames = frame_count(static_cast<std::int64_t>(synth.audio.samples.size()), kHop);
    for (auto _ : state) {
        const RasterizeResult r = rasterize_labels(synth.notes, frames, kHop, kTargetSampleRate);
        benchmark::DoNotOptimize(r.labels.values.data());
    }
}
BENCHMARK(bm_rasterize);

} // namespace

BENCHMARK_MAIN();
