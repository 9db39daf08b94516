#include <benchmark/benchmark.h>

#include <vector>

#include "dist/clipset.hpp"
#include "dist/model.hpp"
#include "dist/reliability.hpp"
#include "dist/sampling.hpp"

using namespace dist;

namespace {

const ClipSet& bench_clipset() {
    static ClipSet set = [] {
        GeneratorParams gp;
        gp.num_clips = 64;
        gp.num_classes = 4;
        gp.frames_per_clip = 16;
        gp.frame_size = 32;
        gp.difficulty = 0.3;
        gp.seed = 1;
        return generate_synthetic_dataset(gp);
    }();
    return set;
}

Model bench_model() {
    ModelSpec spec;
    spec.num_classes = 4;
    spec.target_frames = 8;
    spec.frame_size = 32;
    spec.init_seed = 1;
    return Model(spec);
}

}  // namespace

static void BM_ReliabilityScore(benchmark::State& state) {
    CheckpointPredictions p;
    p.z1 = {0.5, 0.2, 0.2, 0.1};
    p.z2 = {0.6, 0.2, 0.1, 0.1};
    p.zf = {0.7, 0.1, 0.1, 0.1};
    for (auto _ : state) {
        benchmark::DoNotOptimize(reliability_score(p));
    }
}
BENCHMARK(BM_ReliabilityScore);

static void BM_UniformSample(benchmark::State& state) {
    const Clip& clip = bench_clipset().clips()[0];
    SamplingParams params{8};
    for (auto _ : state) {
        benchmark::DoNotOptimize(uniform_sample(clip, params));
    }
}
BENCHMARK(BM_UniformSample);

static void BM_StratifiedSample(benchmark::State& state) {
    const Clip& clip = bench_clipset().clips()[0];
    SamplingParams params{8};
    uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(random_stratified_sample(clip, params, seed++));
    }
}
BENCHMARK(BM_StratifiedSample);

static void BM_StrongAugment(benchmark::State& state) {
    FrameArray frames = uniform_sample(bench_clipset().clips()[0], SamplingParams{8});
    AugmentParams aug;
    uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(strong_augment(frames, aug, seed++));
    }
}
BENCHMARK(BM_StrongAugment);

static void BM_ModelForward(benchmark::State& state) {
    Model model = bench_model();
    FrameArray input = uniform_sample(bench_clipset().clips()[0], SamplingParams{8});
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.predict_probs(input));
    }
}
BENCHMARK(BM_ModelForward);

static void BM_GenerateClip(benchmark::State& state) {
    GeneratorParams gp;
    gp.num_clips = 4;
    gp.num_classes = 4;
    gp.frames_per_clip = 16;
    gp.frame_size = 32;
    gp.difficulty = 0.3;
    for (auto _ : state) {
        gp.seed++;
        benchmark::DoNotOptimize(generate_synthetic_dataset(gp));
    }
}
BENCHMARK(BM_GenerateClip);

BENCHMARK_MAIN();
