// Serial references against their OpenMP counterparts.

#include "srl360/baselines.hpp"
#include "srl360/predictors.hpp"
#include "srl360/synthetic.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace srl360;

namespace {

std::vector<predict::PredictionTask> tasks(std::size_t n) {
    harness::SyntheticTrajectorySpec spec;
    spec.user_count = 12;
    spec.duration_s = 30.0;
    std::vector<geo::Trajectory> video;
    for (auto &t : harness::synthesize_trajectories(spec)) video.push_back(predict::downsample(t, 5));
    predict::TaskWindow w;
    w.cross_user_count = 8;
    auto all = predict::build_tasks(video, w, 1);
    all.resize(std::min(all.size(), n));
    return all;
}

template <bool Parallel>
void cuan_batch(benchmark::State &state) {
    const auto data = tasks(static_cast<std::size_t>(state.range(0)));
    std::vector<const predict::PredictionTask *> batch;
    for (const auto &t : data) batch.push_back(&t);
    predict::CuanParams params;
    nn::Rng rng(1);
    predict::init_uniform(params, rng);
    predict::CuanParams grad;
    for (auto _ : state) {
        const double loss = Parallel ? predict::cuan_batch_gradient(params, batch, grad)
                                     : predict::cuan_batch_gradient_serial(params, batch, grad);
        benchmark::DoNotOptimize(loss);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}

env::Episode oracle_world(const env::VideoManifest &m, const env::NetworkTrace &t) {
    const auto p = geo::viewing_probabilities({20.0, 10.0}, m.grid);
    return env::Episode(m, t, {p, p, p}, {p, p, p}, {});
}

template <bool Parallel>
void oracle(benchmark::State &state) {
    env::ManifestSpec ms;
    ms.grid = {2, 2};
    ms.nominal_bitrates_mbps = {1.0, 3.0, 6.0};
    ms.segment_count = 3;
    const auto manifest = env::synthesize_manifest(ms);
    harness::SyntheticTraceSpec ts;
    ts.duration_s = 60.0;
    const auto trace = harness::synthesize_trace(ts);
    const auto ep = oracle_world(manifest, trace);
    const auto start = env::reset(ep, 1);
    const auto horizon = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        const auto r = Parallel ? baselines::brute_force_oracle(ep, start, horizon)
                                : baselines::brute_force_oracle_serial(ep, start, horizon);
        benchmark::DoNotOptimize(r.value);
    }
}

} // namespace

BENCHMARK(cuan_batch<false>)->Name("cuan_batch_gradient/serial")->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(cuan_batch<true>)->Name("cuan_batch_gradient/openmp")->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(oracle<false>)->Name("brute_force_oracle/serial")->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);
BENCHMARK(oracle<true>)->Name("brute_force_oracle/openmp")->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
