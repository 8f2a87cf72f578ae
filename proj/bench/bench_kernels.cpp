// Serial vs OpenMP batch kernels on a synthetic corpus.
//   bench_kernels --benchmark_filter=grad

#include "delt/kernels.hpp"
#include "delt/synth.hpp"

#include <benchmark/benchmark.h>

#include <omp.h>

#include <map>

using namespace delt;

namespace {

struct Fixture {
    ModelParams params;
    std::vector<const TokenSeq*> seqs;
    std::vector<double> weights;
    std::vector<double> probe;
    Corpus corpus;
};

const Fixture& fixture(std::size_t samples)
{
    static std::map<std::size_t, Fixture> cache;
    auto it = cache.find(samples);
    if (it != cache.end())
        return it->second;
    SynthConfig sc;
    sc.samples = samples;
    sc.seed = 11;
    auto synth = make_synthetic(sc);
    Fixture f{init_params(ModelConfig{}), {}, {}, {}, std::move(synth.train)};
    for (const auto& s : f.corpus)
        f.seqs.push_back(&s.tokens);
    f.weights.assign(samples, 1.0 / static_cast<double>(samples));
    f.probe.assign(f.params.theta.size(), 1e-3);
    return cache.emplace(samples, std::move(f)).first->second;
}

template <auto Kernel>
void grad(benchmark::State& state)
{
    const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
    if (state.range(1) > 0)
        omp_set_num_threads(static_cast<int>(state.range(1)));
    for (auto _ : state)
        benchmark::DoNotOptimize(Kernel(f.params, f.seqs, f.weights));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Kernel>
void stats(benchmark::State& state)
{
    const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
    if (state.range(1) > 0)
        omp_set_num_threads(static_cast<int>(state.range(1)));
    for (auto _ : state)
        benchmark::DoNotOptimize(Kernel(f.params, f.seqs, f.probe));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void serial_args(benchmark::internal::Benchmark* b)
{
    for (int n : {16, 64, 200})
        b->Args({n, 0});
}

void omp_args(benchmark::internal::Benchmark* b)
{
    const int max = omp_get_num_procs();
    for (int n : {16, 64, 200})
        for (int t = 1; t <= max; t *= 2)
            b->Args({n, t});
}

}  // namespace

BENCHMARK(grad<kernels::serial::weighted_loss_and_gradient>)->Name("grad/serial")->Apply(serial_args)->UseRealTime();
BENCHMARK(grad<kernels::omp::weighted_loss_and_gradient>)->Name("grad/omp")->Apply(omp_args)->UseRealTime();
BENCHMARK(stats<kernels::serial::gradient_stats>)->Name("stats/serial")->Apply(serial_args)->UseRealTime();
BENCHMARK(stats<kernels::omp::gradient_stats>)->Name("stats/omp")->Apply(omp_args)->UseRealTime();

BENCHMARK_MAIN();
