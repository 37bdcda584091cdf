#include <benchmark/benchmark.h>

#include <omp.h>

#include "looptune/pipeline.hpp"

using namespace looptune;

namespace {

const LoopNest& bench_gemm()
{
    static const LoopNest g = gemm_nest(320, 3072, 4096);
    return g;
}

const std::vector<VariantDescriptor>& bench_variants()
{
    static const std::vector<VariantDescriptor> v = [] {
        SearchSpace s = SearchSpace::uniform({32, 64, 128, 256}, {{0, 1, 2}, {2, 0, 1}});
        std::vector<VariantDescriptor> out;
        for (const auto& var : generate_variants(bench_gemm(), s))
            out.push_back(var.descriptor);
        out.resize(std::min<std::size_t>(out.size(), 512));
        return out;
    }();
    return v;
}

void BM_featurize_serial(benchmark::State& state)
{
    const auto cache = CacheHierarchy::cascade_lake();
    for (auto _ : state)
        benchmark::DoNotOptimize(featurize_all_serial(bench_gemm(), bench_variants(), cache));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(bench_variants().size()));
}

void BM_featurize_parallel(benchmark::State& state)
{
    const auto cache = CacheHierarchy::cascade_lake();
    const int workers = static_cast<int>(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(featurize_all(bench_gemm(), bench_variants(), cache, workers));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(bench_variants().size()));
}

struct TournamentInput {
    Ranker ranker;
    std::vector<std::string> ids;
    std::vector<std::vector<double>> scaled;
};

const TournamentInput& tournament_input()
{
    static const TournamentInput in = [] {
        PipelineConfig c;
        c.space = SearchSpace::uniform({32, 64, 128, 256}, {{0, 1, 2}, {2, 0, 1}});
        const Problem p{320, 3072, 4096};
        VariantTable t = build_variant_table(p, c);
        RankerConfig rc;
        rc.epochs = 2;
        TournamentInput r;
        r.ranker = train_ranker(grouped_samples({t}), rc).ranker;
        const std::size_t n = std::min<std::size_t>(t.descriptors.size(), 256);
        for (std::size_t v = 0; v < n; ++v) {
            r.ids.push_back(t.descriptors[v].id());
            r.scaled.push_back(r.ranker.scaler.transform(t.features[v]));
        }
        return r;
    }();
    return in;
}

void BM_tournament_serial(benchmark::State& state)
{
    const auto& in = tournament_input();
    auto cmp = [&](std::size_t i, std::size_t j) { return in.ranker.model.compare(in.scaled[i], in.scaled[j]); };
    for (auto _ : state)
        benchmark::DoNotOptimize(tournament_rank_serial(in.ids, cmp));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(in.ids.size() * (in.ids.size() - 1) / 2));
}

void BM_tournament_parallel(benchmark::State& state)
{
    const auto& in = tournament_input();
    const int workers = static_cast<int>(state.range(0));
    auto cmp = [&](std::size_t i, std::size_t j) { return in.ranker.model.compare(in.scaled[i], in.scaled[j]); };
    for (auto _ : state)
        benchmark::DoNotOptimize(tournament_rank(in.ids, cmp, workers));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(in.ids.size() * (in.ids.size() - 1) / 2));
}

void worker_counts(benchmark::internal::Benchmark* b)
{
    for (int w = 1; w <= omp_get_max_threads(); w *= 2)
        b->Arg(w);
    if ((omp_get_max_threads() & (omp_get_max_threads() - 1)) != 0)
        b->Arg(omp_get_max_threads());
}

} // namespace

BENCHMARK(BM_featurize_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_featurize_parallel)->Apply(worker_counts)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_tournament_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_tournament_parallel)->Apply(worker_counts)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
