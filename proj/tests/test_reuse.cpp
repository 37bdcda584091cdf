#include <doctest.h>

#include <array>
#include <map>
#include <random>
#include <set>

#include "looptune/reuse.hpp"
#include "looptune/symbolic.hpp"

using namespace looptune;

namespace {

const DependenceRelation& find_dep(const std::vector<DependenceRelation>& deps, const std::string& array,
                                   DependenceKind kind = DependenceKind::RAR)
{
    for (const auto& d : deps)
        if (d.array == array && d.kind == kind)
            return d;
    FAIL("missing dependence");
    return deps.front();
}

WorkingSetRecord record(std::int64_t ws_min, std::int64_t ws_max)
{
    WorkingSetRecord r;
    r.ws_min = ws_min;
    r.ws_max = ws_max;
    return r;
}

} // namespace

TEST_CASE("GEMM has the three reuse classes")
{
    auto nest = gemm_nest(4, 4, 4);
    auto deps = compute_dependences(nest);
    REQUIRE(deps.size() == 6);

    std::set<DependenceKind> c_kinds;
    for (const auto& d : deps)
        if (d.array == "C")
            c_kinds.insert(d.kind);
    CHECK(c_kinds == std::set<DependenceKind>{DependenceKind::RAR, DependenceKind::RAW,
                                              DependenceKind::WAR, DependenceKind::WAW});

    const auto& d1 = find_dep(deps, "C", DependenceKind::RAW);
    CHECK(d1.description == "i' = i and j' = j and k < k' < K");
    CHECK(d1.carrying_loop == 2);
    const auto& d2 = find_dep(deps, "A");
    CHECK(d2.description == "i' = i and k' = k and j < j' < N");
    CHECK(d2.carrying_loop == 1);
    const auto& d3 = find_dep(deps, "B");
    CHECK(d3.description == "j' = j and k' = k and i < i' < M");
    CHECK(d3.carrying_loop == 0);

    CHECK(d2.source_iteration == Iteration{0, 0, 0});
    CHECK(*d2.min_target == Iteration{0, 1, 0});
    CHECK(*d2.max_target == Iteration{0, 3, 0});
}

TEST_CASE("relations agree with brute-force reuse pairs")
{
    auto nest = gemm_nest(3, 2, 3);
    auto deps = compute_dependences(nest);
    auto its = enumerate_iterations(nest);
    const auto& d1 = find_dep(deps, "C", DependenceKind::WAW);
    const auto& d2 = find_dep(deps, "A");
    const auto& d3 = find_dep(deps, "B");
    for (std::size_t s = 0; s < its.size(); ++s) {
        for (std::size_t t = 0; t < its.size(); ++t) {
            const auto& a = its[s];
            const auto& b = its[t];
            bool later = s < t;
            CHECK(d1.contains(nest, a, b) == (later && a[0] == b[0] && a[1] == b[1]));
            CHECK(d2.contains(nest, a, b) == (later && a[0] == b[0] && a[2] == b[2]));
            CHECK(d3.contains(nest, a, b) == (later && a[1] == b[1] && a[2] == b[2]));
        }
    }
}

TEST_CASE("unit reduction extent leaves the C reuse empty")
{
    auto nest = gemm_nest(4, 5, 1);
    auto deps = compute_dependences(nest);
    const auto& d1 = find_dep(deps, "C", DependenceKind::RAW);
    CHECK(d1.empty());
    CHECK_FALSE(working_set(nest, d1).has_value());
    CHECK_FALSE(find_dep(deps, "A").empty());
    // Only the A and B relations survive.
    CHECK(analyze_working_sets(nest).size() == 2);
}

TEST_CASE("working sets of the A reuse at 4x4x4")
{
    auto nest = gemm_nest(4, 4, 4);
    auto rec = working_set(nest, find_dep(compute_dependences(nest), "A"));
    REQUIRE(rec);
    CHECK(rec->ws_min == 11);
    CHECK(rec->ws_max == 21);
    std::map<std::string, std::int64_t> b(rec->breakdown_min.begin(), rec->breakdown_min.end());
    CHECK(b["A"] == 4);
    CHECK(b["B"] == 5);
    CHECK(b["C"] == 2);
    CHECK(rec->ws_min <= rec->ws_max);
    CHECK(rec->ws_max <= nest.footprint());
}

TEST_CASE("working-set oracle basics")
{
    auto nest = gemm_nest(4, 4, 4);
    CHECK(working_set_oracle(nest, {1, 2, 3}, {1, 2, 3}) == 3);
    CHECK(working_set_oracle(nest, {0, 0, 0}, {0, 1, 0}) == 11);
    CHECK(working_set_oracle(nest, {0, 0, 0}, {0, 3, 0}) == 21);
    auto small = gemm_nest(2, 2, 2);
    CHECK(working_set_oracle(small, {0, 0, 0}, {1, 1, 1}) == 12);
    CHECK_THROWS_AS(working_set_oracle(nest, {0, 1, 0}, {0, 0, 0}), Error);
    CHECK_THROWS_AS(working_set_oracle(nest, {0, 0, 0}, {3, 3, 3}, 10), Error);
}

TEST_CASE("closed-form counter equals the oracle on untiled orders")
{
    for (std::int64_t M : {2, 3, 5, 8})
        for (std::int64_t N : {2, 4, 7})
            for (std::int64_t K : {2, 3, 6}) {
                std::array<std::size_t, 3> order{0, 1, 2};
                do {
                    auto nest = permute_loops(gemm_nest(M, N, K), order);
                    for (const auto& dep : compute_dependences(nest)) {
                        auto rec = working_set(nest, dep);
                        REQUIRE(rec);
                        REQUIRE(rec->ws_min ==
                                working_set_oracle(nest, dep.source_iteration, *dep.min_target));
                        REQUIRE(rec->ws_max ==
                                working_set_oracle(nest, dep.source_iteration, *dep.max_target));
                    }
                } while (std::next_permutation(order.begin(), order.end()));
            }
}

TEST_CASE("arbitrary intervals: counter equals oracle")
{
    auto nest = permute_loops(gemm_nest(4, 3, 5), std::array<std::size_t, 3>{1, 2, 0});
    auto its = enumerate_iterations(nest);
    std::mt19937 rng(7);
    std::uniform_int_distribution<std::size_t> pick(0, its.size() - 1);
    for (int trial = 0; trial < 300; ++trial) {
        auto a = pick(rng), b = pick(rng);
        if (a > b)
            std::swap(a, b);
        REQUIRE(distinct_elements(nest, its[a], its[b]) == working_set_oracle(nest, its[a], its[b]));
    }
}

TEST_CASE("symbolic working sets of the A reuse")
{
    auto nest = gemm_nest(16, 16, 16);
    const auto& d2 = find_dep(compute_dependences(nest), "A");
    auto ws_min = symbolic_working_set(nest, d2, WorkingSetBound::Min);
    auto ws_max = symbolic_working_set(nest, d2, WorkingSetBound::Max);
    REQUIRE(ws_min);
    REQUIRE(ws_max);
    CHECK(ws_min->to_string() == "2K+3");
    CHECK(ws_max->to_string() == "NK+N+1");
    CHECK(ws_min->coefficient({"K"}) == 2);
    CHECK(ws_min->coefficient({}) == 3);
    CHECK(ws_max->coefficient({"N", "K"}) == 1);
    std::array<std::int64_t, 3> at{4, 4, 4};
    CHECK(ws_min->evaluate(at) == 11);
    CHECK(ws_max->evaluate(at) == 21);
}

TEST_CASE("multilinear fit rejects non-multilinear functions")
{
    auto square = [](std::span<const std::int64_t> x) -> std::optional<std::int64_t> {
        return x[0] * x[0];
    };
    CHECK_FALSE(fit_multilinear({"M"}, square).has_value());
    auto bilinear = [](std::span<const std::int64_t> x) -> std::optional<std::int64_t> {
        return 3 * x[0] * x[1] - 2 * x[1] + 7;
    };
    auto p = fit_multilinear({"M", "Name"}, bilinear);
    REQUIRE(p);
    CHECK(p->to_string() == "3*M*Name-2*Name+7");
}

TEST_CASE("classification picks the fastest fitting level")
{
    auto cache = CacheHierarchy::cascade_lake();
    std::vector<WorkingSetRecord> one{record(10, 5000)};
    auto p = classify(one, cache);
    CHECK(p.max_slots == std::vector<std::int64_t>{5000, 0, 0, 0});

    std::vector<WorkingSetRecord> l3{record(10, 300000)};
    CHECK(classify(l3, cache).max_slots == std::vector<std::int64_t>{0, 0, 300000, 0});

    std::vector<WorkingSetRecord> huge{record(10, 20'000'000)};
    CHECK(classify(huge, cache).max_slots == std::vector<std::int64_t>{0, 0, 0, 20'000'000});
    CHECK(classify(huge, cache).min_slots == std::vector<std::int64_t>{10, 0, 0, 0});
}

TEST_CASE("classification conserves volume and is monotone in capacity")
{
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::int64_t> size(1, 20'000'000);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<WorkingSetRecord> recs;
        std::int64_t total = 0;
        for (int r = 0; r < 6; ++r) {
            auto hi = size(rng);
            recs.push_back(record(hi / 2 + 1, hi));
            total += hi;
        }
        auto cache = CacheHierarchy::cascade_lake();
        auto before = classify(recs, cache);
        std::int64_t sum = 0;
        for (auto s : before.max_slots)
            sum += s;
        CHECK(sum == total);

        auto bigger = cache;
        std::size_t level = trial % 3;
        bigger.levels[level].capacity_bytes *= 2;
        if (level + 1 < bigger.levels.size() &&
            bigger.levels[level].capacity_bytes >= bigger.levels[level + 1].capacity_bytes)
            continue;
        for (const auto& r : recs)
            CHECK(fastest_level(r.ws_max, bigger) <= fastest_level(r.ws_max, cache));
    }
}

TEST_CASE("cache hierarchy validation")
{
    CacheHierarchy empty;
    CHECK_THROWS_AS(empty.validate(), Error);
    CacheHierarchy shrinking{{{"L1", 1024}, {"L2", 512}}, 4};
    CHECK_THROWS_AS(shrinking.validate(), Error);
}

TEST_CASE("unsupported nests")
{
    auto v = [](const char* n) { return AffineExpr::var(n); };
    // Two references to A with different subscripts.
    LoopNest twisted({{"i", 0, {v("M")}, 1}, {"j", 0, {v("M")}, 1}},
                     {{"C", {v("M"), v("M")}}, {"A", {v("M"), v("M")}}},
                     {{"C", AccessKind::ReadWrite, {v("i"), v("j")}},
                      {"A", AccessKind::Read, {v("i"), v("j")}},
                      {"A", AccessKind::Read, {v("j"), v("i")}}},
                     {{"M", 3}});
    try {
        compute_dependences(twisted);
        FAIL("expected unsupported-nest");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnsupportedNest);
    }
    // Skewed subscript.
    LoopNest skewed({{"i", 0, {v("M")}, 1}, {"j", 0, {v("M")}, 1}},
                    {{"C", {v("M")}}, {"A", {AffineExpr(2) * 1 + v("M") * 2}}},
                    {{"C", AccessKind::ReadWrite, {v("i")}}, {"A", AccessKind::Read, {v("i") + v("j")}}},
                    {{"M", 3}});
    CHECK_THROWS_AS(analyze_structure(skewed), Error);
}
