#include <doctest.h>

#include <algorithm>
#include <random>
#include <map>
#include <set>

#include "looptune/interpreter.hpp"
#include "looptune/variants.hpp"
#include "oracles.hpp"

using namespace looptune;

namespace {

const std::vector<LoopOrder> kAllOrders{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};

std::vector<float> run(const LoopNest& nest, std::uint64_t seed)
{
    auto buf = make_buffers(nest);
    buf["A"] = oracle::random_matrix(buf["A"].size(), seed);
    buf["B"] = oracle::random_matrix(buf["B"].size(), seed + 1);
    interpret(nest, buf);
    return buf["C"];
}

} // namespace

TEST_CASE("cross product and de-duplication")
{
    auto space = SearchSpace::uniform({32, 64}, {{0, 1, 2}});
    CHECK(enumerate_descriptors(space).size() == 64);
    // Level-2 tiles larger than level-1 clamp onto an existing descriptor:
    // per dimension only (32,32), (64,32), (64,64) remain.
    auto variants = generate_variants(gemm_nest(128, 128, 128), space);
    CHECK(variants.size() == 27);
    std::set<std::string> ids;
    for (const auto& v : variants)
        ids.insert(v.descriptor.id());
    CHECK(ids.size() == variants.size());

    // Count = |orders| x |distinct tilings|.
    auto three = SearchSpace::uniform({32, 64}, {{0, 1, 2}, {1, 0, 2}, {2, 1, 0}});
    CHECK(generate_variants(gemm_nest(128, 128, 128), three).size() == 3 * 27);
    // Extents below the tiles collapse everything onto one tiling per order.
    CHECK(generate_variants(gemm_nest(16, 16, 16), three).size() == 3);
}

TEST_CASE("empty search space is rejected")
{
    SearchSpace s = SearchSpace::uniform({}, {{0, 1, 2}});
    CHECK_THROWS_AS(generate_variants(gemm_nest(8, 8, 8), s), Error);
    SearchSpace no_orders = SearchSpace::uniform({4}, {});
    CHECK_THROWS_AS(generate_variants(gemm_nest(8, 8, 8), no_orders), Error);
}

TEST_CASE("full-extent tiles reproduce the untiled nest")
{
    auto gemm = gemm_nest(5, 6, 7);
    VariantDescriptor d{{0, 1, 2}, {5, 6, 7}, {5, 6, 7}};
    auto tiled = tile_gemm(gemm, d);
    CHECK(tiled.depth() == 9);
    auto its = enumerate_iterations(tiled);
    CHECK(its.size() == 5 * 6 * 7);
    for (const auto& it : its)
        for (std::size_t t = 0; t < 6; ++t)
            REQUIRE(it[t] == 0);
    CHECK(run(tiled, 9) == run(gemm, 9));
}

TEST_CASE("ragged tiling clamps the last tile")
{
    auto gemm = gemm_nest(100, 1, 1);
    auto tiled = tile_gemm(gemm, {{0, 1, 2}, {32, 1, 1}, {32, 1, 1}});
    auto its = enumerate_iterations(tiled);
    CHECK(its.size() == 100);
    std::map<std::int64_t, int> rows_per_tile;
    for (const auto& it : its)
        ++rows_per_tile[it[0]];
    CHECK(rows_per_tile.size() == 4);
    CHECK(rows_per_tile[96] == 4);
    CHECK(rows_per_tile[0] == 32);
}

TEST_CASE("tiled variants preserve semantics")
{
    auto space = SearchSpace::uniform({2, 3, 5}, kAllOrders);
    for (auto [M, N, K] : {std::array<std::int64_t, 3>{5, 5, 5}, {8, 8, 8}, {7, 4, 6}}) {
        auto gemm = gemm_nest(M, N, K);
        auto reference = run(gemm, 11);
        for (const auto& v : generate_variants(gemm, space))
            REQUIRE(oracle::max_relative_error(run(v.nest, 11), reference) <= 1e-5);
    }
}

TEST_CASE("tiled nests: closed form equals the oracle on random tilings")
{
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::int64_t> ext(2, 8), tile(1, 9);
    std::uniform_int_distribution<std::size_t> ord(0, 5);
    for (int trial = 0; trial < 400; ++trial) {
        std::array<std::int64_t, 3> e{ext(rng), ext(rng), ext(rng)};
        VariantDescriptor raw{kAllOrders[ord(rng)], {tile(rng), tile(rng), tile(rng)},
                              {tile(rng), tile(rng), tile(rng)}};
        auto gemm = gemm_nest(e[0], e[1], e[2]);
        auto d = normalize(raw, e);
        auto nest = tile_gemm(gemm, d);
        for (const auto& dep : compute_dependences(nest)) {
            auto rec = working_set(nest, dep);
            if (!rec)
                continue;
            INFO(d.id(), " ", dep.array, " level ", dep.chain_level);
            REQUIRE(rec->ws_min == working_set_oracle(nest, dep.source_iteration, *dep.min_target));
            REQUIRE(rec->ws_max == working_set_oracle(nest, dep.source_iteration, *dep.max_target));
            REQUIRE(rec->ws_min <= rec->ws_max);
        }
    }
}

TEST_CASE("every reuse pair of a tiled nest belongs to exactly one relation")
{
    auto gemm = gemm_nest(5, 4, 3);
    auto nest = tile_gemm(gemm, normalize({{1, 0, 2}, {3, 2, 3}, {2, 1, 2}}, {5, 4, 3}));
    auto deps = compute_dependences(nest);
    auto its = enumerate_iterations(nest);
    auto s = analyze_structure(nest);
    auto chain = [&](const char* it) {
        for (std::size_t c = 0; c < s.chains.size(); ++c)
            if (s.chains[c].point_iterator == it)
                return c;
        FAIL("missing chain");
        return std::size_t{0};
    };
    const std::size_t ci = chain("i"), cj = chain("j"), ck = chain("k");
    for (const char* array : {"A", "B"}) {
        std::vector<const DependenceRelation*> rel;
        for (const auto& d : deps)
            if (d.array == array)
                rel.push_back(&d);
        for (std::size_t a = 0; a < its.size(); ++a)
            for (std::size_t b = a + 1; b < its.size(); ++b) {
                auto pa = point_of_iteration(s, its[a]);
                auto pb = point_of_iteration(s, its[b]);
                bool same = std::string(array) == "A" ? (pa[ci] == pb[ci] && pa[ck] == pb[ck])
                                                      : (pa[ck] == pb[ck] && pa[cj] == pb[cj]);
                int hits = 0;
                for (auto* r : rel)
                    hits += r->contains(nest, its[a], its[b]);
                REQUIRE(hits == (same ? 1 : 0));
                REQUIRE_FALSE(rel.front()->contains(nest, its[b], its[a]));
            }
    }
}

TEST_CASE("featurize: degenerate tiling matches the canonical analysis")
{
    auto gemm = gemm_nest(4, 4, 4);
    auto cache = CacheHierarchy::cascade_lake();
    VariantDescriptor d{{0, 1, 2}, {4, 4, 4}, {4, 4, 4}};
    auto canonical = classify(analyze_working_sets(gemm), cache);
    CHECK(featurize(d, gemm, cache) == canonical);
    std::int64_t total = 0;
    for (const auto& rec : analyze_working_sets(gemm))
        total += rec.ws_max;
    CHECK(canonical.max_slots.front() == total);
}

TEST_CASE("loop order changes the profile")
{
    auto gemm = gemm_nest(8, 8, 8);
    // A tiny hierarchy so that differences show in the slots.
    CacheHierarchy cache{{{"L1", 64 * 4}, {"L2", 256 * 4}}, 4};
    VariantDescriptor ijk{{0, 1, 2}, {4, 4, 4}, {2, 2, 2}};
    VariantDescriptor kji{{2, 1, 0}, {4, 4, 4}, {2, 2, 2}};

    auto check_against_oracle = [&](const VariantDescriptor& d) {
        auto nest = tile_gemm(gemm, d);
        std::int64_t total = 0;
        for (const auto& rec : analyze_working_sets(nest)) {
            const auto& dep = rec.dependence;
            CHECK(rec.ws_max == working_set_oracle(nest, dep.source_iteration, *dep.max_target));
            total += rec.ws_max;
        }
        return total;
    };
    CHECK(check_against_oracle(ijk) != check_against_oracle(kji));
    auto p1 = featurize(ijk, gemm, cache);
    auto p2 = featurize(kji, gemm, cache);
    CHECK(p1 != p2);
    for (const auto& p : {p1, p2}) {
        std::int64_t sum = 0;
        for (auto s : p.max_slots)
            sum += s;
        CHECK(sum > 0);
    }
}

TEST_CASE("parallel featurization equals the serial reference")
{
    auto gemm = gemm_nest(96, 80, 64);
    auto space = SearchSpace::uniform({16, 32, 64}, {{0, 1, 2}, {2, 0, 1}});
    std::vector<VariantDescriptor> ds;
    for (const auto& v : generate_variants(gemm, space))
        ds.push_back(v.descriptor);
    auto cache = CacheHierarchy::cascade_lake();
    CHECK(featurize_all(gemm, ds, cache, 4) == featurize_all_serial(gemm, ds, cache));
}

TEST_CASE("descriptor ids and orders")
{
    VariantDescriptor d{{1, 0, 2}, {64, 32, 128}, {32, 32, 64}};
    CHECK(d.id() == "jik/64x32x128/32x32x64");
    CHECK(parse_order("kij") == LoopOrder{2, 0, 1});
    CHECK_THROWS_AS(parse_order("iij"), Error);
    CHECK_THROWS_AS((VariantDescriptor{{0, 1, 2}, {8, 8, 8}, {16, 8, 8}}.validate()), Error);
}
