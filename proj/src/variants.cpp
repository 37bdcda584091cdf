#include "looptune/variants.hpp"

#include <algorithm>
#include <set>

#include "looptune/parallel.hpp"

namespace looptune {

namespace {

constexpr const char* kDimNames[3] = {"i", "j", "k"};
constexpr const char* kExtentNames[3] = {"M", "N", "K"};

void require_gemm(const LoopNest& gemm)
{
    if (!is_gemm_form(gemm))
        fail(ErrorCode::InvalidArgument, "variant generation expects the canonical GEMM nest");
}

} // namespace

std::string order_name(const LoopOrder& order)
{
    std::string s;
    for (int d : order)
        s += kDimNames[d];
    return s;
}

LoopOrder parse_order(const std::string& name)
{
    LoopOrder order{};
    std::set<int> seen;
    if (name.size() != 3)
        fail(ErrorCode::InvalidArgument, "loop order must name three dimensions: '" + name + "'");
    for (std::size_t p = 0; p < 3; ++p) {
        int d = name[p] == 'i' ? 0 : name[p] == 'j' ? 1 : name[p] == 'k' ? 2 : -1;
        if (d < 0 || !seen.insert(d).second)
            fail(ErrorCode::InvalidArgument, "invalid loop order '" + name + "'");
        order[p] = d;
    }
    return order;
}

std::string VariantDescriptor::id() const
{
    auto triple = [](const std::array<std::int64_t, 3>& t) {
        return std::to_string(t[0]) + "x" + std::to_string(t[1]) + "x" + std::to_string(t[2]);
    };
    return order_name(order) + "/" + triple(level1) + "/" + triple(level2);
}

void VariantDescriptor::validate() const
{
    std::array<int, 3> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != std::array<int, 3>{0, 1, 2})
        fail(ErrorCode::InvalidArgument, "tile loop order is not a permutation");
    for (int d = 0; d < 3; ++d) {
        if (level1[d] < 1 || level2[d] < 1)
            fail(ErrorCode::InvalidArgument, "tile sizes must be positive");
        if (level2[d] > level1[d])
            fail(ErrorCode::InvalidArgument, "level-2 tile exceeds its level-1 tile in " + id());
    }
}

SearchSpace SearchSpace::defaults()
{
    return uniform({16, 32, 64, 128, 256},
                   {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}});
}

SearchSpace SearchSpace::uniform(const std::vector<std::int64_t>& tiles, std::vector<LoopOrder> orders)
{
    SearchSpace s;
    for (int d = 0; d < 3; ++d) {
        s.level1[d] = tiles;
        s.level2[d] = tiles;
    }
    s.orders = std::move(orders);
    return s;
}

void SearchSpace::validate() const
{
    if (orders.empty())
        fail(ErrorCode::InvalidArgument, "search space has no loop orders");
    for (int d = 0; d < 3; ++d) {
        if (level1[d].empty() || level2[d].empty())
            fail(ErrorCode::InvalidArgument, "search space has an empty tile list");
        for (auto t : level1[d])
            if (t < 1)
                fail(ErrorCode::InvalidArgument, "tile candidates must be positive");
        for (auto t : level2[d])
            if (t < 1)
                fail(ErrorCode::InvalidArgument, "tile candidates must be positive");
    }
    for (const auto& o : orders)
        VariantDescriptor{o, {1, 1, 1}, {1, 1, 1}}.validate();
}

std::vector<VariantDescriptor> enumerate_descriptors(const SearchSpace& space)
{
    space.validate();
    std::vector<VariantDescriptor> out;
    for (const auto& order : space.orders)
        for (auto ti1 : space.level1[0])
            for (auto tj1 : space.level1[1])
                for (auto tk1 : space.level1[2])
                    for (auto ti2 : space.level2[0])
                        for (auto tj2 : space.level2[1])
                            for (auto tk2 : space.level2[2])
                                out.push_back({order, {ti1, tj1, tk1}, {ti2, tj2, tk2}});
    return out;
}

VariantDescriptor normalize(const VariantDescriptor& d, const std::array<std::int64_t, 3>& extents)
{
    VariantDescriptor n = d;
    for (int x = 0; x < 3; ++x) {
        n.level1[x] = std::min(d.level1[x], extents[x]);
        n.level2[x] = std::min(d.level2[x], n.level1[x]);
    }
    n.validate();
    return n;
}

std::array<std::int64_t, 3> gemm_extents(const LoopNest& gemm)
{
    require_gemm(gemm);
    return {*gemm.parameter("M"), *gemm.parameter("N"), *gemm.parameter("K")};
}

LoopNest tile_gemm(const LoopNest& gemm, const VariantDescriptor& d)
{
    require_gemm(gemm);
    d.validate();

    std::array<Loop, 3> outer, inner, point;
    for (int x = 0; x < 3; ++x) {
        const std::string t1 = std::string(kDimNames[x]) + "t1";
        const std::string t2 = std::string(kDimNames[x]) + "t2";
        const AffineExpr extent = AffineExpr::var(kExtentNames[x]);
        const AffineExpr end1 = AffineExpr::var(t1) + AffineExpr(d.level1[x]);
        const AffineExpr end2 = AffineExpr::var(t2) + AffineExpr(d.level2[x]);
        outer[x] = Loop{t1, 0, {extent}, d.level1[x]};
        inner[x] = Loop{t2, AffineExpr::var(t1), {extent, end1}, d.level2[x]};
        point[x] = Loop{kDimNames[x], AffineExpr::var(t2), {extent, end1, end2}, 1};
    }
    std::vector<Loop> loops;
    for (int x : d.order)
        loops.push_back(outer[x]);
    for (int x : d.order)
        loops.push_back(inner[x]);
    for (int x = 0; x < 3; ++x)
        loops.push_back(point[x]);
    return LoopNest(std::move(loops), gemm.arrays(), gemm.refs(), gemm.parameters(), gemm.op());
}

std::vector<Variant> generate_variants(const LoopNest& gemm, const SearchSpace& space)
{
    const auto extents = gemm_extents(gemm);
    std::vector<Variant> out;
    std::set<VariantDescriptor> seen;
    for (const auto& raw : enumerate_descriptors(space)) {
        VariantDescriptor d = normalize(raw, extents);
        if (seen.insert(d).second)
            out.push_back({d, tile_gemm(gemm, d)});
    }
    return out;
}

WorkingSetProfile featurize(const VariantDescriptor& d, const LoopNest& gemm, const CacheHierarchy& cache)
{
    LoopNest tiled = tile_gemm(gemm, d);
    auto records = analyze_working_sets(tiled);
    return classify(records, cache);
}

std::vector<WorkingSetProfile> featurize_all(const LoopNest& gemm,
                                             std::span<const VariantDescriptor> variants,
                                             const CacheHierarchy& cache, int workers)
{
    std::vector<WorkingSetProfile> out(variants.size());
    parallel_for(0, static_cast<std::int64_t>(variants.size()), workers,
                 [&](std::int64_t v) { out[v] = featurize(variants[v], gemm, cache); });
    return out;
}

std::vector<WorkingSetProfile> featurize_all_serial(const LoopNest& gemm,
                                                    std::span<const VariantDescriptor> variants,
                                                    const CacheHierarchy& cache)
{
    std::vector<WorkingSetProfile> out;
    out.reserve(variants.size());
    for (const auto& d : variants)
        out.push_back(featurize(d, gemm, cache));
    return out;
}

} // namespace looptune
