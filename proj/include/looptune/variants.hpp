#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "looptune/loopnest.hpp"
#include "looptune/reuse.hpp"

namespace looptune {

using LoopOrder = std::array<int, 3>; // dimension indices 0=i, 1=j, 2=k, outermost first

/// One two-level tiling of GEMM: the order of the tile loops (both levels use
/// it) and six tile sizes. Point loops always run i, j, k.
struct VariantDescriptor {
    LoopOrder order{0, 1, 2};
    std::array<std::int64_t, 3> level1{};
    std::array<std::int64_t, 3> level2{};

    /// e.g. "jik/64x32x128/32x32x64".
    std::string id() const;
    void validate() const;

    friend auto operator<=>(const VariantDescriptor&, const VariantDescriptor&) = default;
};

std::string order_name(const LoopOrder& order);
LoopOrder parse_order(const std::string& name);

struct SearchSpace {
    std::array<std::vector<std::int64_t>, 3> level1;
    std::array<std::vector<std::int64_t>, 3> level2;
    std::vector<LoopOrder> orders;

    /// Tiles {16, 32, 64, 128, 256} for every dimension and level, all six orders.
    static SearchSpace defaults();
    /// Same candidate list for every dimension and level.
    static SearchSpace uniform(const std::vector<std::int64_t>& tiles, std::vector<LoopOrder> orders);

    void validate() const;
};

struct Variant {
    VariantDescriptor descriptor;
    LoopNest nest;
};

/// Raw cross product of the space, before validity filtering.
std::vector<VariantDescriptor> enumerate_descriptors(const SearchSpace& space);

/// Clamps tiles to the extents and level-2 tiles to level-1 tiles, so two
/// descriptors normalize equal exactly when they induce the same nest.
VariantDescriptor normalize(const VariantDescriptor& d, const std::array<std::int64_t, 3>& extents);

/// Two-level tiled GEMM: 6 tile loops (min-clamped) followed by the point loops.
LoopNest tile_gemm(const LoopNest& gemm, const VariantDescriptor& d);

std::array<std::int64_t, 3> gemm_extents(const LoopNest& gemm);

/// Normalized, de-duplicated variants in enumeration order.
std::vector<Variant> generate_variants(const LoopNest& gemm, const SearchSpace& space);

/// Working-set profile of the tiled nest; the ranker's feature vector.
WorkingSetProfile featurize(const VariantDescriptor& d, const LoopNest& gemm, const CacheHierarchy& cache);

/// Parallel over variants (OpenMP); results are in input order.
std::vector<WorkingSetProfile> featurize_all(const LoopNest& gemm,
                                             std::span<const VariantDescriptor> variants,
                                             const CacheHierarchy& cache, int workers = 0);

/// Serial reference for featurize_all.
std::vector<WorkingSetProfile> featurize_all_serial(const LoopNest& gemm,
                                                    std::span<const VariantDescriptor> variants,
                                                    const CacheHierarchy& cache);

} // namespace looptune
