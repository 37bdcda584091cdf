#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "looptune/interpreter.hpp"
#include "looptune/loopnest.hpp"

namespace looptune {

enum class DependenceKind { RAR, RAW, WAR, WAW };

const char* to_string(DependenceKind kind) noexcept;

/// The loops that traverse one original dimension, outermost tile loop first
/// and the point loop (the one subscripts use) last.
struct DimensionChain {
    std::string point_iterator;
    std::vector<std::size_t> loops;
};

/// Shape of a (possibly tiled) rectangular nest as the analysis sees it.
///
/// A chain root has iterator-free bounds. Every other loop starts at its
/// parent's iterator and is clamped by `parent + parent.step` and by all of
/// its parent's upper bounds, which is exactly what rectangular tiling with
/// min() residues produces. Subscripts must be a single point iterator plus a
/// constant. Anything else is rejected with UnsupportedNest.
struct NestStructure {
    std::vector<DimensionChain> chains;
    std::vector<std::size_t> chain_of_loop;
    /// Per reference, per subscript: (chain, constant offset).
    std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> subscripts;
};

NestStructure analyze_structure(const LoopNest& nest);

/// Point coordinates (one per chain) of an iteration.
std::vector<std::int64_t> point_of_iteration(const NestStructure& s, const Iteration& it);

/// The unique iteration of the tiled nest that executes `point`.
Iteration iteration_of_point(const LoopNest& nest, const NestStructure& s,
                             std::span<const std::int64_t> point);

/// Reuse of one array along one dimension, carried by one loop of that
/// dimension's chain. Source and target touch the same element, agree on every
/// loop outside the carrying loop and the target's carrying-loop value is larger.
struct DependenceRelation {
    DependenceKind kind = DependenceKind::RAR;
    std::string array;
    std::size_t source_ref = 0;
    std::size_t target_ref = 0;
    ArrayRef source;
    ArrayRef target;
    std::size_t reuse_chain = 0;
    std::size_t chain_level = 0;
    std::size_t carrying_loop = 0;
    std::string description;

    /// Lexicographically first source and its first and last targets.
    Iteration source_iteration;
    std::optional<Iteration> min_target;
    std::optional<Iteration> max_target;

    bool empty() const noexcept { return !min_target.has_value(); }

    /// Membership test for one source/target instance pair.
    bool contains(const LoopNest& nest, const Iteration& src, const Iteration& tgt) const;
};

/// All reuse relations in nest order of references. Relations whose instance
/// set is empty (e.g. along a unit-extent loop) are kept and report empty().
std::vector<DependenceRelation> compute_dependences(const LoopNest& nest);

struct WorkingSetRecord {
    DependenceRelation dependence;
    std::int64_t ws_min = 0;
    std::int64_t ws_max = 0;
    std::vector<std::pair<std::string, std::int64_t>> breakdown_min;
    std::vector<std::pair<std::string, std::int64_t>> breakdown_max;
};

/// Distinct elements touched in the closed lexicographic interval [from, to],
/// counted without enumerating iterations: the interval splits into at most
/// 2*depth+1 boxes of the point space and each array's image is a union of
/// boxes whose volume is measured by sweeping.
std::int64_t distinct_elements(const LoopNest& nest, const Iteration& from, const Iteration& to,
                               std::vector<std::pair<std::string, std::int64_t>>* breakdown = nullptr);

/// Minimum and maximum working sets of a relation; nullopt for empty relations.
std::optional<WorkingSetRecord> working_set(const LoopNest& nest, const DependenceRelation& dep);

/// Ground truth: walks every iteration in [source, target] and counts distinct
/// (array, element) pairs.
std::int64_t working_set_oracle(const LoopNest& nest, const Iteration& source,
                                const Iteration& target, std::size_t cap = kDefaultEnumerationCap,
                                std::vector<std::pair<std::string, std::int64_t>>* breakdown = nullptr);

/// compute_dependences + working_set, skipping empty relations.
std::vector<WorkingSetRecord> analyze_working_sets(const LoopNest& nest);

struct CacheLevel {
    std::string name;
    std::int64_t capacity_bytes = 0;
};

struct CacheHierarchy {
    std::vector<CacheLevel> levels;
    std::int64_t element_size = 4;

    /// 32 KiB L1, 1 MiB L2, 39 MiB L3 (Xeon Platinum 8280).
    static CacheHierarchy cascade_lake();

    void validate() const;
};

/// Cumulative working sets per cache level plus a final memory slot.
/// `max_slots` is the classification by ws_max; `min_slots` applies the same
/// rule to ws_min. The ranker consumes both.
struct WorkingSetProfile {
    std::vector<std::int64_t> max_slots;
    std::vector<std::int64_t> min_slots;

    std::vector<double> features() const;
    friend bool operator==(const WorkingSetProfile&, const WorkingSetProfile&) = default;
};

/// Index of the first level whose capacity holds `elements`; levels.size() is memory.
std::size_t fastest_level(std::int64_t elements, const CacheHierarchy& cache);

WorkingSetProfile classify(std::span<const WorkingSetRecord> records, const CacheHierarchy& cache);

} // namespace looptune
