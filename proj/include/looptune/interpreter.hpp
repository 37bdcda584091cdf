#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "looptune/loopnest.hpp"

namespace looptune {

inline constexpr std::size_t kDefaultEnumerationCap = 10'000'000;

namespace detail {

struct CompiledAffine {
    std::vector<std::pair<std::size_t, std::int64_t>> terms; // iterator slot, coefficient
    std::int64_t constant = 0;

    std::int64_t eval(const std::int64_t* iters) const noexcept
    {
        std::int64_t v = constant;
        for (const auto& [slot, c] : terms)
            v += c * iters[slot];
        return v;
    }
};

struct CompiledLoop {
    CompiledAffine lower;
    std::vector<CompiledAffine> upper;
    std::int64_t step = 1;

    std::int64_t upper_at(const std::int64_t* iters) const noexcept;
};

struct CompiledRef {
    std::size_t array = 0;
    std::vector<CompiledAffine> indices;
};

/// Parameters folded into constants, iterators resolved to slots.
struct CompiledNest {
    std::vector<CompiledLoop> loops;
    std::vector<CompiledRef> refs;
    std::vector<std::string> array_names;
    std::vector<std::vector<std::int64_t>> array_shapes;

    explicit CompiledNest(const LoopNest& nest);

    /// Row-major flat offset, or -1 when any subscript is out of bounds.
    std::int64_t flat_offset(std::size_t ref, const std::int64_t* iters) const noexcept;
};

} // namespace detail

/// Walks the iteration space in lexicographic (execution) order.
class IterationCursor {
public:
    explicit IterationCursor(const LoopNest& nest);

    /// Positions at the first iteration; false when the space is empty.
    bool reset();
    /// Positions at `it`; false when `it` is not a member of the space.
    bool seek(const Iteration& it);
    /// Steps to the next iteration; false when past the last one.
    bool advance();

    const Iteration& current() const noexcept { return iters_; }
    const detail::CompiledNest& compiled() const noexcept { return compiled_; }

private:
    bool descend_from(std::size_t depth);

    detail::CompiledNest compiled_;
    Iteration iters_;
};

bool contains_iteration(const LoopNest& nest, const Iteration& it);

/// Every iteration in lexicographic order; throws EnumerationTooLarge past `cap`.
std::vector<Iteration> enumerate_iterations(const LoopNest& nest,
                                            std::size_t cap = kDefaultEnumerationCap);

std::uint64_t count_iterations(const LoopNest& nest, std::size_t cap = kDefaultEnumerationCap);

/// Dense row-major float32 storage keyed by array name.
using Buffers = std::map<std::string, std::vector<float>>;

Buffers make_buffers(const LoopNest& nest);

/// Reference execution in lexicographic order with float32 fused
/// multiply-accumulate, the same rounding as the generated kernels.
/// Throws AnalysisBug on an out-of-bounds subscript.
void interpret(const LoopNest& nest, Buffers& buffers);

} // namespace looptune
