#include "looptune/interpreter.hpp"

#include <cmath>

namespace looptune {
namespace detail {

namespace {

CompiledAffine compile(const AffineExpr& e, const LoopNest& nest)
{
    CompiledAffine out;
    out.constant = e.constant();
    for (const auto& [name, coeff] : e.terms()) {
        if (auto slot = nest.loop_index(name))
            out.terms.emplace_back(*slot, coeff);
        else if (auto p = nest.parameter(name))
            out.constant += coeff * *p;
        else
            fail(ErrorCode::InvalidArgument, "unbound variable '" + name + "'");
    }
    return out;
}

} // namespace

std::int64_t CompiledLoop::upper_at(const std::int64_t* iters) const noexcept
{
    std::int64_t u = upper.front().eval(iters);
    for (std::size_t b = 1; b < upper.size(); ++b)
        u = std::min(u, upper[b].eval(iters));
    return u;
}

CompiledNest::CompiledNest(const LoopNest& nest)
{
    for (const auto& loop : nest.loops()) {
        CompiledLoop cl;
        cl.lower = compile(loop.lower, nest);
        for (const auto& u : loop.upper)
            cl.upper.push_back(compile(u, nest));
        cl.step = loop.step;
        loops.push_back(std::move(cl));
    }
    for (const auto& a : nest.arrays()) {
        array_names.push_back(a.name);
        array_shapes.push_back(nest.array_shape(a.name));
    }
    for (const auto& r : nest.refs()) {
        CompiledRef cr;
        for (std::size_t a = 0; a < array_names.size(); ++a)
            if (array_names[a] == r.array)
                cr.array = a;
        for (const auto& e : r.indices)
            cr.indices.push_back(compile(e, nest));
        refs.push_back(std::move(cr));
    }
}

std::int64_t CompiledNest::flat_offset(std::size_t ref, const std::int64_t* iters) const noexcept
{
    const auto& r = refs[ref];
    const auto& shape = array_shapes[r.array];
    std::int64_t offset = 0;
    for (std::size_t d = 0; d < r.indices.size(); ++d) {
        std::int64_t idx = r.indices[d].eval(iters);
        if (idx < 0 || idx >= shape[d])
            return -1;
        offset = offset * shape[d] + idx;
    }
    return offset;
}

} // namespace detail

IterationCursor::IterationCursor(const LoopNest& nest)
    : compiled_(nest), iters_(nest.depth(), 0)
{
}

bool IterationCursor::descend_from(std::size_t depth)
{
    // Loops [0, depth) hold valid values; fill the rest with first values,
    // carrying outward past empty ranges.
    const auto& loops = compiled_.loops;
    const std::size_t D = loops.size();
    std::size_t e = depth;
    for (;;) {
        while (e < D) {
            iters_[e] = loops[e].lower.eval(iters_.data());
            if (iters_[e] >= loops[e].upper_at(iters_.data()))
                break;
            ++e;
        }
        if (e == D)
            return true;
        // Loop e is empty under the current prefix; bump the nearest outer loop.
        for (;;) {
            if (e == 0)
                return false;
            --e;
            iters_[e] += loops[e].step;
            if (iters_[e] < loops[e].upper_at(iters_.data()))
                break;
        }
        ++e;
    }
}

bool IterationCursor::reset() { return descend_from(0); }

bool IterationCursor::advance()
{
    const auto& loops = compiled_.loops;
    std::size_t d = loops.size();
    while (d > 0) {
        --d;
        iters_[d] += loops[d].step;
        if (iters_[d] < loops[d].upper_at(iters_.data()))
            return descend_from(d + 1);
    }
    return false;
}

bool IterationCursor::seek(const Iteration& it)
{
    const auto& loops = compiled_.loops;
    if (it.size() != loops.size())
        return false;
    for (std::size_t d = 0; d < loops.size(); ++d) {
        std::int64_t lo = loops[d].lower.eval(it.data());
        if (it[d] < lo || it[d] >= loops[d].upper_at(it.data()) || (it[d] - lo) % loops[d].step != 0)
            return false;
    }
    iters_ = it;
    return true;
}

bool contains_iteration(const LoopNest& nest, const Iteration& it)
{
    IterationCursor cursor(nest);
    return cursor.seek(it);
}

std::vector<Iteration> enumerate_iterations(const LoopNest& nest, std::size_t cap)
{
    std::vector<Iteration> out;
    IterationCursor cursor(nest);
    if (!cursor.reset())
        return out;
    do {
        if (out.size() == cap)
            fail(ErrorCode::EnumerationTooLarge,
                 "iteration space exceeds the enumeration cap of " + std::to_string(cap));
        out.push_back(cursor.current());
    } while (cursor.advance());
    return out;
}

std::uint64_t count_iterations(const LoopNest& nest, std::size_t cap)
{
    std::uint64_t n = 0;
    IterationCursor cursor(nest);
    if (!cursor.reset())
        return 0;
    do {
        if (n == cap)
            fail(ErrorCode::EnumerationTooLarge,
                 "iteration space exceeds the enumeration cap of " + std::to_string(cap));
        ++n;
    } while (cursor.advance());
    return n;
}

Buffers make_buffers(const LoopNest& nest)
{
    Buffers out;
    for (const auto& a : nest.arrays()) {
        std::int64_t n = 1;
        for (auto e : nest.array_shape(a.name))
            n *= e;
        out[a.name].assign(static_cast<std::size_t>(n), 0.0f);
    }
    return out;
}

void interpret(const LoopNest& nest, Buffers& buffers)
{
    IterationCursor cursor(nest);
    const auto& compiled = cursor.compiled();

    std::vector<float*> base(compiled.array_names.size());
    for (std::size_t a = 0; a < base.size(); ++a) {
        auto it = buffers.find(compiled.array_names[a]);
        std::int64_t n = 1;
        for (auto e : compiled.array_shapes[a])
            n *= e;
        if (it == buffers.end() || static_cast<std::int64_t>(it->second.size()) != n)
            fail(ErrorCode::InvalidArgument,
                 "buffer for array '" + compiled.array_names[a] + "' is missing or mis-sized");
        base[a] = it->second.data();
    }

    std::size_t acc_ref = 0;
    std::vector<std::size_t> inputs;
    for (std::size_t r = 0; r < nest.refs().size(); ++r) {
        if (nest.refs()[r].kind == AccessKind::ReadWrite)
            acc_ref = r;
        else
            inputs.push_back(r);
    }

    if (!cursor.reset())
        return;
    do {
        const std::int64_t* it = cursor.current().data();
        auto element = [&](std::size_t ref) -> float& {
            std::int64_t off = compiled.flat_offset(ref, it);
            if (off < 0)
                fail(ErrorCode::AnalysisBug, "out-of-bounds subscript for array '" +
                                                 nest.refs()[ref].array + "'");
            return base[compiled.refs[ref].array][off];
        };
        float& acc = element(acc_ref);
        if (inputs.size() == 1) {
            acc = acc + element(inputs[0]);
        } else {
            float product = element(inputs[0]);
            for (std::size_t r = 1; r + 1 < inputs.size(); ++r)
                product = product * element(inputs[r]);
            acc = std::fma(product, element(inputs.back()), acc);
        }
    } while (cursor.advance());
}

} // namespace looptune
