#include "looptune/reuse.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_set>

namespace looptune {

const char* to_string(DependenceKind kind) noexcept
{
    switch (kind) {
    case DependenceKind::RAR: return "RAR";
    case DependenceKind::RAW: return "RAW";
    case DependenceKind::WAR: return "WAR";
    case DependenceKind::WAW: return "WAW";
    }
    return "?";
}

namespace {

[[noreturn]] void unsupported(const std::string& msg) { fail(ErrorCode::UnsupportedNest, msg); }

std::vector<std::string> sorted_strings(const std::vector<AffineExpr>& exprs)
{
    std::vector<std::string> out;
    for (const auto& e : exprs)
        out.push_back(e.to_string());
    std::sort(out.begin(), out.end());
    return out;
}

bool references_iterator(const AffineExpr& e, const LoopNest& nest)
{
    for (const auto& [name, coeff] : e.terms())
        if (nest.loop_index(name))
            return true;
    return false;
}

} // namespace

NestStructure analyze_structure(const LoopNest& nest)
{
    NestStructure s;
    const auto& loops = nest.loops();
    s.chain_of_loop.assign(loops.size(), 0);

    for (std::size_t d = 0; d < loops.size(); ++d) {
        const Loop& loop = loops[d];
        if (!references_iterator(loop.lower, nest)) {
            for (const auto& u : loop.upper)
                if (references_iterator(u, nest))
                    unsupported("loop '" + loop.iterator + "' has a parametric lower bound but an "
                                "iterator-dependent upper bound");
            s.chain_of_loop[d] = s.chains.size();
            s.chains.push_back({loop.iterator, {d}});
            continue;
        }
        auto parent_name = loop.lower.unit_variable();
        if (!parent_name || loop.lower.constant() != 0)
            unsupported("lower bound of loop '" + loop.iterator + "' is not a parent tile iterator");
        std::size_t parent = *nest.loop_index(*parent_name);
        DimensionChain& chain = s.chains[s.chain_of_loop[parent]];
        if (chain.loops.back() != parent)
            unsupported("tile iterator '" + *parent_name + "' has more than one child loop");

        std::vector<AffineExpr> expected = loops[parent].upper;
        expected.push_back(AffineExpr::var(*parent_name) + AffineExpr(loops[parent].step));
        if (sorted_strings(expected) != sorted_strings(loop.upper))
            unsupported("loop '" + loop.iterator + "' is not clamped to its parent tile");

        chain.loops.push_back(d);
        chain.point_iterator = loop.iterator;
        s.chain_of_loop[d] = s.chain_of_loop[parent];
    }

    for (const auto& chain : s.chains)
        if (loops[chain.loops.back()].step != 1)
            unsupported("point loop '" + chain.point_iterator + "' must have unit step");

    for (const auto& ref : nest.refs()) {
        std::vector<std::pair<std::size_t, std::int64_t>> subs;
        for (const auto& e : ref.indices) {
            auto name = e.unit_variable();
            std::optional<std::size_t> chain;
            if (name)
                for (std::size_t c = 0; c < s.chains.size(); ++c)
                    if (s.chains[c].point_iterator == *name)
                        chain = c;
            if (!chain)
                unsupported("subscript '" + e.to_string() + "' of array '" + ref.array +
                            "' is not a point iterator plus a constant");
            subs.emplace_back(*chain, e.constant());
        }
        s.subscripts.push_back(std::move(subs));
    }
    return s;
}

std::vector<std::int64_t> point_of_iteration(const NestStructure& s, const Iteration& it)
{
    std::vector<std::int64_t> p;
    for (const auto& chain : s.chains)
        p.push_back(it[chain.loops.back()]);
    return p;
}

Iteration iteration_of_point(const LoopNest& nest, const NestStructure& s,
                             std::span<const std::int64_t> point)
{
    if (point.size() != s.chains.size())
        fail(ErrorCode::InvalidArgument, "point has wrong dimensionality");
    detail::CompiledNest compiled(nest);
    Iteration it(nest.depth(), 0);
    for (std::size_t c = 0; c < s.chains.size(); ++c) {
        const auto& chain = s.chains[c];
        const auto& root = compiled.loops[chain.loops.front()];
        std::int64_t lo = root.lower.eval(it.data());
        if (point[c] < lo || point[c] >= root.upper_at(it.data()))
            fail(ErrorCode::InvalidArgument, "point lies outside the iteration space");
        std::int64_t base = lo;
        for (std::size_t d : chain.loops) {
            std::int64_t step = compiled.loops[d].step;
            it[d] = base + floor_div(point[c] - base, step) * step;
            base = it[d];
        }
    }
    return it;
}

bool DependenceRelation::contains(const LoopNest& nest, const Iteration& src,
                                  const Iteration& tgt) const
{
    if (empty() || !contains_iteration(nest, src) || !contains_iteration(nest, tgt))
        return false;
    NestStructure s = analyze_structure(nest);
    auto ps = point_of_iteration(s, src);
    auto pt = point_of_iteration(s, tgt);
    for (std::size_t c = 0; c < s.chains.size(); ++c)
        if (c != reuse_chain && ps[c] != pt[c])
            return false;
    const auto& chain = s.chains[reuse_chain].loops;
    for (std::size_t l = 0; l < chain_level; ++l)
        if (src[chain[l]] != tgt[chain[l]])
            return false;
    return tgt[chain[chain_level]] > src[chain[chain_level]];
}

std::vector<DependenceRelation> compute_dependences(const LoopNest& nest)
{
    NestStructure s = analyze_structure(nest);
    std::vector<DependenceRelation> out;

    IterationCursor cursor(nest);
    if (!cursor.reset())
        return out;
    const Iteration origin = cursor.current();
    const auto& compiled = cursor.compiled();
    const auto origin_point = point_of_iteration(s, origin);
    const auto& refs = nest.refs();

    std::vector<std::string> order;
    for (const auto& r : refs)
        if (std::find(order.begin(), order.end(), r.array) == order.end())
            order.push_back(r.array);

    for (const auto& array : order) {
        std::vector<std::size_t> members;
        for (std::size_t r = 0; r < refs.size(); ++r)
            if (refs[r].array == array)
                members.push_back(r);
        for (std::size_t r : members)
            if (s.subscripts[r] != s.subscripts[members.front()])
                unsupported("references to '" + array + "' have different subscripts");

        std::vector<bool> used(s.chains.size(), false);
        for (const auto& [chain, offset] : s.subscripts[members.front()])
            used[chain] = true;
        std::vector<std::size_t> free;
        for (std::size_t c = 0; c < s.chains.size(); ++c)
            if (!used[c])
                free.push_back(c);
        if (free.empty())
            continue;
        if (free.size() > 1)
            unsupported("array '" + array + "' is invariant in more than one dimension");
        const std::size_t f = free.front();
        const auto& chain = s.chains[f];

        for (std::size_t level = 0; level < chain.loops.size(); ++level) {
            const std::size_t depth = chain.loops[level];
            // Extent of the first enclosing tile of this level, in point coordinates.
            std::int64_t region_end;
            if (level == 0) {
                region_end = compiled.loops[depth].upper_at(origin.data());
            } else {
                std::size_t parent = chain.loops[level - 1];
                region_end = std::min(origin[parent] + compiled.loops[parent].step,
                                      compiled.loops[parent].upper_at(origin.data()));
            }
            const std::int64_t first = origin_point[f] + compiled.loops[depth].step;

            std::optional<Iteration> min_target, max_target;
            if (first < region_end) {
                auto p = origin_point;
                p[f] = first;
                min_target = iteration_of_point(nest, s, p);
                p[f] = region_end - 1;
                max_target = iteration_of_point(nest, s, p);
            }

            std::string desc;
            auto add = [&](const std::string& clause) {
                desc += desc.empty() ? clause : " and " + clause;
            };
            for (std::size_t c = 0; c < s.chains.size(); ++c) {
                if (c == f)
                    continue;
                const auto& pi = s.chains[c].point_iterator;
                add(pi + "' = " + pi);
            }
            for (std::size_t l = 0; l < level; ++l) {
                const auto& it = nest.loops()[chain.loops[l]].iterator;
                add(it + "' = " + it);
            }
            const Loop& carrier = nest.loops()[depth];
            if (chain.loops.size() == 1 && carrier.upper.size() == 1)
                add(carrier.iterator + " < " + carrier.iterator + "' < " +
                    carrier.upper.front().to_string());
            else
                add(carrier.iterator + " < " + carrier.iterator + "'");

            for (std::size_t src : members) {
                for (std::size_t tgt : members) {
                    for (DependenceKind kind : {DependenceKind::RAR, DependenceKind::RAW,
                                                DependenceKind::WAR, DependenceKind::WAW}) {
                        bool src_w = kind == DependenceKind::RAW || kind == DependenceKind::WAW;
                        bool tgt_w = kind == DependenceKind::WAR || kind == DependenceKind::WAW;
                        bool ok_src = src_w ? writes(refs[src].kind) : reads(refs[src].kind);
                        bool ok_tgt = tgt_w ? writes(refs[tgt].kind) : reads(refs[tgt].kind);
                        if (!ok_src || !ok_tgt)
                            continue;
                        DependenceRelation dep;
                        dep.kind = kind;
                        dep.array = array;
                        dep.source_ref = src;
                        dep.target_ref = tgt;
                        dep.source = refs[src];
                        dep.target = refs[tgt];
                        dep.reuse_chain = f;
                        dep.chain_level = level;
                        dep.carrying_loop = depth;
                        dep.description = desc;
                        dep.source_iteration = origin;
                        dep.min_target = min_target;
                        dep.max_target = max_target;
                        out.push_back(std::move(dep));
                    }
                }
            }
        }
    }
    return out;
}

namespace {

struct Interval {
    std::int64_t lo, hi; // half-open
};
using Box = std::vector<Interval>;

std::int64_t union_length(std::vector<Interval> v)
{
    std::sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.lo < b.lo; });
    std::int64_t total = 0, cur_lo = 0, cur_hi = 0;
    bool open = false;
    for (const auto& iv : v) {
        if (!open || iv.lo > cur_hi) {
            if (open)
                total += cur_hi - cur_lo;
            cur_lo = iv.lo;
            cur_hi = iv.hi;
            open = true;
        } else {
            cur_hi = std::max(cur_hi, iv.hi);
        }
    }
    if (open)
        total += cur_hi - cur_lo;
    return total;
}

/// Volume of a union of boxes by slab sweeping on successive axes.
std::int64_t union_volume(const std::vector<Box>& boxes, std::size_t axis = 0)
{
    if (boxes.empty())
        return 0;
    const std::size_t rank = boxes.front().size();
    if (axis + 1 == rank) {
        std::vector<Interval> v;
        for (const auto& b : boxes)
            v.push_back(b[axis]);
        return union_length(std::move(v));
    }
    std::vector<std::int64_t> cuts;
    for (const auto& b : boxes) {
        cuts.push_back(b[axis].lo);
        cuts.push_back(b[axis].hi);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::int64_t total = 0;
    std::vector<Box> slab;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
        slab.clear();
        for (const auto& b : boxes)
            if (b[axis].lo <= cuts[c] && b[axis].hi >= cuts[c + 1])
                slab.push_back(b);
        if (!slab.empty())
            total += (cuts[c + 1] - cuts[c]) * union_volume(slab, axis + 1);
    }
    return total;
}

/// Point-space boxes covering the lexicographic interval [from, to].
std::vector<Box> interval_boxes(const detail::CompiledNest& compiled, const NestStructure& s,
                                const Iteration& from, const Iteration& to)
{
    const std::size_t D = from.size();
    std::vector<Box> boxes;

    // Positions < r fixed to `prefix`, position r ranging over values [lo, hi),
    // deeper positions free. r == D means the single iteration `prefix`.
    auto piece = [&](const Iteration& prefix, std::size_t r, std::int64_t lo, std::int64_t hi) {
        if (r < D && lo >= hi)
            return;
        Box box;
        for (const auto& chain : s.chains) {
            std::optional<std::size_t> inner;
            for (std::size_t d : chain.loops)
                if (d <= r)
                    inner = d;
            if (!inner) {
                const auto& root = compiled.loops[chain.loops.front()];
                box.push_back({root.lower.eval(prefix.data()), root.upper_at(prefix.data())});
            } else if (*inner == r) {
                box.push_back({lo, hi});
            } else {
                const auto& loop = compiled.loops[*inner];
                std::int64_t v = prefix[*inner];
                box.push_back({v, std::min(v + loop.step, loop.upper_at(prefix.data()))});
            }
        }
        boxes.push_back(std::move(box));
    };

    std::size_t q = 0;
    while (q < D && from[q] == to[q])
        ++q;
    if (q == D) {
        piece(from, D, 0, 0);
        return boxes;
    }
    piece(from, D, 0, 0);
    piece(to, D, 0, 0);
    piece(from, q, from[q] + compiled.loops[q].step, to[q]);
    for (std::size_t r = q + 1; r < D; ++r) {
        const auto& loop = compiled.loops[r];
        piece(from, r, from[r] + loop.step, loop.upper_at(from.data()));
        piece(to, r, loop.lower.eval(to.data()), to[r]);
    }
    return boxes;
}

} // namespace

std::int64_t distinct_elements(const LoopNest& nest, const Iteration& from, const Iteration& to,
                               std::vector<std::pair<std::string, std::int64_t>>* breakdown)
{
    if (!contains_iteration(nest, from) || !contains_iteration(nest, to))
        fail(ErrorCode::InvalidArgument, "interval endpoints must be iterations of the nest");
    if (lex_less(to, from))
        fail(ErrorCode::InvalidArgument, "interval source must not follow its target");

    NestStructure s = analyze_structure(nest);
    detail::CompiledNest compiled(nest);
    const auto point_boxes = interval_boxes(compiled, s, from, to);

    std::int64_t total = 0;
    std::vector<std::string> seen;
    for (std::size_t r = 0; r < nest.refs().size(); ++r) {
        const std::string& array = nest.refs()[r].array;
        if (std::find(seen.begin(), seen.end(), array) != seen.end())
            continue;
        seen.push_back(array);
        std::set<std::vector<std::pair<std::int64_t, std::int64_t>>> unique;
        std::vector<Box> image;
        for (std::size_t r2 = r; r2 < nest.refs().size(); ++r2) {
            if (nest.refs()[r2].array != array)
                continue;
            for (const auto& pb : point_boxes) {
                Box b;
                std::vector<std::pair<std::int64_t, std::int64_t>> key;
                for (const auto& [chain, offset] : s.subscripts[r2]) {
                    b.push_back({pb[chain].lo + offset, pb[chain].hi + offset});
                    key.emplace_back(b.back().lo, b.back().hi);
                }
                if (unique.insert(key).second)
                    image.push_back(std::move(b));
            }
        }
        std::int64_t n = union_volume(image);
        if (breakdown)
            breakdown->emplace_back(array, n);
        total += n;
    }
    return total;
}

std::optional<WorkingSetRecord> working_set(const LoopNest& nest, const DependenceRelation& dep)
{
    if (dep.empty())
        return std::nullopt;
    WorkingSetRecord rec;
    rec.dependence = dep;
    rec.ws_min = distinct_elements(nest, dep.source_iteration, *dep.min_target, &rec.breakdown_min);
    rec.ws_max = distinct_elements(nest, dep.source_iteration, *dep.max_target, &rec.breakdown_max);
    return rec;
}

std::int64_t working_set_oracle(const LoopNest& nest, const Iteration& source,
                                const Iteration& target, std::size_t cap,
                                std::vector<std::pair<std::string, std::int64_t>>* breakdown)
{
    if (lex_less(target, source))
        fail(ErrorCode::InvalidArgument, "oracle source must not follow its target");
    IterationCursor cursor(nest);
    if (!contains_iteration(nest, target) || !cursor.seek(source))
        fail(ErrorCode::InvalidArgument, "oracle endpoints must be iterations of the nest");
    const auto& compiled = cursor.compiled();

    std::vector<std::unordered_set<std::int64_t>> touched(compiled.array_names.size());
    std::size_t steps = 0;
    for (;;) {
        if (steps++ == cap)
            fail(ErrorCode::EnumerationTooLarge, "oracle interval exceeds the enumeration cap");
        for (std::size_t r = 0; r < compiled.refs.size(); ++r) {
            std::int64_t off = compiled.flat_offset(r, cursor.current().data());
            if (off < 0)
                fail(ErrorCode::AnalysisBug, "out-of-bounds subscript during oracle walk");
            touched[compiled.refs[r].array].insert(off);
        }
        if (cursor.current() == target)
            break;
        if (!cursor.advance())
            fail(ErrorCode::AnalysisBug, "oracle walked past the end without meeting its target");
    }

    std::int64_t total = 0;
    for (std::size_t a = 0; a < touched.size(); ++a) {
        bool referenced = false;
        for (const auto& r : compiled.refs)
            referenced |= r.array == a;
        if (!referenced)
            continue;
        if (breakdown)
            breakdown->emplace_back(compiled.array_names[a], static_cast<std::int64_t>(touched[a].size()));
        total += static_cast<std::int64_t>(touched[a].size());
    }
    return total;
}

std::vector<WorkingSetRecord> analyze_working_sets(const LoopNest& nest)
{
    std::vector<WorkingSetRecord> out;
    // Relations of one array differing only in kind share their instances.
    std::map<std::pair<Iteration, Iteration>, WorkingSetRecord> memo;
    for (const auto& dep : compute_dependences(nest)) {
        if (dep.empty())
            continue;
        auto key = std::make_pair(*dep.min_target, *dep.max_target);
        auto it = memo.find(key);
        if (it == memo.end())
            it = memo.emplace(key, *working_set(nest, dep)).first;
        WorkingSetRecord rec = it->second;
        rec.dependence = dep;
        out.push_back(std::move(rec));
    }
    return out;
}

CacheHierarchy CacheHierarchy::cascade_lake()
{
    return CacheHierarchy{{{"L1", 32 * 1024}, {"L2", 1024 * 1024}, {"L3", 39 * 1024 * 1024}}, 4};
}

void CacheHierarchy::validate() const
{
    if (levels.empty())
        fail(ErrorCode::InvalidArgument, "cache hierarchy needs at least one level");
    if (element_size < 1)
        fail(ErrorCode::InvalidArgument, "element size must be positive");
    for (std::size_t l = 0; l < levels.size(); ++l) {
        if (levels[l].capacity_bytes < 1)
            fail(ErrorCode::InvalidArgument, "cache capacity must be positive");
        if (l > 0 && levels[l].capacity_bytes <= levels[l - 1].capacity_bytes)
            fail(ErrorCode::InvalidArgument, "cache capacities must increase strictly outward");
    }
}

std::vector<double> WorkingSetProfile::features() const
{
    std::vector<double> f;
    for (auto v : max_slots)
        f.push_back(static_cast<double>(v));
    for (auto v : min_slots)
        f.push_back(static_cast<double>(v));
    return f;
}

std::size_t fastest_level(std::int64_t elements, const CacheHierarchy& cache)
{
    const std::int64_t bytes = elements * cache.element_size;
    for (std::size_t l = 0; l < cache.levels.size(); ++l)
        if (bytes <= cache.levels[l].capacity_bytes)
            return l;
    return cache.levels.size();
}

WorkingSetProfile classify(std::span<const WorkingSetRecord> records, const CacheHierarchy& cache)
{
    cache.validate();
    WorkingSetProfile p;
    p.max_slots.assign(cache.levels.size() + 1, 0);
    p.min_slots.assign(cache.levels.size() + 1, 0);
    for (const auto& r : records) {
        p.max_slots[fastest_level(r.ws_max, cache)] += r.ws_max;
        p.min_slots[fastest_level(r.ws_min, cache)] += r.ws_min;
    }
    return p;
}

} // namespace looptune
