#include "looptune/loopnest.hpp"

#include <algorithm>
#include <set>

namespace looptune {

LoopNest::LoopNest(std::vector<Loop> loops, std::vector<ArrayDecl> arrays,
                   std::vector<ArrayRef> refs, std::vector<Parameter> parameters, StatementOp op)
    : loops_(std::move(loops)),
      arrays_(std::move(arrays)),
      refs_(std::move(refs)),
      parameters_(std::move(parameters)),
      op_(op)
{
    validate();
}

void LoopNest::validate() const
{
    auto invalid = [](const std::string& msg) { fail(ErrorCode::InvalidArgument, msg); };

    if (loops_.empty())
        invalid("loop nest has no loops");

    std::set<std::string> params;
    for (const auto& p : parameters_) {
        if (!params.insert(p.name).second)
            invalid("duplicate parameter '" + p.name + "'");
        if (p.value < 1)
            invalid("parameter '" + p.name + "' must be positive");
    }

    std::set<std::string> outer;
    for (const auto& loop : loops_) {
        if (params.count(loop.iterator) || outer.count(loop.iterator))
            invalid("iterator '" + loop.iterator + "' is not unique");
        if (loop.step < 1)
            invalid("loop '" + loop.iterator + "' has step < 1");
        if (loop.upper.empty())
            invalid("loop '" + loop.iterator + "' has no upper bound");
        auto check = [&](const AffineExpr& e) {
            for (const auto& [name, coeff] : e.terms())
                if (!params.count(name) && !outer.count(name))
                    invalid("bound of loop '" + loop.iterator + "' references '" + name +
                            "', which is neither a parameter nor an outer iterator");
        };
        check(loop.lower);
        for (const auto& u : loop.upper)
            check(u);
        outer.insert(loop.iterator);
    }

    std::set<std::string> array_names;
    for (const auto& a : arrays_) {
        if (!array_names.insert(a.name).second)
            invalid("duplicate array '" + a.name + "'");
        if (a.extents.empty())
            invalid("array '" + a.name + "' has rank 0");
        for (const auto& e : a.extents) {
            for (const auto& [name, coeff] : e.terms())
                if (!params.count(name))
                    invalid("extent of array '" + a.name + "' references unbound '" + name + "'");
            if (evaluate_parametric(e) < 1)
                invalid("array '" + a.name + "' has a non-positive extent");
        }
    }

    std::size_t accumulators = 0, inputs = 0;
    for (const auto& r : refs_) {
        if (!array_names.count(r.array))
            invalid("reference to undeclared array '" + r.array + "'");
        if (r.indices.size() != array(r.array).extents.size())
            invalid("reference to '" + r.array + "' has wrong subscript count");
        for (const auto& e : r.indices)
            for (const auto& [name, coeff] : e.terms())
                if (!params.count(name) && !outer.count(name))
                    invalid("subscript of '" + r.array + "' references unknown '" + name + "'");
        if (r.kind == AccessKind::ReadWrite)
            ++accumulators;
        else if (r.kind == AccessKind::Read)
            ++inputs;
        else
            invalid("multiply-accumulate statement cannot have a write-only reference");
    }
    if (op_ == StatementOp::MultiplyAccumulate && (accumulators != 1 || inputs == 0))
        invalid("multiply-accumulate needs one read-write reference and at least one read");
}

std::optional<std::int64_t> LoopNest::parameter(const std::string& name) const
{
    for (const auto& p : parameters_)
        if (p.name == name)
            return p.value;
    return std::nullopt;
}

std::optional<std::size_t> LoopNest::loop_index(const std::string& iterator) const
{
    for (std::size_t d = 0; d < loops_.size(); ++d)
        if (loops_[d].iterator == iterator)
            return d;
    return std::nullopt;
}

const ArrayDecl& LoopNest::array(const std::string& name) const
{
    for (const auto& a : arrays_)
        if (a.name == name)
            return a;
    fail(ErrorCode::InvalidArgument, "unknown array '" + name + "'");
}

std::int64_t LoopNest::evaluate_parametric(const AffineExpr& e) const
{
    return e.evaluate([this](const std::string& n) { return parameter(n); });
}

std::vector<std::int64_t> LoopNest::array_shape(const std::string& name) const
{
    std::vector<std::int64_t> shape;
    for (const auto& e : array(name).extents)
        shape.push_back(evaluate_parametric(e));
    return shape;
}

std::int64_t LoopNest::footprint() const
{
    std::int64_t total = 0;
    for (const auto& a : arrays_) {
        std::int64_t n = 1;
        for (auto e : array_shape(a.name))
            n *= e;
        total += n;
    }
    return total;
}

LoopNest LoopNest::with_parameters(const std::vector<Parameter>& parameters) const
{
    if (parameters.size() != parameters_.size())
        fail(ErrorCode::InvalidArgument, "parameter rebinding must cover the same names");
    for (std::size_t p = 0; p < parameters.size(); ++p)
        if (parameters[p].name != parameters_[p].name)
            fail(ErrorCode::InvalidArgument, "parameter rebinding must keep declaration order");
    return LoopNest(loops_, arrays_, refs_, parameters, op_);
}

LoopNest gemm_nest(std::int64_t M, std::int64_t N, std::int64_t K)
{
    if (M < 1 || N < 1 || K < 1)
        fail(ErrorCode::InvalidArgument, "GEMM dimensions must be positive");
    auto v = [](const char* n) { return AffineExpr::var(n); };
    std::vector<Loop> loops{
        {"i", 0, {v("M")}, 1},
        {"j", 0, {v("N")}, 1},
        {"k", 0, {v("K")}, 1},
    };
    std::vector<ArrayDecl> arrays{
        {"C", {v("M"), v("N")}},
        {"A", {v("M"), v("K")}},
        {"B", {v("K"), v("N")}},
    };
    std::vector<ArrayRef> refs{
        {"C", AccessKind::ReadWrite, {v("i"), v("j")}},
        {"A", AccessKind::Read, {v("i"), v("k")}},
        {"B", AccessKind::Read, {v("k"), v("j")}},
    };
    return LoopNest(std::move(loops), std::move(arrays), std::move(refs),
                    {{"M", M}, {"N", N}, {"K", K}});
}

bool is_gemm_form(const LoopNest& nest)
{
    if (nest.depth() != 3 || nest.refs().size() != 3)
        return false;
    const std::map<std::string, std::string> extent_of{{"i", "M"}, {"j", "N"}, {"k", "K"}};
    for (const auto& loop : nest.loops()) {
        auto it = extent_of.find(loop.iterator);
        if (it == extent_of.end() || loop.step != 1 || !loop.lower.is_constant() ||
            loop.lower.constant() != 0 || loop.upper.size() != 1 ||
            loop.upper[0] != AffineExpr::var(it->second))
            return false;
    }
    auto ref_is = [&](const ArrayRef& r, const char* name, AccessKind kind, const char* a,
                      const char* b) {
        return r.array == name && r.kind == kind && r.indices.size() == 2 &&
               r.indices[0] == AffineExpr::var(a) && r.indices[1] == AffineExpr::var(b);
    };
    const auto& refs = nest.refs();
    return ref_is(refs[0], "C", AccessKind::ReadWrite, "i", "j") &&
           ref_is(refs[1], "A", AccessKind::Read, "i", "k") &&
           ref_is(refs[2], "B", AccessKind::Read, "k", "j");
}

LoopNest permute_loops(const LoopNest& nest, std::span<const std::size_t> order)
{
    if (order.size() != nest.depth())
        fail(ErrorCode::InvalidArgument, "permutation length differs from nest depth");
    std::vector<bool> seen(order.size(), false);
    std::vector<Loop> loops;
    for (std::size_t d : order) {
        if (d >= order.size() || seen[d])
            fail(ErrorCode::InvalidArgument, "loop order is not a permutation");
        seen[d] = true;
        loops.push_back(nest.loops()[d]);
    }
    return LoopNest(std::move(loops), nest.arrays(), nest.refs(), nest.parameters(), nest.op());
}

bool lex_less(std::span<const std::int64_t> a, std::span<const std::int64_t> b) noexcept
{
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

} // namespace looptune
