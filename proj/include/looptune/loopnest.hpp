#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "looptune/affine.hpp"

namespace looptune {

/// One loop of a perfectly nested affine nest. The upper bound is exclusive
/// and is the minimum over `upper`; more than one entry only appears for
/// clamped tile residues such as min(it + 32, M).
struct Loop {
    std::string iterator;
    AffineExpr lower;
    std::vector<AffineExpr> upper;
    std::int64_t step = 1;
};

enum class AccessKind { Read, Write, ReadWrite };

inline bool reads(AccessKind k) noexcept { return k != AccessKind::Write; }
inline bool writes(AccessKind k) noexcept { return k != AccessKind::Read; }

struct ArrayRef {
    std::string array;
    AccessKind kind = AccessKind::Read;
    std::vector<AffineExpr> indices;
};

struct ArrayDecl {
    std::string name;
    std::vector<AffineExpr> extents;
};

struct Parameter {
    std::string name;
    std::int64_t value = 0;
};

/// The statement accumulates the product of its read-only references into
/// the single read-write reference.
enum class StatementOp { MultiplyAccumulate };

using Iteration = std::vector<std::int64_t>;

/// Immutable after construction; the constructor rejects ill-formed nests.
class LoopNest {
public:
    LoopNest(std::vector<Loop> loops, std::vector<ArrayDecl> arrays, std::vector<ArrayRef> refs,
             std::vector<Parameter> parameters,
             StatementOp op = StatementOp::MultiplyAccumulate);

    const std::vector<Loop>& loops() const noexcept { return loops_; }
    const std::vector<ArrayDecl>& arrays() const noexcept { return arrays_; }
    const std::vector<ArrayRef>& refs() const noexcept { return refs_; }
    const std::vector<Parameter>& parameters() const noexcept { return parameters_; }
    StatementOp op() const noexcept { return op_; }
    std::size_t depth() const noexcept { return loops_.size(); }

    std::optional<std::int64_t> parameter(const std::string& name) const;
    std::optional<std::size_t> loop_index(const std::string& iterator) const;
    const ArrayDecl& array(const std::string& name) const;
    std::vector<std::int64_t> array_shape(const std::string& name) const;

    /// Total number of declared array elements.
    std::int64_t footprint() const;

    /// Same nest with parameters rebound; the names must match.
    LoopNest with_parameters(const std::vector<Parameter>& parameters) const;

    /// Evaluates an expression that may only mention parameters.
    std::int64_t evaluate_parametric(const AffineExpr& e) const;

private:
    void validate() const;

    std::vector<Loop> loops_;
    std::vector<ArrayDecl> arrays_;
    std::vector<ArrayRef> refs_;
    std::vector<Parameter> parameters_;
    StatementOp op_;
};

/// Canonical i/j/k nest for C[i][j] += A[i][k] * B[k][j].
LoopNest gemm_nest(std::int64_t M, std::int64_t N, std::int64_t K);

/// True for the 3-loop rectangular GEMM form produced by gemm_nest, in any loop order.
bool is_gemm_form(const LoopNest& nest);

/// Reorders loops; `order[d]` is the index of the loop placed at depth d.
/// Fails when a bound would reference an iterator that is no longer outer.
LoopNest permute_loops(const LoopNest& nest, std::span<const std::size_t> order);

bool lex_less(std::span<const std::int64_t> a, std::span<const std::int64_t> b) noexcept;

} // namespace looptune
