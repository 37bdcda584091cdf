#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "looptune/loopnest.hpp"
#include "looptune/reuse.hpp"

namespace looptune {

/// Integer polynomial in which every variable has degree at most one.
struct Polynomial {
    std::vector<std::string> variables;
    /// Monomial as a subset mask over `variables` -> coefficient (non-zero only).
    std::map<unsigned, std::int64_t> terms;

    std::int64_t evaluate(std::span<const std::int64_t> values) const;
    std::int64_t coefficient(std::initializer_list<std::string> monomial) const;

    /// Compact form, highest degree first: "NK+N+1", "2K+3".
    std::string to_string() const;

    friend bool operator==(const Polynomial&, const Polynomial&) = default;
};

/// Recovers a multilinear polynomial from point evaluations on the cube
/// {base, base+1}^n by Mobius inversion, then checks it on further points.
/// Returns nullopt when `f` is not multilinear on the probed region.
std::optional<Polynomial> fit_multilinear(
    const std::vector<std::string>& variables,
    const std::function<std::optional<std::int64_t>(std::span<const std::int64_t>)>& f,
    std::int64_t base = 6);

enum class WorkingSetBound { Min, Max };

/// Working-set size of `dep` as a polynomial in the nest parameters, obtained by
/// re-running the analysis with rebound parameters. Only meaningful for nests
/// whose tiles do not depend on parameter values (e.g. untiled nests).
std::optional<Polynomial> symbolic_working_set(const LoopNest& nest, const DependenceRelation& dep,
                                               WorkingSetBound bound);

} // namespace looptune
