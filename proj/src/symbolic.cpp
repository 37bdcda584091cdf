#include "looptune/symbolic.hpp"

#include <algorithm>
#include <bit>

namespace looptune {

std::int64_t Polynomial::evaluate(std::span<const std::int64_t> values) const
{
    if (values.size() != variables.size())
        fail(ErrorCode::InvalidArgument, "polynomial evaluated with wrong arity");
    std::int64_t total = 0;
    for (const auto& [mask, coeff] : terms) {
        std::int64_t m = coeff;
        for (std::size_t v = 0; v < variables.size(); ++v)
            if (mask & (1u << v))
                m *= values[v];
        total += m;
    }
    return total;
}

std::int64_t Polynomial::coefficient(std::initializer_list<std::string> monomial) const
{
    unsigned mask = 0;
    for (const auto& name : monomial) {
        auto it = std::find(variables.begin(), variables.end(), name);
        if (it == variables.end())
            return 0;
        mask |= 1u << (it - variables.begin());
    }
    auto it = terms.find(mask);
    return it == terms.end() ? 0 : it->second;
}

std::string Polynomial::to_string() const
{
    if (terms.empty())
        return "0";
    bool short_names = std::all_of(variables.begin(), variables.end(),
                                   [](const std::string& v) { return v.size() == 1; });
    std::vector<std::pair<unsigned, std::int64_t>> ordered(terms.begin(), terms.end());
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        int da = std::popcount(a.first), db = std::popcount(b.first);
        if (da != db)
            return da > db;
        // Same degree: earlier-declared variables first.
        unsigned diff = a.first ^ b.first;
        return diff != 0 && (a.first & (diff & (~diff + 1u))) != 0;
    });
    std::string out;
    for (const auto& [mask, coeff] : ordered) {
        std::string mono;
        for (std::size_t v = 0; v < variables.size(); ++v) {
            if (!(mask & (1u << v)))
                continue;
            if (!mono.empty() && !short_names)
                mono += "*";
            mono += variables[v];
        }
        std::int64_t mag = coeff < 0 ? -coeff : coeff;
        std::string term;
        if (mono.empty())
            term = std::to_string(mag);
        else if (mag == 1)
            term = mono;
        else
            term = std::to_string(mag) + (short_names ? "" : "*") + mono;
        if (out.empty())
            out = (coeff < 0 ? "-" : "") + term;
        else
            out += (coeff < 0 ? "-" : "+") + term;
    }
    return out;
}

std::optional<Polynomial> fit_multilinear(
    const std::vector<std::string>& variables,
    const std::function<std::optional<std::int64_t>(std::span<const std::int64_t>)>& f,
    std::int64_t base)
{
    const std::size_t n = variables.size();
    if (n > 16)
        fail(ErrorCode::InvalidArgument, "too many variables for a multilinear fit");
    const unsigned corners = 1u << n;

    std::vector<std::int64_t> sample(corners);
    std::vector<std::int64_t> point(n);
    for (unsigned c = 0; c < corners; ++c) {
        for (std::size_t v = 0; v < n; ++v)
            point[v] = base + ((c >> v) & 1u);
        auto value = f(point);
        if (!value)
            return std::nullopt;
        sample[c] = *value;
    }

    // Coefficients in the shifted variables y = x - base.
    std::vector<std::int64_t> shifted(corners, 0);
    for (unsigned s = 0; s < corners; ++s)
        for (unsigned t = s;; t = (t - 1) & s) {
            int sign = (std::popcount(s & ~t) % 2) ? -1 : 1;
            shifted[s] += sign * sample[t];
            if (t == 0)
                break;
        }

    // Expand each prod (x_v - base) back to monomials in x.
    Polynomial poly{variables, {}};
    for (unsigned s = 0; s < corners; ++s) {
        if (shifted[s] == 0)
            continue;
        for (unsigned u = s;; u = (u - 1) & s) {
            std::int64_t c = shifted[s];
            for (int k = std::popcount(s & ~u); k > 0; --k)
                c *= -base;
            poly.terms[u] += c;
            if (u == 0)
                break;
        }
    }
    std::erase_if(poly.terms, [](const auto& t) { return t.second == 0; });

    // Probe points off the fitting cube.
    const std::int64_t probes[][2] = {{2, 5}, {3, 7}, {4, 1}};
    for (const auto& pr : probes) {
        for (unsigned c = 0; c < corners; ++c) {
            for (std::size_t v = 0; v < n; ++v)
                point[v] = base + (((c >> v) & 1u) ? pr[1] : pr[0]) + static_cast<std::int64_t>(v);
            auto value = f(point);
            if (!value || *value != poly.evaluate(point))
                return std::nullopt;
        }
    }
    return poly;
}

std::optional<Polynomial> symbolic_working_set(const LoopNest& nest, const DependenceRelation& dep,
                                               WorkingSetBound bound)
{
    std::vector<std::string> names;
    for (const auto& p : nest.parameters())
        names.push_back(p.name);

    auto f = [&](std::span<const std::int64_t> values) -> std::optional<std::int64_t> {
        std::vector<Parameter> params;
        for (std::size_t v = 0; v < names.size(); ++v)
            params.push_back({names[v], values[v]});
        LoopNest rebound = nest.with_parameters(params);
        for (const auto& d : compute_dependences(rebound)) {
            if (d.source_ref != dep.source_ref || d.target_ref != dep.target_ref ||
                d.kind != dep.kind || d.carrying_loop != dep.carrying_loop)
                continue;
            auto rec = working_set(rebound, d);
            if (!rec)
                return std::nullopt;
            return bound == WorkingSetBound::Min ? rec->ws_min : rec->ws_max;
        }
        return std::nullopt;
    };
    return fit_multilinear(names, f);
}

} // namespace looptune
