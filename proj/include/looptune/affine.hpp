#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "looptune/error.hpp"

namespace looptune {

/// Integer affine form: sum of coefficient * variable plus a constant.
/// Variables are loop iterators or problem parameters; zero coefficients are
/// never stored so structural equality is value equality.
class AffineExpr {
public:
    AffineExpr() = default;
    AffineExpr(std::int64_t constant) : constant_(constant) {} // NOLINT(implicit)

    static AffineExpr var(const std::string& name, std::int64_t coeff = 1);

    /// Parses forms such as "M", "it1 + 32", "2*K - 1", "-j".
    static AffineExpr parse(std::string_view text);

    std::int64_t constant() const noexcept { return constant_; }
    const std::map<std::string, std::int64_t>& terms() const noexcept { return terms_; }
    std::int64_t coeff(const std::string& name) const;

    bool is_constant() const noexcept { return terms_.empty(); }
    bool uses(const std::string& name) const { return terms_.count(name) != 0; }

    /// Name of the variable when the form is exactly `name + c` with unit coefficient.
    std::optional<std::string> unit_variable() const;

    AffineExpr operator+(const AffineExpr& rhs) const;
    AffineExpr operator-(const AffineExpr& rhs) const;
    AffineExpr operator*(std::int64_t k) const;

    /// Evaluates with `lookup(name)` returning the bound value or nullopt.
    template <class Lookup>
    std::int64_t evaluate(Lookup&& lookup) const;

    std::string to_string() const;

    friend bool operator==(const AffineExpr&, const AffineExpr&) = default;

private:
    std::map<std::string, std::int64_t> terms_;
    std::int64_t constant_ = 0;
};

std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept;

template <class Lookup>
std::int64_t AffineExpr::evaluate(Lookup&& lookup) const
{
    std::int64_t value = constant_;
    for (const auto& [name, coeff] : terms_) {
        std::optional<std::int64_t> bound = lookup(name);
        if (!bound)
            fail(ErrorCode::InvalidArgument, "unbound variable '" + name + "' in " + to_string());
        value += coeff * *bound;
    }
    return value;
}

} // namespace looptune
