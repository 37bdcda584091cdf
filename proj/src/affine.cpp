#include "looptune/affine.hpp"

#include <cctype>

namespace looptune {

const char* to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::AnalysisBug: return "analysis-bug";
    case ErrorCode::EnumerationTooLarge: return "enumeration-too-large";
    case ErrorCode::UnsupportedNest: return "unsupported-nest";
    case ErrorCode::RegisterPressure: return "register-pressure";
    case ErrorCode::UnsupportedSpec: return "unsupported-spec";
    case ErrorCode::TrainingDiverged: return "training-diverged";
    case ErrorCode::NoFeasibleKernel: return "no-feasible-kernel";
    case ErrorCode::ToolchainError: return "toolchain-error";
    case ErrorCode::MiscompileError: return "miscompile-error";
    case ErrorCode::CodegenBug: return "codegen-bug";
    case ErrorCode::ConfigError: return "config-error";
    }
    return "unknown";
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept
{
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0)))
        --q;
    return q;
}

AffineExpr AffineExpr::var(const std::string& name, std::int64_t coeff)
{
    AffineExpr e;
    if (coeff != 0)
        e.terms_[name] = coeff;
    return e;
}

std::int64_t AffineExpr::coeff(const std::string& name) const
{
    auto it = terms_.find(name);
    return it == terms_.end() ? 0 : it->second;
}

std::optional<std::string> AffineExpr::unit_variable() const
{
    if (terms_.size() != 1 || terms_.begin()->second != 1)
        return std::nullopt;
    return terms_.begin()->first;
}

AffineExpr AffineExpr::operator+(const AffineExpr& rhs) const
{
    AffineExpr out = *this;
    out.constant_ += rhs.constant_;
    for (const auto& [name, coeff] : rhs.terms_) {
        std::int64_t c = (out.terms_[name] += coeff);
        if (c == 0)
            out.terms_.erase(name);
    }
    return out;
}

AffineExpr AffineExpr::operator-(const AffineExpr& rhs) const { return *this + rhs * -1; }

AffineExpr AffineExpr::operator*(std::int64_t k) const
{
    if (k == 0)
        return AffineExpr{};
    AffineExpr out = *this;
    out.constant_ *= k;
    for (auto& [name, coeff] : out.terms_)
        coeff *= k;
    return out;
}

std::string AffineExpr::to_string() const
{
    std::string out;
    auto append = [&](std::int64_t coeff, const std::string& name) {
        if (out.empty()) {
            if (coeff < 0)
                out += "-";
        } else {
            out += coeff < 0 ? " - " : " + ";
        }
        std::int64_t mag = coeff < 0 ? -coeff : coeff;
        if (name.empty())
            out += std::to_string(mag);
        else if (mag == 1)
            out += name;
        else
            out += std::to_string(mag) + "*" + name;
    };
    for (const auto& [name, coeff] : terms_)
        append(coeff, name);
    if (constant_ != 0 || out.empty())
        append(constant_, "");
    return out;
}

namespace {

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    AffineExpr parse()
    {
        AffineExpr result;
        skip();
        bool first = true;
        while (pos_ < text_.size()) {
            std::int64_t sign = 1;
            if (peek() == '+' || peek() == '-') {
                sign = (peek() == '-') ? -1 : 1;
                ++pos_;
                skip();
            } else if (!first) {
                error("expected '+' or '-'");
            }
            result = result + term() * sign;
            first = false;
            skip();
        }
        if (first)
            error("empty expression");
        return result;
    }

private:
    AffineExpr term()
    {
        std::int64_t coeff = 1;
        std::string name;
        if (std::isdigit(static_cast<unsigned char>(peek()))) {
            coeff = number();
            skip();
            if (peek() != '*')
                return AffineExpr(coeff);
            ++pos_;
            skip();
            name = identifier();
        } else {
            name = identifier();
            skip();
            if (peek() == '*') {
                ++pos_;
                skip();
                coeff = number();
            }
        }
        return AffineExpr::var(name, coeff);
    }

    std::int64_t number()
    {
        std::int64_t v = 0;
        if (!std::isdigit(static_cast<unsigned char>(peek())))
            error("expected number");
        while (std::isdigit(static_cast<unsigned char>(peek())))
            v = v * 10 + (text_[pos_++] - '0');
        return v;
    }

    std::string identifier()
    {
        std::size_t start = pos_;
        if (!(std::isalpha(static_cast<unsigned char>(peek())) || peek() == '_'))
            error("expected identifier");
        while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')
            ++pos_;
        return std::string(text_.substr(start, pos_ - start));
    }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
    void skip()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }
    [[noreturn]] void error(const char* msg) const
    {
        fail(ErrorCode::InvalidArgument,
             std::string("affine parse error: ") + msg + " at offset " + std::to_string(pos_) +
                 " in '" + std::string(text_) + "'");
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

} // namespace

AffineExpr AffineExpr::parse(std::string_view text) { return Parser(text).parse(); }

} // namespace looptune
