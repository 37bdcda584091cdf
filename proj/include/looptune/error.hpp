#pragma once

#include <stdexcept>
#include <string>

namespace looptune {

enum class ErrorCode {
    InvalidArgument,
    AnalysisBug,
    EnumerationTooLarge,
    UnsupportedNest,
    RegisterPressure,
    UnsupportedSpec,
    TrainingDiverged,
    NoFeasibleKernel,
    ToolchainError,
    MiscompileError,
    CodegenBug,
    ConfigError,
};

const char* to_string(ErrorCode code) noexcept;

/// All library failures carry a machine-readable code next to the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what)
{
    throw Error(code, what);
}

} // namespace looptune
