#pragma once

#include <stdexcept>
#include <string>

namespace cst {

enum class ErrorCode {
    invalid_argument = 1,
    io_magic_mismatch,
    io_truncated,
    io_dimension_mismatch,
    io_header,
    io_write,
    io_missing_input,
    stage_mismatch,
    divergence,
    non_finite,
};

/// Exit status for the CLI; 0 is reserved for success.
inline int exit_code(ErrorCode c) { return 10 + static_cast<int>(c); }

inline const char* to_string(ErrorCode c) {
    switch (c) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::io_magic_mismatch: return "magic-mismatch";
    case ErrorCode::io_truncated: return "truncated-payload";
    case ErrorCode::io_dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::io_header: return "bad-header";
    case ErrorCode::io_write: return "write-failure";
    case ErrorCode::io_missing_input: return "nonexistent-input";
    case ErrorCode::stage_mismatch: return "stage-mismatch";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::non_finite: return "non-finite";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw Error(ErrorCode::invalid_argument, what);
}

} // namespace cst
