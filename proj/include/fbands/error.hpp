#pragma once

#include <stdexcept>
#include <string>

namespace fbands {

enum class ErrorKind {
    InvalidArgument,
    GridMismatch,
    Data,
    Config,
    Io,
    InsufficientHistory,
    DegenerateBandwidth,
    EmptyNeighborhood,
    SingularDesign,
    NonConvergence,
    UnsupportedRepresentation,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[nodiscard]] inline const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::GridMismatch: return "grid mismatch";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::InsufficientHistory: return "insufficient history";
    case ErrorKind::DegenerateBandwidth: return "degenerate bandwidth";
    case ErrorKind::EmptyNeighborhood: return "empty neighborhood";
    case ErrorKind::SingularDesign: return "singular design";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::UnsupportedRepresentation: return "unsupported representation";
    }
    return "unknown";
}

/// Process exit code for the CLI: 2 data, 3 config, 4 numerical failure.
[[nodiscard]] inline int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::Data:
    case ErrorKind::Io:
    case ErrorKind::GridMismatch:
    case ErrorKind::InsufficientHistory:
        return 2;
    case ErrorKind::Config:
    case ErrorKind::InvalidArgument:
        return 3;
    default:
        return 4;
    }
}

} // namespace fbands
