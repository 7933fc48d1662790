#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace persistlab {

enum class ErrorKind {
    InvalidArgument,
    NonFinite,
    DomainTooSmall,
    Undecided,
    Unsupported,
    Divergent,
    NotPositiveDefinite,
    SingularBlock,
    AllExceeded,
    ToleranceUnreachable,
    DegenerateRegressor,
    Validation,
    Io,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::DomainTooSmall: return "DomainTooSmall";
        case ErrorKind::Undecided: return "Undecided";
        case ErrorKind::Unsupported: return "Unsupported";
        case ErrorKind::Divergent: return "Divergent";
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::SingularBlock: return "SingularBlock";
        case ErrorKind::AllExceeded: return "AllExceeded";
        case ErrorKind::ToleranceUnreachable: return "ToleranceUnreachable";
        case ErrorKind::DegenerateRegressor: return "DegenerateRegressor";
        case ErrorKind::Validation: return "Validation";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) throw Error(kind, what);
}

}  // namespace persistlab
