#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gsfix {

enum class ErrorKind {
    InvalidPrimitive,
    InvalidArgument,
    Shape,
    DegenerateGeometry,
    Render,
    InitFailure,
    Restorer,
    Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidPrimitive: return "invalid_primitive";
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::DegenerateGeometry: return "degenerate_geometry";
    case ErrorKind::Render: return "render";
    case ErrorKind::InitFailure: return "init_failure";
    case ErrorKind::Restorer: return "restorer";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string &message) {
    if (!condition) {
        throw Error(kind, message);
    }
}

} // namespace gsfix
