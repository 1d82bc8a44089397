#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crackscope {

enum class ErrorKind {
    InvalidShape,
    InvalidKernel,
    NotDifferentiable,
    InvalidBox,
    InvalidPrediction,
    InvalidImage,
    DegenerateComponent,
    UndefinedMetric,
    MalformedLabel,
    MalformedPrediction,
    OutOfRange,
    InvalidSplit,
    UnsupportedFormat,
    CorruptImage,
    InvalidParams,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

}  // namespace crackscope
