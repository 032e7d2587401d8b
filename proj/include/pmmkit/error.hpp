#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pmmkit {

enum class ErrorCategory {
    dimension,
    invalid_argument,
    parse,
    io,
    config,
    version,
    corrupt,
};

inline std::string_view category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::dimension: return "dimension";
        case ErrorCategory::invalid_argument: return "invalid_argument";
        case ErrorCategory::parse: return "parse";
        case ErrorCategory::io: return "io";
        case ErrorCategory::config: return "config";
        case ErrorCategory::version: return "version";
        case ErrorCategory::corrupt: return "corrupt";
    }
    return "unknown";
}

/// Every failure raised by the library carries a category so the CLI can
/// report a one-line machine-parseable error.
class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
    throw Error(category, message);
}

inline void require(bool cond, ErrorCategory category, const std::string& message) {
    if (!cond) fail(category, message);
}

}  // namespace pmmkit
