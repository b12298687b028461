#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cocole {

enum class ErrorKind {
    kDimension,
    kDomain,
    kDegenerateInput,
    kContract,
    kNonFinite,
    kConfig,
    kCorruptFile,
    kVersionMismatch,
    kMissingArtifact,
    kIo,
};

std::string_view to_string(ErrorKind kind);

// Every failure the library reports carries a kind so the CLI can emit a
// machine-readable error document.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) fail(kind, message);
}

}  // namespace cocole
