#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ecmu {

/// Base of every error raised by the engine. `category()` is a stable,
/// machine-parseable token used by the CLI error line and exit status.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual std::string_view category() const noexcept = 0;
};

#define ECMU_DEFINE_ERROR(Name, token)                                   \
    class Name : public Error {                                          \
    public:                                                              \
        using Error::Error;                                              \
        std::string_view category() const noexcept override { return token; } \
    }

ECMU_DEFINE_ERROR(ArgumentError, "argument");
ECMU_DEFINE_ERROR(DimensionError, "dimension");
ECMU_DEFINE_ERROR(DegenerateVectorError, "degenerate-vector");
ECMU_DEFINE_ERROR(ConflictError, "conflict");
ECMU_DEFINE_ERROR(EmptyStoreError, "empty-store");
ECMU_DEFINE_ERROR(MissingClassError, "missing-class");
ECMU_DEFINE_ERROR(DataError, "data");
ECMU_DEFINE_ERROR(IoError, "io");
ECMU_DEFINE_ERROR(InvalidWorkloadError, "invalid-workload");
ECMU_DEFINE_ERROR(DegenerateModelError, "degenerate-model");
ECMU_DEFINE_ERROR(ConfigError, "config");

#undef ECMU_DEFINE_ERROR

/// Malformed embedding file. Carries the byte offset where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::string_view category() const noexcept override { return "format"; }
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Process exit status for an error category; 0 is reserved for success.
inline int exit_code_for(std::string_view category) noexcept {
    constexpr std::string_view order[] = {
        "argument", "dimension", "degenerate-vector", "conflict", "empty-store", "missing-class",
        "format",   "data",      "io",                "invalid-workload", "degenerate-model", "config"};
    for (int i = 0; i < static_cast<int>(std::size(order)); ++i) {
        if (order[i] == category) return 10 + i;
    }
    return 1;
}

} // namespace ecmu
