#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace ecmu {

using ClassId = std::uint32_t;
using RecordId = std::int64_t;

/**
 * @brief Fixed-dimension feature vector in double working precision.
 *
 * Immutable once built. Construction rejects empty input and non-finite
 * components; the Euclidean norm is cached so that cosine similarity costs a
 * single dot product. A zero vector is representable (a class centroid can
 * cancel out) but is rejected wherever a direction is required.
 */
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty()) throw ArgumentError("embedding vector must have dim > 0");
        double sq = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i])) {
                throw DataError("embedding component " + std::to_string(i) + " is not finite");
            }
            sq += values_[i] * values_[i];
        }
        norm_ = std::sqrt(sq);
    }

    EmbeddingVector(std::initializer_list<double> values)
        : EmbeddingVector(std::vector<double>(values)) {}

    std::size_t dim() const noexcept { return values_.size(); }
    double norm() const noexcept { return norm_; }
    bool is_zero() const noexcept { return norm_ == 0.0; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    friend bool operator==(const EmbeddingVector& a, const EmbeddingVector& b) {
        return a.values_ == b.values_;
    }

private:
    std::vector<double> values_;
    double norm_ = 0.0;
};

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

namespace detail {

inline void check_same_dim(std::size_t a, std::size_t b) {
    if (a != b) {
        throw DimensionError("dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
    }
}

// Clamped cosine from precomputed norms. The product of norms (rather than
// normalised operands) keeps the result exactly symmetric in a and b.
inline double cosine_from_parts(double dot_ab, double norm_a, double norm_b) noexcept {
    return std::clamp(dot_ab / (norm_a * norm_b), -1.0, 1.0);
}

} // namespace detail

/// Cosine similarity of two raw spans, clamped to [-1, 1].
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    detail::check_same_dim(a.size(), b.size());
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) throw DegenerateVectorError("cosine similarity of a zero vector");
    return detail::cosine_from_parts(dot(a, b), na, nb);
}

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    detail::check_same_dim(a.dim(), b.dim());
    if (a.is_zero() || b.is_zero()) throw DegenerateVectorError("cosine similarity of a zero vector");
    return detail::cosine_from_parts(dot(a.values(), b.values()), a.norm(), b.norm());
}

} // namespace ecmu
