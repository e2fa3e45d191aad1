#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "embedding.hpp"
#include "errors.hpp"

namespace ecmu {

struct VectorRecord {
    RecordId id = 0;
    ClassId label = 0;
    EmbeddingVector vector;

    friend bool operator==(const VectorRecord&, const VectorRecord&) = default;
};

struct ClassSummary {
    ClassId label = 0;
    std::size_t count = 0;
    EmbeddingVector centroid;
};

enum class StoreRole { Cil, Mu };

inline std::string_view to_string(StoreRole role) noexcept {
    return role == StoreRole::Cil ? "DB-CIL" : "DB-MU";
}

/// One hit of a nearest-neighbour query.
struct Neighbor {
    RecordId id = 0;
    ClassId label = 0;
    double similarity = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Ranking used by every similarity query: higher similarity first, then
/// ascending record id so results never depend on insertion order.
inline bool ranks_before(const Neighbor& a, const Neighbor& b) noexcept {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
}

/**
 * @brief In-memory vector store with exact cosine search and per-class summaries.
 *
 * Vectors are kept as ingested (unnormalised). Each class keeps a running sum
 * and count from which the cached centroid is refreshed on every change.
 *
 * Not synchronised on its own; see DualStore for the reader/writer wrapper.
 */
class VectorStore {
public:
    explicit VectorStore(StoreRole role = StoreRole::Cil) : role_(role) {}

    StoreRole role() const noexcept { return role_; }
    std::string_view name() const noexcept { return to_string(role_); }

    /// Dimension of resident vectors; 0 until the first insert.
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }

    std::span<const VectorRecord> records() const noexcept { return records_; }
    const std::map<ClassId, ClassSummary>& summaries() const noexcept { return summaries_; }

    bool contains(RecordId id) const { return index_.contains(id); }

    const VectorRecord* find(RecordId id) const {
        auto it = index_.find(id);
        return it == index_.end() ? nullptr : &records_[it->second];
    }

    bool has_class(ClassId label) const { return summaries_.contains(label); }

    std::size_t count_of(ClassId label) const {
        auto it = summaries_.find(label);
        return it == summaries_.end() ? 0 : it->second.count;
    }

    std::vector<ClassId> labels() const {
        std::vector<ClassId> out;
        out.reserve(summaries_.size());
        for (const auto& [label, _] : summaries_) out.push_back(label);
        return out;
    }

    const EmbeddingVector& centroid_of(ClassId label) const {
        auto it = summaries_.find(label);
        if (it == summaries_.end()) {
            throw MissingClassError("class " + std::to_string(label) + " is not resident in " +
                                    std::string(name()));
        }
        return it->second.centroid;
    }

    /// Throws unless `record` could be inserted right now.
    void check_insertable(const VectorRecord& record) const {
        if (record.vector.dim() == 0) throw ArgumentError("record has an empty vector");
        if (!empty()) detail::check_same_dim(record.vector.dim(), dim_);
        if (record.vector.is_zero()) {
            throw DegenerateVectorError("record " + std::to_string(record.id) + " has a zero vector");
        }
        if (contains(record.id)) {
            throw ConflictError("record id " + std::to_string(record.id) + " already in " +
                                std::string(name()));
        }
    }

    void insert(VectorRecord record) {
        check_insertable(record);
        if (empty()) dim_ = record.vector.dim();
        add_to_summary(record);
        index_.emplace(record.id, records_.size());
        records_.push_back(std::move(record));
    }

    /// Removes and returns every record of `label`, in storage order.
    std::vector<VectorRecord> extract_class(ClassId label) {
        if (!has_class(label)) {
            throw MissingClassError("class " + std::to_string(label) + " is not resident in " +
                                    std::string(name()));
        }
        std::vector<VectorRecord> moved;
        moved.reserve(count_of(label));
        std::vector<VectorRecord> kept;
        kept.reserve(records_.size() - count_of(label));
        for (auto& r : records_) (r.label == label ? moved : kept).push_back(std::move(r));
        records_ = std::move(kept);
        index_.clear();
        for (std::size_t i = 0; i < records_.size(); ++i) index_.emplace(records_[i].id, i);
        summaries_.erase(label);
        sums_.erase(label);
        return moved;
    }

    /// Rebuilds every summary from the resident records and returns the largest
    /// relative deviation seen between the cached and recomputed centroids.
    double recompute_summaries() {
        const auto cached = summaries_;
        summaries_.clear();
        sums_.clear();
        for (const auto& r : records_) add_to_summary(r);
        double worst = 0.0;
        for (const auto& [label, fresh] : summaries_) {
            auto it = cached.find(label);
            if (it == cached.end() || it->second.count != fresh.count) return std::numeric_limits<double>::infinity();
            worst = std::max(worst, relative_difference(it->second.centroid, fresh.centroid));
        }
        if (cached.size() != summaries_.size()) return std::numeric_limits<double>::infinity();
        return worst;
    }

    static double relative_difference(const EmbeddingVector& a, const EmbeddingVector& b) {
        double diff = 0.0;
        for (std::size_t i = 0; i < a.dim(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
        const double scale = std::max(b.norm(), std::numeric_limits<double>::min());
        return std::sqrt(diff) / scale;
    }

private:
    void add_to_summary(const VectorRecord& record) {
        auto& sum = sums_[record.label];
        if (sum.empty()) sum.assign(record.vector.dim(), 0.0);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += record.vector[i];
        auto& summary = summaries_[record.label];
        summary.label = record.label;
        summary.count += 1;
        std::vector<double> mean(sum.size());
        const double n = static_cast<double>(summary.count);
        for (std::size_t i = 0; i < sum.size(); ++i) mean[i] = sum[i] / n;
        summary.centroid = EmbeddingVector(std::move(mean));
    }

    StoreRole role_;
    std::size_t dim_ = 0;
    std::vector<VectorRecord> records_;
    std::unordered_map<RecordId, std::size_t> index_;
    std::map<ClassId, ClassSummary> summaries_;
    std::map<ClassId, std::vector<double>> sums_;
};

/// Inserts into `store` after also checking that the id is absent from `other`.
inline void insert(VectorStore& store, const VectorStore& other, VectorRecord record) {
    if (other.contains(record.id)) {
        throw ConflictError("record id " + std::to_string(record.id) + " already in " +
                            std::string(other.name()));
    }
    store.insert(std::move(record));
}

/**
 * Exact k-nearest neighbours by cosine similarity.
 *
 * Returns min(k, size) hits ordered by ranks_before.
 */
inline std::vector<Neighbor> knn(const VectorStore& store, const EmbeddingVector& query, std::size_t k) {
    if (k == 0) throw ArgumentError("k must be positive");
    if (store.empty()) throw EmptyStoreError(std::string(store.name()) + " is empty");
    detail::check_same_dim(query.dim(), store.dim());
    if (query.is_zero()) throw DegenerateVectorError("knn query is a zero vector");

    std::vector<Neighbor> all;
    all.reserve(store.size());
    for (const auto& r : store.records()) {
        all.push_back({r.id, r.label, cosine_similarity(query, r.vector)});
    }
    const std::size_t take = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), ranks_before);
    all.resize(take);
    return all;
}

/// Outcome of a majority vote over labelled neighbours.
struct Vote {
    ClassId label = 0;
    std::size_t votes = 0;
    double similarity_sum = 0.0;
};

/// Majority label among `neighbors`; ties go to the larger summed similarity,
/// then to the lower ClassId.
inline Vote majority_vote(std::span<const Neighbor> neighbors) {
    if (neighbors.empty()) throw ArgumentError("cannot vote over an empty neighbour list");
    std::map<ClassId, Vote> tally;
    for (const auto& n : neighbors) {
        auto& v = tally[n.label];
        v.label = n.label;
        v.votes += 1;
        v.similarity_sum += n.similarity;
    }
    const Vote* best = nullptr;
    for (const auto& [label, v] : tally) {  // ascending label, so strict > keeps the lower id on full ties
        if (best == nullptr || v.votes > best->votes ||
            (v.votes == best->votes && v.similarity_sum > best->similarity_sum)) {
            best = &v;
        }
    }
    return *best;
}

inline Vote knn_vote(const VectorStore& store, const EmbeddingVector& query, std::size_t k) {
    const auto hits = knn(store, query, k);
    return majority_vote(hits);
}

inline ClassId knn_classify(const VectorStore& store, const EmbeddingVector& query, std::size_t k) {
    return knn_vote(store, query, k).label;
}

inline EmbeddingVector centroid_of(const VectorStore& store, ClassId label) {
    return store.centroid_of(label);
}

/**
 * Moves every record of `label` from `src` to `dst`, preserving ids.
 *
 * All preconditions are checked before either store is touched, so a failed
 * call leaves both stores unchanged.
 */
inline std::size_t migrate_class(VectorStore& src, VectorStore& dst, ClassId label) {
    if (!src.has_class(label)) {
        throw MissingClassError("class " + std::to_string(label) + " is not resident in " +
                                std::string(src.name()));
    }
    if (!dst.empty()) detail::check_same_dim(src.dim(), dst.dim());
    for (const auto& r : src.records()) {
        if (r.label == label && dst.contains(r.id)) {
            throw ConflictError("record id " + std::to_string(r.id) + " already in " + std::string(dst.name()));
        }
    }
    auto moved = src.extract_class(label);
    for (auto& r : moved) dst.insert(std::move(r));
    return moved.size();
}

/**
 * @brief The DB-CIL / DB-MU pair behind one reader/writer lock.
 *
 * Readers see both stores under a shared lock, so a migration (which holds the
 * exclusive lock for its whole duration) is never observed half-done. Record
 * ids are unique across the pair.
 */
class DualStore {
public:
    DualStore() : cil_(StoreRole::Cil), mu_(StoreRole::Mu) {}

    void insert(StoreRole into, VectorRecord record) {
        std::unique_lock lock(mutex_);
        if (into == StoreRole::Cil) {
            ecmu::insert(cil_, mu_, std::move(record));
        } else {
            ecmu::insert(mu_, cil_, std::move(record));
        }
    }

    std::size_t migrate(ClassId label) {
        std::unique_lock lock(mutex_);
        return migrate_class(cil_, mu_, label);
    }

    /// Runs `fn(const VectorStore& cil, const VectorStore& mu)` under the shared lock.
    template <class Fn>
    decltype(auto) read(Fn&& fn) const {
        std::shared_lock lock(mutex_);
        return std::forward<Fn>(fn)(std::as_const(cil_), std::as_const(mu_));
    }

    /// Runs `fn(VectorStore& cil, VectorStore& mu)` under the exclusive lock.
    template <class Fn>
    decltype(auto) write(Fn&& fn) {
        std::unique_lock lock(mutex_);
        return std::forward<Fn>(fn)(cil_, mu_);
    }

private:
    mutable std::shared_mutex mutex_;
    VectorStore cil_;
    VectorStore mu_;
};

} // namespace ecmu
