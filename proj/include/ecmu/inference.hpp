#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "embedding.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "unlearning.hpp"
#include "vector_store.hpp"

namespace ecmu {

enum class StrategyKind { UniformRandom, ProportionalToCounts, InverseToDistance, ShiftToNearest };

inline constexpr StrategyKind kAllStrategies[] = {StrategyKind::UniformRandom, StrategyKind::ProportionalToCounts,
                                                  StrategyKind::InverseToDistance, StrategyKind::ShiftToNearest};

inline std::string_view to_string(StrategyKind s) noexcept {
    switch (s) {
        case StrategyKind::UniformRandom: return "uniform";
        case StrategyKind::ProportionalToCounts: return "proportional";
        case StrategyKind::InverseToDistance: return "inverse";
        case StrategyKind::ShiftToNearest: return "nearest";
    }
    return "?";
}

inline StrategyKind parse_strategy(std::string_view name) {
    for (auto s : kAllStrategies) {
        if (to_string(s) == name) return s;
    }
    throw ArgumentError("unknown strategy '" + std::string(name) + "' (uniform|proportional|inverse|nearest)");
}

inline constexpr bool is_deterministic(StrategyKind s) noexcept { return s == StrategyKind::ShiftToNearest; }

/// How the inverse-to-distance strategy turns a centroid cosine into a weight.
enum class InverseWeighting {
    Reciprocal,  ///< w = 1 / max(cos, eps): higher similarity, lower weight
    Direct,      ///< w = max(cos, eps): higher similarity, higher weight
};

inline std::string_view to_string(InverseWeighting w) noexcept {
    return w == InverseWeighting::Reciprocal ? "reciprocal" : "direct";
}

inline InverseWeighting parse_inverse_weighting(std::string_view name) {
    if (name == "reciprocal") return InverseWeighting::Reciprocal;
    if (name == "direct") return InverseWeighting::Direct;
    throw ArgumentError("unknown inverse weighting '" + std::string(name) + "' (reciprocal|direct)");
}

inline constexpr double kInverseEpsilon = 1e-6;

using CentroidMap = std::map<ClassId, EmbeddingVector>;

/// Uniform index in [0, n_classes).
inline std::size_t strategy_uniform(std::size_t n_classes, Rng& rng) {
    if (n_classes == 0) throw ArgumentError("uniform strategy needs at least one class");
    return std::uniform_int_distribution<std::size_t>(0, n_classes - 1)(rng);
}

inline ClassId strategy_uniform(std::span<const ClassId> universe, Rng& rng) {
    return universe[strategy_uniform(universe.size(), rng)];
}

/// Draws class i with probability n_i / sum(n).
inline ClassId strategy_proportional(const std::map<ClassId, std::size_t>& counts, Rng& rng) {
    if (counts.empty()) throw ArgumentError("proportional strategy needs class counts");
    std::vector<ClassId> labels;
    std::vector<double> weights;
    for (const auto& [label, n] : counts) {
        if (n == 0) throw ArgumentError("class counts must be positive");
        labels.push_back(label);
        weights.push_back(static_cast<double>(n));
    }
    return labels[std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng)];
}

/// Normalised draw probabilities of the inverse-to-distance strategy.
inline std::map<ClassId, double> inverse_probabilities(const EmbeddingVector& v_f, const CentroidMap& centroids,
                                                       InverseWeighting weighting = InverseWeighting::Reciprocal) {
    if (centroids.empty()) throw ArgumentError("inverse strategy needs centroids");
    std::map<ClassId, double> p;
    double total = 0.0;
    for (const auto& [label, c] : centroids) {
        const double cos = std::max(cosine_similarity(v_f, c), kInverseEpsilon);
        const double w = weighting == InverseWeighting::Reciprocal ? 1.0 / cos : cos;
        p[label] = w;
        total += w;
    }
    for (auto& [_, w] : p) w /= total;
    return p;
}

inline ClassId strategy_inverse(const EmbeddingVector& v_f, const CentroidMap& centroids, Rng& rng,
                                InverseWeighting weighting = InverseWeighting::Reciprocal) {
    const auto p = inverse_probabilities(v_f, centroids, weighting);
    std::vector<ClassId> labels;
    std::vector<double> weights;
    for (const auto& [label, w] : p) {
        labels.push_back(label);
        weights.push_back(w);
    }
    return labels[std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng)];
}

/// Class of the most cosine-similar centroid; ties go to the lower ClassId.
inline ClassId strategy_nearest(const EmbeddingVector& v_f, const CentroidMap& centroids) {
    if (centroids.empty()) throw ArgumentError("nearest strategy needs centroids");
    ClassId best = centroids.begin()->first;
    double best_cos = -std::numeric_limits<double>::infinity();
    for (const auto& [label, c] : centroids) {
        const double cos = cosine_similarity(v_f, c);
        if (cos > best_cos) {
            best = label;
            best_cos = cos;
        }
    }
    return best;
}

inline CentroidMap centroids_of(const VectorStore& store) {
    CentroidMap out;
    for (const auto& [label, summary] : store.summaries()) out.emplace(label, summary.centroid);
    return out;
}

inline std::map<ClassId, std::size_t> counts_of(const VectorStore& store) {
    std::map<ClassId, std::size_t> out;
    for (const auto& [label, summary] : store.summaries()) out.emplace(label, summary.count);
    return out;
}

/// Every label the system has learned: resident in either store.
inline std::vector<ClassId> learned_universe(const VectorStore& db_cil, const VectorStore& db_mu) {
    std::vector<ClassId> out = db_cil.labels();
    for (ClassId l : db_mu.labels()) out.push_back(l);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Stand-in for the trained classifier. Answers only with classes resident
/// in DB-CIL.
class SurrogateModel {
public:
    virtual ~SurrogateModel() = default;
    virtual ClassId classify(const EmbeddingVector& v, std::optional<RecordId> id, const VectorStore& db_cil) const = 0;
};

class NearestCentroidModel final : public SurrogateModel {
public:
    ClassId classify(const EmbeddingVector& v, std::optional<RecordId>, const VectorStore& db_cil) const override {
        if (db_cil.empty()) throw EmptyStoreError("surrogate model has no retained classes");
        ClassId best = 0;
        double best_cos = -std::numeric_limits<double>::infinity();
        for (const auto& [label, summary] : db_cil.summaries()) {
            const double cos = cosine_similarity(v, summary.centroid);
            if (cos > best_cos) {
                best = label;
                best_cos = cos;
            }
        }
        return best;
    }
};

/**
 * Externally computed predictions keyed by record id. An id without an entry
 * is a data error. A tabled label that is no longer resident in DB-CIL is
 * replaced by the nearest-centroid answer.
 */
class LookupTableModel final : public SurrogateModel {
public:
    explicit LookupTableModel(std::map<RecordId, ClassId> table) : table_(std::move(table)) {}

    ClassId classify(const EmbeddingVector& v, std::optional<RecordId> id, const VectorStore& db_cil) const override {
        if (!id) throw ArgumentError("lookup-table model needs a record id");
        auto it = table_.find(*id);
        if (it == table_.end()) throw DataError("no tabled prediction for record " + std::to_string(*id));
        if (db_cil.has_class(it->second)) return it->second;
        return fallback_.classify(v, id, db_cil);
    }

    std::size_t size() const noexcept { return table_.size(); }

private:
    std::map<RecordId, ClassId> table_;
    NearestCentroidModel fallback_;
};

/// Reads `id,label` lines (optional header line, `#` comments) into a lookup table.
inline LookupTableModel load_prediction_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open prediction table '" + path + "'");
    std::map<RecordId, ClassId> table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || (lineno == 1 && line.rfind("id", 0) == 0)) continue;
        std::istringstream ss(line);
        long long id = 0;
        long long label = 0;
        char comma = 0;
        if (!(ss >> id >> comma >> label) || comma != ',' || label < 0) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected 'id,label'");
        }
        if (!table.emplace(static_cast<RecordId>(id), static_cast<ClassId>(label)).second) {
            throw DataError(path + ":" + std::to_string(lineno) + ": duplicate id " + std::to_string(id));
        }
    }
    return LookupTableModel(std::move(table));
}

struct Prediction {
    ClassId label = 0;
    bool flagged = false;
    std::optional<StrategyKind> strategy_used;
};

struct PredictConfig {
    double threshold = kDefaultThreshold;
    StrategyKind strategy = StrategyKind::ShiftToNearest;
    FilterMode filter_mode = FilterMode::RecordMax;
    InverseWeighting inverse_weighting = InverseWeighting::Reciprocal;
};

/// Label produced for an input the filter has flagged as unlearned.
inline ClassId apply_strategy(StrategyKind strategy, const EmbeddingVector& v_f, const VectorStore& db_cil,
                              const VectorStore& db_mu, InverseWeighting weighting, Rng& rng) {
    switch (strategy) {
        case StrategyKind::UniformRandom: {
            const auto universe = learned_universe(db_cil, db_mu);
            return strategy_uniform(universe, rng);
        }
        case StrategyKind::ProportionalToCounts: return strategy_proportional(counts_of(db_cil), rng);
        case StrategyKind::InverseToDistance: return strategy_inverse(v_f, centroids_of(db_cil), rng, weighting);
        case StrategyKind::ShiftToNearest: return strategy_nearest(v_f, centroids_of(db_cil));
    }
    throw ArgumentError("unknown strategy");
}

/// Filter, then either the surrogate's answer or the output strategy's.
inline Prediction predict(const EmbeddingVector& v_in, std::optional<RecordId> id, const VectorStore& db_cil,
                          const VectorStore& db_mu, const PredictConfig& config, const SurrogateModel& model,
                          Rng& rng) {
    if (!db_cil.empty()) detail::check_same_dim(v_in.dim(), db_cil.dim());
    Prediction out;
    out.flagged = membership_filter(db_mu, v_in, config.threshold, config.filter_mode);
    if (!out.flagged) {
        out.label = model.classify(v_in, id, db_cil);
        return out;
    }
    out.label = apply_strategy(config.strategy, v_in, db_cil, db_mu, config.inverse_weighting, rng);
    out.strategy_used = config.strategy;
    return out;
}

} // namespace ecmu
