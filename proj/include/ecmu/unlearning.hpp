#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embedding.hpp"
#include "errors.hpp"
#include "vector_store.hpp"

namespace ecmu {

inline constexpr double kDefaultThreshold = 0.77;
inline constexpr std::size_t kDefaultK = 100;

struct UnlearnRequest {
    std::vector<EmbeddingVector> exemplars;  ///< embedded samples of the class to forget
    std::size_t k = kDefaultK;
};

struct UnlearnOptions {
    /// Identification is flagged low-confidence unless the winning label takes
    /// strictly more than this fraction of the exemplar votes.
    double min_vote_fraction = 0.5;
};

struct Identification {
    ClassId label = 0;
    std::map<ClassId, std::size_t> votes;
    /// Per label, summed neighbour similarity of the exemplars that voted for it.
    std::map<ClassId, double> vote_similarity;
    /// Mean over exemplars of the similarity to their nearest DB-CIL record.
    double mean_top_similarity = 0.0;
};

struct MigrationReport {
    ClassId identified_label = 0;
    std::map<ClassId, std::size_t> votes;
    std::size_t moved = 0;
    bool unanimous = false;
    double vote_fraction = 0.0;
    bool low_confidence = false;
    double mean_top_similarity = 0.0;
};

/// Per-exemplar KNN verdicts over DB-CIL, aggregated by majority.
inline Identification identify_class(const VectorStore& db_cil, const UnlearnRequest& request) {
    if (request.exemplars.empty()) throw ArgumentError("unlearn request has no exemplars");
    if (db_cil.empty()) throw EmptyStoreError(std::string(db_cil.name()) + " is empty");

    Identification out;
    double top_sum = 0.0;
    for (const auto& exemplar : request.exemplars) {
        const auto hits = knn(db_cil, exemplar, request.k);
        const Vote v = majority_vote(hits);
        out.votes[v.label] += 1;
        out.vote_similarity[v.label] += v.similarity_sum;
        top_sum += hits.front().similarity;
    }
    out.mean_top_similarity = top_sum / static_cast<double>(request.exemplars.size());

    std::size_t best_votes = 0;
    double best_similarity = 0.0;
    for (const auto& [label, count] : out.votes) {
        const double sim = out.vote_similarity.at(label);
        if (count > best_votes || (count == best_votes && sim > best_similarity)) {
            out.label = label;
            best_votes = count;
            best_similarity = sim;
        }
    }
    return out;
}

/// Identifies the class behind `request` and migrates it DB-CIL -> DB-MU.
inline MigrationReport unlearn(VectorStore& db_cil, VectorStore& db_mu, const UnlearnRequest& request,
                               const UnlearnOptions& options = {}) {
    const Identification id = identify_class(db_cil, request);
    MigrationReport report;
    report.identified_label = id.label;
    report.votes = id.votes;
    report.mean_top_similarity = id.mean_top_similarity;
    report.unanimous = id.votes.size() == 1;
    report.vote_fraction =
        static_cast<double>(id.votes.at(id.label)) / static_cast<double>(request.exemplars.size());
    report.low_confidence = !(report.vote_fraction > options.min_vote_fraction);
    report.moved = migrate_class(db_cil, db_mu, id.label);
    return report;
}

inline MigrationReport unlearn(DualStore& stores, const UnlearnRequest& request, const UnlearnOptions& options = {}) {
    return stores.write([&](VectorStore& cil, VectorStore& mu) { return unlearn(cil, mu, request, options); });
}

enum class FilterMode {
    RecordMax,  ///< compare against every DB-MU record
    Centroid,   ///< compare against DB-MU class centroids only
};

/// Largest cosine similarity between `v_in` and DB-MU, or nullopt when DB-MU is empty.
inline std::optional<double> max_similarity(const VectorStore& db_mu, const EmbeddingVector& v_in,
                                            FilterMode mode = FilterMode::RecordMax) {
    if (db_mu.empty()) return std::nullopt;
    detail::check_same_dim(v_in.dim(), db_mu.dim());
    double best = -std::numeric_limits<double>::infinity();
    if (mode == FilterMode::RecordMax) {
        for (const auto& r : db_mu.records()) best = std::max(best, cosine_similarity(v_in, r.vector));
    } else {
        for (const auto& [label, summary] : db_mu.summaries()) {
            best = std::max(best, cosine_similarity(v_in, summary.centroid));
        }
    }
    return best;
}

inline void check_threshold(double s) {
    if (!std::isfinite(s)) throw ArgumentError("threshold must be finite");
}

/// True when `v_in` is judged to belong to an unlearned class: some DB-MU
/// vector (or centroid, in centroid mode) has cosine similarity >= s.
inline bool membership_filter(const VectorStore& db_mu, const EmbeddingVector& v_in, double s,
                              FilterMode mode = FilterMode::RecordMax) {
    check_threshold(s);
    const auto best = max_similarity(db_mu, v_in, mode);
    return best.has_value() && *best >= s;
}

struct LabeledInput {
    EmbeddingVector vector;
    bool is_unlearned = false;
};

/// Filter confusion at one threshold. Positive = retained input that passes
/// the filter unflagged.
struct CalibrationPoint {
    double threshold = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    std::optional<double> recall;       ///< tp / (tp + fn); absent with no retained inputs
    std::optional<double> specificity;  ///< tn / (fp + tn); absent with no unlearned inputs
};

struct FilterCalibration {
    std::vector<CalibrationPoint> grid;
};

inline CalibrationPoint make_point(double s, std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    CalibrationPoint p{s, tp, fp, tn, fn, std::nullopt, std::nullopt};
    if (tp + fn > 0) p.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (fp + tn > 0) p.specificity = static_cast<double>(tn) / static_cast<double>(fp + tn);
    return p;
}

inline FilterCalibration sweep_threshold(const VectorStore& db_mu, std::span<const LabeledInput> inputs,
                                         std::span<const double> grid, FilterMode mode = FilterMode::RecordMax) {
    if (grid.empty()) throw ArgumentError("threshold grid is empty");
    if (inputs.empty()) throw ArgumentError("no labelled inputs to sweep");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        check_threshold(grid[i]);
        if (i > 0 && grid[i] < grid[i - 1]) throw ArgumentError("threshold grid must be sorted ascending");
    }

    // Each input's best similarity is threshold independent; compute once.
    std::vector<std::optional<double>> best;
    best.reserve(inputs.size());
    for (const auto& in : inputs) best.push_back(max_similarity(db_mu, in.vector, mode));

    FilterCalibration out;
    out.grid.reserve(grid.size());
    for (double s : grid) {
        std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const bool flagged = best[i].has_value() && *best[i] >= s;
            if (inputs[i].is_unlearned) {
                (flagged ? tn : fp) += 1;
            } else {
                (flagged ? fn : tp) += 1;
            }
        }
        out.grid.push_back(make_point(s, tp, fp, tn, fn));
    }
    return out;
}

/**
 * Picks an operating threshold from a sweep: the point maximising
 * recall + specificity. When several grid points tie, the middle one of the
 * tied points is returned so the choice sits inside the plateau rather than at
 * its edge.
 */
inline double select_threshold(const FilterCalibration& calibration) {
    if (calibration.grid.empty()) throw ArgumentError("empty calibration");
    auto score = [](const CalibrationPoint& p) { return p.recall.value_or(1.0) + p.specificity.value_or(1.0); };
    double best = -1.0;
    for (const auto& p : calibration.grid) best = std::max(best, score(p));
    std::vector<double> tied;
    for (const auto& p : calibration.grid) {
        if (score(p) == best) tied.push_back(p.threshold);
    }
    return tied[(tied.size() - 1) / 2];
}

/// Inclusive arithmetic grid lo, lo+step, ..., hi.
inline std::vector<double> threshold_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || !std::isfinite(lo) || !std::isfinite(hi) || hi < lo) {
        throw ArgumentError("grid needs finite lo <= hi and step > 0");
    }
    const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = lo + static_cast<double>(i) * step;
    return out;
}

} // namespace ecmu
