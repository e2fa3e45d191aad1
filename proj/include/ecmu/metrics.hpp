#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "format.hpp"
#include "inference.hpp"
#include "rng.hpp"
#include "unlearning.hpp"
#include "vector_store.hpp"

namespace ecmu {

/// Filter confusion counts; positive = retained-class input that passes unflagged.
struct FilterTally {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::optional<double> recall() const {
        if (tp + fn == 0) return std::nullopt;
        return static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    std::optional<double> specificity() const {
        if (fp + tn == 0) return std::nullopt;
        return static_cast<double>(tn) / static_cast<double>(fp + tn);
    }
};

struct MetricsReport {
    std::optional<double> acc_cr;  ///< absent when no test sample belongs to a retained class
    std::optional<double> acc_cf;  ///< absent when nothing has been unlearned (or no such samples)
    double overall = 0.0;
    std::size_t n_eval = 0;
    std::size_t n_cr = 0;
    std::size_t n_cf = 0;
    std::map<ClassId, double> per_class_acc;
    std::map<std::pair<ClassId, ClassId>, std::size_t> confusion;  ///< (true, predicted) -> count
    FilterTally filter;
};

/**
 * Runs the full prediction pipeline over `test_set` and aggregates accuracy
 * separately for retained (DB-CIL) and unlearned (DB-MU) true classes.
 *
 * Sample i draws from stream `Rng(seed).split(i)`, so results do not depend
 * on evaluation order.
 */
inline MetricsReport evaluate(std::span<const VectorRecord> test_set, const VectorStore& db_cil,
                              const VectorStore& db_mu, const PredictConfig& config, const SurrogateModel& model,
                              std::uint64_t seed) {
    if (test_set.empty()) throw ArgumentError("empty test set");
    const Rng root(seed);
    MetricsReport out;
    out.n_eval = test_set.size();
    std::size_t correct_cr = 0;
    std::size_t correct_cf = 0;
    std::map<ClassId, std::pair<std::size_t, std::size_t>> per_class;  // correct, total

    for (std::size_t i = 0; i < test_set.size(); ++i) {
        const auto& sample = test_set[i];
        const bool retained = db_cil.has_class(sample.label);
        const bool unlearned = db_mu.has_class(sample.label);
        if (!retained && !unlearned) {
            throw ArgumentError("test sample " + std::to_string(sample.id) + " has never-learned label " +
                                std::to_string(sample.label));
        }
        Rng rng = root.split(i);
        const Prediction p = predict(sample.vector, sample.id, db_cil, db_mu, config, model, rng);
        const bool correct = p.label == sample.label;

        out.confusion[{sample.label, p.label}] += 1;
        auto& pc = per_class[sample.label];
        pc.first += correct ? 1 : 0;
        pc.second += 1;
        if (retained) {
            out.n_cr += 1;
            correct_cr += correct ? 1 : 0;
            (p.flagged ? out.filter.fn : out.filter.tp) += 1;
        } else {
            out.n_cf += 1;
            correct_cf += correct ? 1 : 0;
            (p.flagged ? out.filter.tn : out.filter.fp) += 1;
        }
    }

    if (out.n_cr > 0) out.acc_cr = static_cast<double>(correct_cr) / static_cast<double>(out.n_cr);
    if (out.n_cf > 0) out.acc_cf = static_cast<double>(correct_cf) / static_cast<double>(out.n_cf);
    out.overall = static_cast<double>(correct_cr + correct_cf) / static_cast<double>(out.n_eval);
    for (const auto& [label, ct] : per_class) {
        out.per_class_acc[label] = static_cast<double>(ct.first) / static_cast<double>(ct.second);
    }
    return out;
}

namespace detail {

inline void check_fraction(double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) throw ArgumentError(std::string(name) + " must lie in [0, 1]");
}

} // namespace detail

/// Retained-class accuracy predicted from filter recall and the model's test accuracy.
inline double expected_cr_accuracy(double recall, double acc_t) {
    detail::check_fraction(recall, "recall");
    detail::check_fraction(acc_t, "acc_t");
    return recall * acc_t;
}

/// Unlearned-class accuracy under the uniform strategy: samples leaking past
/// the filter are answered at acc_t, flagged ones hit the right class by chance.
inline double expected_cf_accuracy(double specificity, double acc_t, std::size_t n_classes) {
    detail::check_fraction(specificity, "specificity");
    detail::check_fraction(acc_t, "acc_t");
    if (n_classes == 0) throw ArgumentError("n_classes must be positive");
    return (1.0 - specificity) * acc_t + specificity / static_cast<double>(n_classes);
}

using Provenance = std::vector<std::pair<std::string, std::string>>;

/// Line-oriented key=value rendering. `provenance` (the effective run
/// configuration: seed, strategy, threshold, ...) is echoed after the metrics.
inline std::string to_key_value(const MetricsReport& r, const Provenance& provenance) {
    auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string("n/a"); };
    std::string s;
    auto line = [&s](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
    line("acc_cr", opt(r.acc_cr));
    line("acc_cf", opt(r.acc_cf));
    line("overall", format_real(r.overall));
    line("n_eval", std::to_string(r.n_eval));
    line("n_cr", std::to_string(r.n_cr));
    line("n_cf", std::to_string(r.n_cf));
    line("filter_tp", std::to_string(r.filter.tp));
    line("filter_fp", std::to_string(r.filter.fp));
    line("filter_tn", std::to_string(r.filter.tn));
    line("filter_fn", std::to_string(r.filter.fn));
    line("filter_recall", opt(r.filter.recall()));
    line("filter_specificity", opt(r.filter.specificity()));
    for (const auto& [k, v] : provenance) line(k, v);
    for (const auto& [label, acc] : r.per_class_acc) line("class_acc." + std::to_string(label), format_real(acc));
    return s;
}

/// A provenance value as JSON: numbers stay numeric, everything else is a string.
inline nlohmann::ordered_json json_scalar(const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    double x = 0.0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), x);
    if (!v.empty() && res.ec == std::errc() && res.ptr == v.data() + v.size()) {
        std::int64_t i = 0;
        auto ri = std::from_chars(v.data(), v.data() + v.size(), i);
        if (ri.ec == std::errc() && ri.ptr == v.data() + v.size()) return i;
        std::uint64_t u = 0;
        auto ru = std::from_chars(v.data(), v.data() + v.size(), u);
        if (ru.ec == std::errc() && ru.ptr == v.data() + v.size()) return u;
        return x;
    }
    return v;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r, const Provenance& provenance) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
    nlohmann::ordered_json j;
    j["acc_cr"] = opt(r.acc_cr);
    j["acc_cf"] = opt(r.acc_cf);
    j["overall"] = r.overall;
    j["n_eval"] = r.n_eval;
    j["n_cr"] = r.n_cr;
    j["n_cf"] = r.n_cf;
    j["filter"] = {{"tp", r.filter.tp},
                   {"fp", r.filter.fp},
                   {"tn", r.filter.tn},
                   {"fn", r.filter.fn},
                   {"recall", opt(r.filter.recall())},
                   {"specificity", opt(r.filter.specificity())}};
    for (const auto& [k, v] : provenance) j[k] = json_scalar(v);
    auto& per_class = j["per_class_acc"] = nlohmann::ordered_json::object();
    for (const auto& [label, acc] : r.per_class_acc) per_class[std::to_string(label)] = acc;
    auto& confusion = j["confusion"] = nlohmann::ordered_json::array();
    for (const auto& [key, n] : r.confusion) confusion.push_back({key.first, key.second, n});
    return j;
}

} // namespace ecmu
