#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "format.hpp"
#include "inference.hpp"
#include "pipeline_sim.hpp"
#include "unlearning.hpp"

namespace ecmu {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace detail

/// `key = value` lines; blank lines and `#` comments are skipped. Later keys win.
inline KeyValues parse_key_values(std::istream& in, const std::string& source = "<config>") {
    KeyValues out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
        }
        std::string key = detail::trim(std::string_view(t).substr(0, eq));
        if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
        out[std::move(key)] = detail::trim(std::string_view(t).substr(eq + 1));
    }
    return out;
}

inline KeyValues load_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    return parse_key_values(in, path);
}

inline std::string_view to_string(FilterMode m) noexcept {
    return m == FilterMode::RecordMax ? "record-max" : "centroid";
}

inline FilterMode parse_filter_mode(std::string_view name) {
    if (name == "record-max") return FilterMode::RecordMax;
    if (name == "centroid") return FilterMode::Centroid;
    throw ArgumentError("unknown filter mode '" + std::string(name) + "' (record-max|centroid)");
}

inline std::string_view to_string(sim::UnlearnOrder o) noexcept {
    return o == sim::UnlearnOrder::Newest ? "newest" : "oldest";
}

inline sim::UnlearnOrder parse_unlearn_order(std::string_view name) {
    if (name == "newest") return sim::UnlearnOrder::Newest;
    if (name == "oldest") return sim::UnlearnOrder::Oldest;
    throw ArgumentError("unknown unlearn order '" + std::string(name) + "' (newest|oldest)");
}

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (value.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        throw ConfigError("config key '" + key + "': '" + value + "' is not a valid number");
    }
    return out;
}

} // namespace detail

/// Effective settings of one CLI run. Precedence: flags > config file > defaults.
struct RunConfig {
    std::uint64_t seed = 42;
    double threshold = kDefaultThreshold;
    std::size_t knn_k = kDefaultK;
    StrategyKind strategy = StrategyKind::ShiftToNearest;
    FilterMode filter_mode = FilterMode::RecordMax;
    InverseWeighting inverse_weighting = InverseWeighting::Reciprocal;
    std::string state_dir = "ecmu-state";

    sim::CostModel cost;
    std::string workload = "cifar10";  ///< scenario name or explicit task list
    std::size_t history = 5;           ///< initial classes for an explicit task list
    sim::UnlearnOrder unlearn_order = sim::UnlearnOrder::Newest;

    PredictConfig predict_config() const { return {threshold, strategy, filter_mode, inverse_weighting}; }

    void apply(const KeyValues& kv) {
        for (const auto& [key, value] : kv) set(key, value);
    }

    void set(const std::string& key, const std::string& value) {
        try {
            if (key == "seed") seed = detail::parse_number<std::uint64_t>(key, value);
            else if (key == "threshold") threshold = detail::parse_number<double>(key, value);
            else if (key == "knn_k") knn_k = detail::parse_number<std::size_t>(key, value);
            else if (key == "strategy") strategy = parse_strategy(value);
            else if (key == "filter_mode") filter_mode = parse_filter_mode(value);
            else if (key == "inverse_weighting") inverse_weighting = parse_inverse_weighting(value);
            else if (key == "state_dir") state_dir = value;
            else if (key == "train_per_class") cost.train_per_class = detail::parse_number<double>(key, value);
            else if (key == "embed_per_class") cost.embed_per_class = detail::parse_number<double>(key, value);
            else if (key == "migrate_per_class") cost.migrate_per_class = detail::parse_number<double>(key, value);
            else if (key == "checkpoint_save") cost.checkpoint_save = detail::parse_number<double>(key, value);
            else if (key == "restore") cost.restore = detail::parse_number<double>(key, value);
            else if (key == "workload") workload = value;
            else if (key == "history") history = detail::parse_number<std::size_t>(key, value);
            else if (key == "unlearn_order") unlearn_order = parse_unlearn_order(value);
            else throw ConfigError("unknown config key '" + key + "'");
        } catch (const ArgumentError& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
        if (knn_k == 0) throw ConfigError("knn_k must be positive");
    }

    /// Echo of the effective configuration for reports.
    std::vector<std::pair<std::string, std::string>> provenance() const {
        return {
            {"seed", std::to_string(seed)},
            {"strategy", std::string(to_string(strategy))},
            {"threshold", format_real(threshold)},
            {"knn_k", std::to_string(knn_k)},
            {"filter_mode", std::string(to_string(filter_mode))},
            {"inverse_weighting", std::string(to_string(inverse_weighting))},
        };
    }

    std::vector<std::pair<std::string, std::string>> sim_provenance() const {
        return {
            {"workload", workload},
            {"history", std::to_string(history)},
            {"unlearn_order", std::string(to_string(unlearn_order))},
            {"train_per_class", format_real(cost.train_per_class)},
            {"embed_per_class", format_real(cost.embed_per_class)},
            {"migrate_per_class", format_real(cost.migrate_per_class)},
            {"checkpoint_save", format_real(cost.checkpoint_save)},
            {"restore", format_real(cost.restore)},
        };
    }
};

} // namespace ecmu
