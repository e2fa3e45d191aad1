#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "inference.hpp"
#include "ingestion.hpp"
#include "metrics.hpp"
#include "pipeline_sim.hpp"
#include "rng.hpp"
#include "unlearning.hpp"
#include "vector_store.hpp"

namespace ecmu {

/// One step of a data-layer CIL/MU run: learn a class into DB-CIL or unlearn it.
struct ProtocolTask {
    sim::TaskType type = sim::TaskType::Cil;
    ClassId label = 0;
};

/**
 * A complete synthetic experiment: generated clusters, a stratified split,
 * an initial set of learned classes, then a task sequence. After every task
 * each output strategy is evaluated on the held-out samples of all classes
 * learned so far.
 */
struct ProtocolSpec {
    SyntheticSpec data{7, 500, 64, 0.05, 42};
    double test_fraction = 0.2;
    std::vector<ClassId> initial{0, 1, 2, 3, 4};
    std::vector<ProtocolTask> tasks{{sim::TaskType::Mu, 0}, {sim::TaskType::Cil, 5},
                                    {sim::TaskType::Mu, 1}, {sim::TaskType::Cil, 6}};
    std::size_t exemplars = 10;
    PredictConfig predict;
    std::size_t knn_k = kDefaultK;
    std::uint64_t seed = 42;
};

struct ProtocolStep {
    ProtocolTask task;
    std::optional<MigrationReport> migration;
    std::map<StrategyKind, MetricsReport> reports;
    FilterTally filter;          ///< filter confusion at the configured threshold
    double acc_t = 0.0;          ///< nearest-centroid accuracy over every learned class
    std::size_t n_learned = 0;   ///< classes in DB-CIL and DB-MU
};

struct ProtocolResult {
    std::vector<ProtocolStep> steps;
    std::vector<VectorRecord> train;
    std::vector<VectorRecord> test;
};

/// Fraction of `samples` whose nearest centroid, over both stores, is their own class.
inline double nearest_centroid_accuracy(std::span<const VectorRecord> samples, const VectorStore& db_cil,
                                        const VectorStore& db_mu) {
    CentroidMap all = centroids_of(db_cil);
    for (auto& [label, c] : centroids_of(db_mu)) all.emplace(label, std::move(c));
    if (samples.empty() || all.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& s : samples) correct += strategy_nearest(s.vector, all) == s.label ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

inline ProtocolResult run_protocol(const ProtocolSpec& spec) {
    const auto records = generate_synthetic(spec.data);
    auto parts = split(records, spec.test_fraction, spec.seed);

    VectorStore cil(StoreRole::Cil);
    VectorStore mu(StoreRole::Mu);
    for (const auto& r : select_classes(parts.train, spec.initial)) insert(cil, mu, r);

    const NearestCentroidModel model;
    const Rng root(spec.seed);
    ProtocolResult out;
    for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
        const auto& task = spec.tasks[t];
        ProtocolStep step;
        step.task = task;
        const std::vector<ClassId> one{task.label};
        if (task.type == sim::TaskType::Cil) {
            for (const auto& r : select_classes(parts.train, one)) insert(cil, mu, r);
        } else {
            auto pool = select_classes(parts.train, one);
            Rng pick = root.split(1000 + t);
            std::shuffle(pool.begin(), pool.end(), pick);
            UnlearnRequest request;
            request.k = spec.knn_k;
            for (std::size_t i = 0; i < std::min(spec.exemplars, pool.size()); ++i) {
                request.exemplars.push_back(pool[i].vector);
            }
            step.migration = unlearn(cil, mu, request);
        }

        const auto learned = learned_universe(cil, mu);
        step.n_learned = learned.size();
        const auto eval_set = select_classes(parts.test, learned);
        step.acc_t = nearest_centroid_accuracy(eval_set, cil, mu);
        for (auto strategy : kAllStrategies) {
            PredictConfig cfg = spec.predict;
            cfg.strategy = strategy;
            step.reports[strategy] = evaluate(eval_set, cil, mu, cfg, model, root.split(t).seed());
        }
        step.filter = step.reports.begin()->second.filter;
        out.steps.push_back(std::move(step));
    }
    out.train = std::move(parts.train);
    out.test = std::move(parts.test);
    return out;
}

} // namespace ecmu
