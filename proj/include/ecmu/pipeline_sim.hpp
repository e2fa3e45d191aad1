#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "embedding.hpp"
#include "errors.hpp"
#include "format.hpp"

namespace ecmu::sim {

enum class TaskType { Cil, Mu };

/// One step of a task stream: learn `classes` new classes, or unlearn `classes`.
struct Task {
    TaskType type = TaskType::Cil;
    std::size_t classes = 1;

    static Task cil(std::size_t n) { return {TaskType::Cil, n}; }
    static Task mu(std::size_t n) { return {TaskType::Mu, n}; }
    friend bool operator==(const Task&, const Task&) = default;
};

inline std::string_view to_string(TaskType t) noexcept { return t == TaskType::Cil ? "CIL" : "MU"; }

enum class Method { Retrain, RestoreResume, ECILMU };

inline constexpr Method kAllMethods[] = {Method::Retrain, Method::RestoreResume, Method::ECILMU};

inline std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::Retrain: return "retrain";
        case Method::RestoreResume: return "restore";
        case Method::ECILMU: return "ecilmu";
    }
    return "?";
}

inline Method parse_method(std::string_view name) {
    for (auto m : kAllMethods) {
        if (to_string(m) == name) return m;
    }
    throw ArgumentError("unknown method '" + std::string(name) + "' (retrain|restore|ecilmu)");
}

enum class Lane { Trainer, Embedder };

inline std::string_view to_string(Lane l) noexcept { return l == Lane::Trainer ? "trainer" : "embedder"; }

/// Which retained classes an MU task removes.
enum class UnlearnOrder { Newest, Oldest };

/**
 * Linear cost model, seconds. Defaults are fitted to aggregate wall-clock
 * times of a CIFAR-10 run (5 initial classes; MU-1, CIL-1, MU-1, CIL-1) and
 * give retrain 6400 s, restore 3886 s, overlapped 1408 s, plain CIL 1280 s.
 */
struct CostModel {
    double train_per_class = 640.0;
    double embed_per_class = 32.0;
    double migrate_per_class = 2.0;
    double checkpoint_save = 18.0;
    double restore = 10.0;
};

inline void validate(const CostModel& m) {
    for (double v : {m.train_per_class, m.embed_per_class, m.migrate_per_class, m.checkpoint_save, m.restore}) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("cost model values must be finite and >= 0");
    }
}

struct Interval {
    std::size_t task_index = 0;
    TaskType kind = TaskType::Cil;
    Lane lane = Lane::Trainer;
    double start = 0.0;
    double end = 0.0;

    friend bool operator==(const Interval&, const Interval&) = default;
};

struct Timeline {
    std::vector<Interval> intervals;  ///< ordered by task, trainer lane before embedder lane
    double makespan = 0.0;

    friend bool operator==(const Timeline&, const Timeline&) = default;
};

/// What the system has learned so far. Classes are numbered in learning order.
struct SimState {
    std::vector<ClassId> retained;                 ///< learning order
    std::vector<ClassId> unlearned;
    ClassId next_class = 0;
    std::vector<std::vector<ClassId>> checkpoints;  ///< sorted class sets, oldest first

    /// `history` classes already learned, with a checkpoint of that model.
    static SimState initial(std::size_t history) {
        SimState s;
        for (std::size_t i = 0; i < history; ++i) s.retained.push_back(static_cast<ClassId>(i));
        s.next_class = static_cast<ClassId>(history);
        if (history > 0) s.checkpoints.push_back(s.sorted_retained());
        return s;
    }

    std::vector<ClassId> sorted_retained() const {
        auto v = retained;
        std::sort(v.begin(), v.end());
        return v;
    }
};

namespace detail {

struct Clock {
    double trainer_free = 0.0;
    double embedder_free = 0.0;
    double gate = 0.0;  ///< earliest start of the next task
};

inline void learn(SimState& s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) s.retained.push_back(s.next_class++);
}

inline void forget(SimState& s, std::size_t n, UnlearnOrder order, std::size_t task_index) {
    if (n > s.retained.size()) {
        throw InvalidWorkloadError("task " + std::to_string(task_index) + " unlearns " + std::to_string(n) +
                                   " classes but only " + std::to_string(s.retained.size()) + " are learned");
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto it = order == UnlearnOrder::Newest ? s.retained.end() - 1 : s.retained.begin();
        s.unlearned.push_back(*it);
        s.retained.erase(it);
    }
}

inline bool is_subset(const std::vector<ClassId>& sub, const std::vector<ClassId>& super) {
    return std::includes(super.begin(), super.end(), sub.begin(), sub.end());
}

} // namespace detail

/**
 * Simulates `workload` from `state` (updated in place) and returns the schedule.
 *
 *  - Retrain: serial. CIL trains the new classes; MU retrains every retained
 *    class from scratch.
 *  - RestoreResume: serial. CIL trains the new classes then saves a checkpoint.
 *    MU restores the newest checkpoint free of unlearned classes and retrains
 *    the retained classes it lacks (saving once if any); with no such
 *    checkpoint it retrains from scratch, and that model becomes a checkpoint.
 *  - ECILMU: CIL trains on the trainer lane, then embeds its data on the
 *    embedder lane; the next task may start once the training ends. MU embeds
 *    and migrates on the embedder lane; the next task may start once the
 *    embedding ends.
 */
inline Timeline simulate_from(const std::vector<Task>& workload, const CostModel& model, Method method,
                              SimState& state, UnlearnOrder order = UnlearnOrder::Newest) {
    if (workload.empty()) throw ArgumentError("workload is empty");
    validate(model);
    const double a = model.train_per_class;
    Timeline tl;
    detail::Clock clk;
    auto emit = [&tl](std::size_t i, TaskType kind, Lane lane, double start, double end) {
        tl.intervals.push_back({i, kind, lane, start, end});
        tl.makespan = std::max(tl.makespan, end);
    };

    for (std::size_t i = 0; i < workload.size(); ++i) {
        const Task& task = workload[i];
        if (task.classes == 0) throw InvalidWorkloadError("task " + std::to_string(i) + " has zero classes");
        const auto n = static_cast<double>(task.classes);

        if (method == Method::ECILMU) {
            if (task.type == TaskType::Cil) {
                detail::learn(state, task.classes);
                const double start = std::max(clk.gate, clk.trainer_free);
                const double trained = start + a * n;
                emit(i, task.type, Lane::Trainer, start, trained);
                const double embed_start = std::max(trained, clk.embedder_free);
                clk.embedder_free = embed_start + model.embed_per_class * n;
                emit(i, task.type, Lane::Embedder, embed_start, clk.embedder_free);
                clk.trainer_free = clk.gate = trained;
            } else {
                detail::forget(state, task.classes, order, i);
                const double start = std::max(clk.gate, clk.embedder_free);
                const double embedded = start + model.embed_per_class * n;
                clk.embedder_free = embedded + model.migrate_per_class * n;
                emit(i, task.type, Lane::Embedder, start, clk.embedder_free);
                clk.gate = embedded;
            }
            continue;
        }

        double duration = 0.0;
        if (task.type == TaskType::Cil) {
            detail::learn(state, task.classes);
            duration = a * n;
            if (method == Method::RestoreResume) {
                duration += model.checkpoint_save;
                state.checkpoints.push_back(state.sorted_retained());
            }
        } else {
            detail::forget(state, task.classes, order, i);
            const auto retained = state.sorted_retained();
            const auto total = static_cast<double>(retained.size());
            if (method == Method::Retrain) {
                duration = a * total;
            } else {
                const std::vector<ClassId>* usable = nullptr;
                for (auto it = state.checkpoints.rbegin(); it != state.checkpoints.rend(); ++it) {
                    if (detail::is_subset(*it, retained)) {
                        usable = &*it;
                        break;
                    }
                }
                if (usable != nullptr) {
                    const auto resumed = static_cast<double>(retained.size() - usable->size());
                    duration = model.restore + a * resumed;
                    if (resumed > 0) {
                        duration += model.checkpoint_save;
                        state.checkpoints.push_back(retained);
                    }
                } else {
                    duration = a * total;
                    state.checkpoints.push_back(retained);
                }
            }
        }
        const double start = clk.trainer_free;
        clk.trainer_free = start + duration;
        emit(i, task.type, Lane::Trainer, start, clk.trainer_free);
    }
    return tl;
}

inline Timeline simulate(const std::vector<Task>& workload, const CostModel& model, Method method,
                         std::size_t history, UnlearnOrder order = UnlearnOrder::Newest) {
    SimState state = SimState::initial(history);
    return simulate_from(workload, model, method, state, order);
}

inline double speedup(const std::vector<Task>& workload, const CostModel& model, std::size_t history,
                      Method baseline, Method candidate, UnlearnOrder order = UnlearnOrder::Newest) {
    const double base = simulate(workload, model, baseline, history, order).makespan;
    const double cand = simulate(workload, model, candidate, history, order).makespan;
    if (!(cand > 0.0)) throw DegenerateModelError("candidate makespan is zero");
    return base / cand;
}

/// Parses "MU-1,CIL-2,..." (case-insensitive; "cil:2" also accepted).
inline std::vector<Task> parse_workload(std::string_view text) {
    std::vector<Task> out;
    std::string token;
    std::istringstream in{std::string(text)};
    while (std::getline(in, token, ',')) {
        std::string t;
        for (char ch : token) {
            if (!std::isspace(static_cast<unsigned char>(ch))) t += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        }
        if (t.empty()) continue;
        const auto sep = t.find_first_of("-:");
        if (sep == std::string::npos) throw ArgumentError("bad workload token '" + token + "' (expected CIL-n or MU-n)");
        const std::string kind = t.substr(0, sep);
        std::size_t n = 0;
        try {
            std::size_t used = 0;
            n = std::stoul(t.substr(sep + 1), &used);
            if (used != t.size() - sep - 1) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ArgumentError("bad class count in workload token '" + token + "'");
        }
        if (kind == "CIL") {
            out.push_back(Task::cil(n));
        } else if (kind == "MU") {
            out.push_back(Task::mu(n));
        } else {
            throw ArgumentError("bad workload token '" + token + "' (expected CIL-n or MU-n)");
        }
    }
    if (out.empty()) throw ArgumentError("workload is empty");
    return out;
}

inline std::string format_workload(const std::vector<Task>& workload) {
    std::string s;
    for (const auto& t : workload) {
        if (!s.empty()) s += ',';
        s += std::string(to_string(t.type)) + "-" + std::to_string(t.classes);
    }
    return s;
}

struct Scenario {
    std::string name;
    std::size_t history = 0;
    std::vector<Task> workload;
};

/// Built-in scenarios: the CIFAR-10 task sequence and the three CIFAR-100
/// request streams on top of a 50-class initial model.
inline std::vector<Scenario> builtin_scenarios() {
    std::vector<Scenario> out;
    out.push_back({"cifar10", 5, {Task::mu(1), Task::cil(1), Task::mu(1), Task::cil(1)}});
    out.push_back({"cifar10-cil", 5, {Task::cil(1), Task::cil(1)}});
    out.push_back({"cil8", 50, std::vector<Task>(8, Task::cil(1))});
    out.push_back({"mu8", 50, std::vector<Task>(8, Task::mu(1))});
    std::vector<Task> mix;
    for (int i = 0; i < 4; ++i) {
        mix.push_back(Task::cil(1));
        mix.push_back(Task::mu(1));
    }
    out.push_back({"mix8", 50, mix});
    return out;
}

inline Scenario find_scenario(std::string_view name) {
    for (auto& s : builtin_scenarios()) {
        if (s.name == name) return s;
    }
    throw ArgumentError("unknown scenario '" + std::string(name) + "' (cifar10|cifar10-cil|cil8|mu8|mix8)");
}

/// CSV rows: task_index,kind,lane,start_s,end_s
inline std::string to_csv(const Timeline& tl) {
    std::string s = "task_index,kind,lane,start_s,end_s\n";
    for (const auto& iv : tl.intervals) {
        s += std::to_string(iv.task_index) + "," + std::string(to_string(iv.kind)) + "," +
             std::string(to_string(iv.lane)) + "," + format_fixed(iv.start) + "," + format_fixed(iv.end) + "\n";
    }
    return s;
}

} // namespace ecmu::sim
