// Command-line driver: synthetic data, store state, unlearning, evaluation,
// threshold sweeps and pipeline simulation.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ecmu/ecmu.hpp"

namespace fs = std::filesystem;
using namespace ecmu;

namespace {

// Persistent engine state: one embedding file per store inside a directory.
// An empty store has no file.
struct State {
    VectorStore cil{StoreRole::Cil};
    VectorStore mu{StoreRole::Mu};
};

fs::path store_path(const std::string& dir, StoreRole role) {
    return fs::path(dir) / (role == StoreRole::Cil ? "db_cil.ecmu" : "db_mu.ecmu");
}

State load_state(const std::string& dir) {
    State s;
    for (auto role : {StoreRole::Cil, StoreRole::Mu}) {
        const auto path = store_path(dir, role);
        if (!fs::exists(path)) continue;
        auto& store = role == StoreRole::Cil ? s.cil : s.mu;
        auto& other = role == StoreRole::Cil ? s.mu : s.cil;
        for (auto& r : read_embeddings(path.string())) insert(store, other, std::move(r));
    }
    return s;
}

void save_state(const std::string& dir, const State& s) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create state directory '" + dir + "': " + ec.message());
    for (const VectorStore* store : {&s.cil, &s.mu}) {
        const auto path = store_path(dir, store->role());
        if (store->empty()) {
            fs::remove(path, ec);
        } else {
            write_embeddings(path.string(), store->records());
        }
    }
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + out_path + "' for writing");
    out << text;
}

std::string kv_lines(const Provenance& items) {
    std::string s;
    for (const auto& [k, v] : items) s += k + "=" + v + "\n";
    return s;
}

std::vector<double> parse_grid(const std::string& spec) {
    std::vector<double> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ArgumentError("bad grid '" + spec + "' (expected lo:hi:step)");
        }
    }
    if (parts.size() != 3) throw ArgumentError("bad grid '" + spec + "' (expected lo:hi:step)");
    return threshold_grid(parts[0], parts[1], parts[2]);
}

std::string describe(const ProtocolTask& t) {
    return std::string(sim::to_string(t.type)) + "(" + std::to_string(t.label) + ")";
}

std::string opt_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string("n/a"); }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Embedding-space class-incremental learning and unlearning engine"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;
    std::uint64_t seed = 0;
    double threshold = 0.0;
    std::size_t knn_k = 0;
    std::string strategy, filter_mode, inverse_weighting, state_dir;

    app.add_option("--config", config_path, "key=value config file");
    auto* o_seed = app.add_option("--seed", seed, "root random seed (default 42)");
    auto* o_threshold = app.add_option("--threshold,-s", threshold, "membership filter threshold (default 0.77)");
    auto* o_k = app.add_option("--knn-k,-k", knn_k, "KNN fan-out for class identification (default 100)");
    auto* o_strategy = app.add_option("--strategy", strategy, "uniform|proportional|inverse|nearest");
    auto* o_filter = app.add_option("--filter-mode", filter_mode, "record-max|centroid");
    auto* o_inverse = app.add_option("--inverse-weighting", inverse_weighting, "reciprocal|direct");
    auto* o_state = app.add_option("--state", state_dir, "state directory holding DB-CIL / DB-MU");

    // gen
    auto* gen = app.add_subcommand("gen", "generate synthetic clustered embeddings");
    SyntheticSpec gspec;
    std::string gen_out, gen_test_out;
    double gen_test_fraction = 0.2;
    gen->add_option("--out", gen_out, "output embedding file (train part when --test-out is given)")->required();
    gen->add_option("--test-out", gen_test_out, "also split and write the test part here");
    gen->add_option("--test-fraction", gen_test_fraction, "held-out fraction per class");
    gen->add_option("--classes", gspec.n_classes, "number of classes");
    gen->add_option("--per-class", gspec.per_class, "vectors per class");
    gen->add_option("--dim", gspec.dim, "vector dimension");
    gen->add_option("--spread", gspec.spread, "intra-cluster standard deviation");

    // import
    auto* imp = app.add_subcommand("import", "load an embedding file into DB-CIL");
    std::string import_in;
    imp->add_option("--in", import_in, "embedding file")->required();

    // learn
    auto* learn = app.add_subcommand("learn", "insert the vectors of new classes into DB-CIL");
    std::string learn_in;
    std::vector<ClassId> learn_classes;
    learn->add_option("--in", learn_in, "embedding file holding the task's data")->required();
    learn->add_option("--classes", learn_classes, "labels to learn")->required()->delimiter(',');

    // unlearn
    auto* unl = app.add_subcommand("unlearn", "identify a class from exemplars and migrate it to DB-MU");
    std::string unlearn_from, unlearn_exemplar_file;
    std::optional<ClassId> unlearn_class;
    std::size_t unlearn_count = 10;
    unl->add_option("--class", unlearn_class, "sample exemplars of this label from --from");
    unl->add_option("--from", unlearn_from, "embedding file to sample exemplars from");
    unl->add_option("--exemplars", unlearn_count, "number of exemplars to sample");
    unl->add_option("--exemplar-file", unlearn_exemplar_file, "use every vector in this file as an exemplar");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate the pipeline (bundled synthetic protocol without --test)");
    std::string eval_test, eval_predictions, eval_out;
    bool eval_json = false;
    ev->add_option("--test", eval_test, "labelled test embedding file, evaluated against --state");
    ev->add_option("--predictions", eval_predictions, "id,label table used as the surrogate model");
    ev->add_option("--out", eval_out, "write the report here instead of stdout");
    ev->add_flag("--json", eval_json, "structured report instead of key=value");

    // sweep
    auto* sw = app.add_subcommand("sweep", "threshold calibration sweep as CSV");
    std::string sweep_test, sweep_grid = "0.5:0.95:0.01", sweep_out;
    sw->add_option("--test", sweep_test, "labelled embedding file; DB-MU labels count as unlearned")->required();
    sw->add_option("--grid", sweep_grid, "lo:hi:step");
    sw->add_option("--out", sweep_out, "CSV output path");

    // simulate
    auto* simc = app.add_subcommand("simulate", "simulate retrain / restore / overlapped schedules");
    std::string sim_workload, sim_method = "ecilmu", sim_out;
    std::optional<std::size_t> sim_history;
    double train_pc = 0, embed_pc = 0, migrate_pc = 0, save_c = 0, restore_c = 0;
    simc->add_option("--workload", sim_workload, "scenario (cifar10|cifar10-cil|cil8|mu8|mix8) or list like MU-1,CIL-1");
    simc->add_option("--history", sim_history, "initial learned classes for an explicit list");
    simc->add_option("--method", sim_method, "method whose timeline is written to --timeline");
    simc->add_option("--timeline", sim_out, "timeline CSV output path");
    auto* o_train = simc->add_option("--train-per-class", train_pc);
    auto* o_embed = simc->add_option("--embed-per-class", embed_pc);
    auto* o_migrate = simc->add_option("--migrate-per-class", migrate_pc);
    auto* o_save = simc->add_option("--checkpoint-save", save_c);
    auto* o_restore = simc->add_option("--restore", restore_c);

    // export-report
    auto* exp = app.add_subcommand("export-report", "convert a key=value report to JSON, or dump store vectors");
    std::string exp_report, exp_out, exp_vectors;
    exp->add_option("--report", exp_report, "key=value report to convert");
    exp->add_option("--vectors", exp_vectors, "write resident vectors of both stores as CSV here");
    exp->add_option("--out", exp_out, "JSON output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) cfg.apply(load_key_values(config_path));
        if (o_seed->count()) cfg.seed = seed;
        if (o_threshold->count()) cfg.threshold = threshold;
        if (o_k->count()) cfg.set("knn_k", std::to_string(knn_k));
        if (o_strategy->count()) cfg.strategy = parse_strategy(strategy);
        if (o_filter->count()) cfg.filter_mode = parse_filter_mode(filter_mode);
        if (o_inverse->count()) cfg.inverse_weighting = parse_inverse_weighting(inverse_weighting);
        if (o_state->count()) cfg.state_dir = state_dir;
        if (o_train->count()) cfg.cost.train_per_class = train_pc;
        if (o_embed->count()) cfg.cost.embed_per_class = embed_pc;
        if (o_migrate->count()) cfg.cost.migrate_per_class = migrate_pc;
        if (o_save->count()) cfg.cost.checkpoint_save = save_c;
        if (o_restore->count()) cfg.cost.restore = restore_c;
        if (!sim_workload.empty()) cfg.workload = sim_workload;
        if (sim_history) cfg.history = *sim_history;

        if (*gen) {
            gspec.seed = cfg.seed;
            const auto records = generate_synthetic(gspec);
            if (gen_test_out.empty()) {
                write_embeddings(gen_out, records);
            } else {
                const auto parts = split(records, gen_test_fraction, cfg.seed);
                write_embeddings(gen_out, parts.train);
                write_embeddings(gen_test_out, parts.test);
            }
            std::cout << "records=" << records.size() << "\nseed=" << cfg.seed << "\n";
        } else if (*imp) {
            State s = load_state(cfg.state_dir);
            const auto records = read_embeddings(import_in);
            for (const auto& r : records) insert(s.cil, s.mu, r);
            save_state(cfg.state_dir, s);
            std::cout << "imported=" << records.size() << "\ndb_cil=" << s.cil.size() << "\ndb_mu=" << s.mu.size()
                      << "\n";
        } else if (*learn) {
            State s = load_state(cfg.state_dir);
            const auto records = select_classes(read_embeddings(learn_in), learn_classes);
            if (records.empty()) throw MissingClassError("no records of the requested classes in '" + learn_in + "'");
            for (const auto& r : records) insert(s.cil, s.mu, r);
            save_state(cfg.state_dir, s);
            std::cout << "learned=" << records.size() << "\ndb_cil=" << s.cil.size() << "\n";
        } else if (*unl) {
            State s = load_state(cfg.state_dir);
            UnlearnRequest request;
            request.k = cfg.knn_k;
            if (!unlearn_exemplar_file.empty()) {
                for (auto& r : read_embeddings(unlearn_exemplar_file)) request.exemplars.push_back(r.vector);
            } else {
                if (!unlearn_class || unlearn_from.empty()) {
                    throw ArgumentError("unlearn needs --exemplar-file or --class with --from");
                }
                const std::vector<ClassId> one{*unlearn_class};
                auto pool = select_classes(read_embeddings(unlearn_from), one);
                if (pool.empty()) throw MissingClassError("no vectors of class " + std::to_string(*unlearn_class));
                Rng rng = Rng(cfg.seed).split(*unlearn_class);
                std::shuffle(pool.begin(), pool.end(), rng);
                for (std::size_t i = 0; i < std::min(unlearn_count, pool.size()); ++i) {
                    request.exemplars.push_back(pool[i].vector);
                }
            }
            const auto report = unlearn(s.cil, s.mu, request);
            save_state(cfg.state_dir, s);
            std::string out = "identified_label=" + std::to_string(report.identified_label) +
                              "\nmoved=" + std::to_string(report.moved) +
                              "\nunanimous=" + (report.unanimous ? "true" : "false") +
                              "\nvote_fraction=" + format_real(report.vote_fraction) +
                              "\nlow_confidence=" + (report.low_confidence ? "true" : "false") +
                              "\nmean_top_similarity=" + format_real(report.mean_top_similarity) + "\n";
            for (const auto& [label, n] : report.votes) {
                out += "votes." + std::to_string(label) + "=" + std::to_string(n) + "\n";
            }
            out += kv_lines({{"seed", std::to_string(cfg.seed)}, {"knn_k", std::to_string(cfg.knn_k)}});
            std::cout << out;
        } else if (*ev) {
            if (eval_test.empty()) {
                ProtocolSpec spec;
                spec.seed = cfg.seed;
                spec.data.seed = cfg.seed;
                spec.predict = cfg.predict_config();
                spec.knn_k = cfg.knn_k;
                const auto result = run_protocol(spec);
                std::string out;
                for (std::size_t i = 0; i < result.steps.size(); ++i) {
                    const auto& step = result.steps[i];
                    const auto& r = step.reports.at(cfg.strategy);
                    const std::string p = "T" + std::to_string(i + 1) + ".";
                    out += p + "task=" + describe(step.task) + "\n";
                    out += p + "acc_cr=" + opt_real(r.acc_cr) + "\n";
                    out += p + "acc_cf=" + opt_real(r.acc_cf) + "\n";
                    out += p + "filter_recall=" + opt_real(step.filter.recall()) + "\n";
                    out += p + "filter_specificity=" + opt_real(step.filter.specificity()) + "\n";
                }
                const auto& last = result.steps.back().reports.at(cfg.strategy);
                out += to_key_value(last, cfg.provenance());
                if (eval_json) {
                    auto j = to_json(last, cfg.provenance());
                    out = j.dump(2) + "\n";
                }
                emit(out, eval_out);
                if (!eval_out.empty() || eval_json) {
                    // human summary on stderr; percentages only at this boundary
                    for (const auto& step : result.steps) {
                        const auto& r = step.reports.at(cfg.strategy);
                        std::cerr << describe(step.task) << ": C_r " << (r.acc_cr ? format_percent(*r.acc_cr) : "n/a")
                                  << "  C_f " << (r.acc_cf ? format_percent(*r.acc_cf) : "n/a") << "\n";
                    }
                }
            } else {
                State s = load_state(cfg.state_dir);
                const auto test = read_embeddings(eval_test);
                std::unique_ptr<SurrogateModel> model;
                if (eval_predictions.empty()) {
                    model = std::make_unique<NearestCentroidModel>();
                } else {
                    model = std::make_unique<LookupTableModel>(load_prediction_table(eval_predictions));
                }
                const auto report = evaluate(test, s.cil, s.mu, cfg.predict_config(), *model, cfg.seed);
                emit(eval_json ? to_json(report, cfg.provenance()).dump(2) + "\n"
                               : to_key_value(report, cfg.provenance()),
                     eval_out);
            }
        } else if (*sw) {
            State s = load_state(cfg.state_dir);
            std::vector<LabeledInput> inputs;
            for (auto& r : read_embeddings(sweep_test)) {
                if (!s.cil.has_class(r.label) && !s.mu.has_class(r.label)) continue;
                inputs.push_back({r.vector, s.mu.has_class(r.label)});
            }
            const auto grid = parse_grid(sweep_grid);
            const auto cal = sweep_threshold(s.mu, inputs, grid, cfg.filter_mode);
            std::string csv = "threshold,tp,fp,tn,fn,recall,specificity\n";
            for (const auto& p : cal.grid) {
                csv += format_fixed(p.threshold, 4) + "," + std::to_string(p.tp) + "," + std::to_string(p.fp) + "," +
                       std::to_string(p.tn) + "," + std::to_string(p.fn) + "," +
                       (p.recall ? format_fixed(*p.recall) : "NA") + "," +
                       (p.specificity ? format_fixed(*p.specificity) : "NA") + "\n";
            }
            emit(csv, sweep_out);
            if (!sweep_out.empty()) {
                std::cout << "selected_threshold=" << format_fixed(select_threshold(cal), 4) << "\n";
            }
        } else if (*simc) {
            sim::Scenario sc;
            bool named = true;
            try {
                sc = sim::find_scenario(cfg.workload);
            } catch (const ArgumentError&) {
                named = false;
            }
            if (!named) sc = {"custom", cfg.history, sim::parse_workload(cfg.workload)};
            if (named && sim_history) sc.history = *sim_history;
            RunConfig echo = cfg;
            echo.history = sc.history;
            std::string out = "workload_tasks=" + sim::format_workload(sc.workload) + "\n";
            for (auto m : sim::kAllMethods) {
                const auto tl = sim::simulate(sc.workload, cfg.cost, m, sc.history, cfg.unlearn_order);
                out += "makespan." + std::string(sim::to_string(m)) + "=" + format_fixed(tl.makespan, 3) + "\n";
            }
            for (auto m : sim::kAllMethods) {
                const double s = sim::speedup(sc.workload, cfg.cost, sc.history, sim::Method::Retrain, m,
                                              cfg.unlearn_order);
                out += "speedup." + std::string(sim::to_string(m)) + "=" + format_fixed(s, 3) + "\n";
            }
            out += kv_lines(echo.sim_provenance());
            std::cout << out;
            if (!sim_out.empty()) {
                const auto tl = sim::simulate(sc.workload, cfg.cost, sim::parse_method(sim_method), sc.history,
                                              cfg.unlearn_order);
                emit(sim::to_csv(tl), sim_out);
            }
        } else if (*exp) {
            if (exp_report.empty() && exp_vectors.empty()) {
                throw ArgumentError("export-report needs --report and/or --vectors");
            }
            if (!exp_report.empty()) {
                nlohmann::ordered_json j;
                std::ifstream in(exp_report);
                if (!in) throw IoError("cannot open '" + exp_report + "'");
                std::string line;
                std::size_t lineno = 0;
                while (std::getline(in, line)) {
                    ++lineno;
                    if (line.empty()) continue;
                    const auto eq = line.find('=');
                    if (eq == std::string::npos) {
                        throw DataError(exp_report + ":" + std::to_string(lineno) + ": expected key=value");
                    }
                    const std::string value = line.substr(eq + 1);
                    j[line.substr(0, eq)] = value == "n/a" ? nlohmann::ordered_json() : json_scalar(value);
                }
                emit(j.dump(2) + "\n", exp_out);
            }
            if (!exp_vectors.empty()) {
                const State s = load_state(cfg.state_dir);
                std::string csv = "store,id,label";
                const std::size_t dim = std::max(s.cil.dim(), s.mu.dim());
                for (std::size_t d = 0; d < dim; ++d) csv += ",v" + std::to_string(d);
                csv += "\n";
                for (const VectorStore* store : {&s.cil, &s.mu}) {
                    for (const auto& r : store->records()) {
                        csv += std::string(store->name()) + "," + std::to_string(r.id) + "," + std::to_string(r.label);
                        for (double x : r.vector.values()) csv += "," + format_real(x);
                        csv += "\n";
                    }
                }
                emit(csv, exp_vectors);
            }
        }
    } catch (const ecmu::Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
        return exit_code_for(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
