// ossa — static security assessment toolkit
//
// Subcommands: flow, gen, train, rank, eval. Logs go to stderr, data to
// stdout or files. Every subcommand accepts --config <json>; flags win over
// config values, unknown config keys are hard errors.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "ossa/assessor.hpp"
#include "ossa/lasso.hpp"
#include "ossa/netmodel.hpp"
#include "ossa/powerflow.hpp"
#include "ossa/scenario.hpp"
#include "ossa/security.hpp"
#include "ossa/util.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

int fail(const std::string& cmd, const std::string& kind, const std::string& message) {
    ordered_json j;
    j["error"] = {{"command", cmd}, {"kind", kind}, {"message", message}};
    std::cerr << j.dump() << "\n";
    return 1;
}

void log_line(const std::string& cmd, const std::string& msg) {
    std::cerr << "[" << cmd << "] " << msg << "\n";
}

ordered_json load_config_file(const std::string& path, const std::set<std::string>& allowed) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    ordered_json j = ordered_json::parse(f);
    if (!j.is_object()) throw std::runtime_error("config root must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw std::runtime_error("unknown config key '" + k + "'");
    return j;
}

// flags win: only keys whose CLI option was not given on the command line apply
template <typename T>
void take(const ordered_json& cfg, const char* key, const CLI::Option* opt, T& into) {
    if (opt && opt->count() > 0) return;
    if (cfg.contains(key)) into = cfg.at(key).get<T>();
}

std::vector<double> parse_boundaries(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(ossa::parse_double(cell));
    return out;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
}

ordered_json flow_to_json(const ossa::Network& net, const ossa::FlowSolution& sol) {
    ordered_json j;
    j["converged"] = sol.converged;
    j["iterations"] = sol.iterations;
    j["max_mismatch"] = sol.max_mismatch;
    auto& jb = j["buses"] = ordered_json::array();
    double gen_mw = 0, load_mw = 0;
    for (size_t i = 0; i < net.buses.size(); ++i) {
        const auto& b = net.buses[i];
        jb.push_back({{"id", b.id},
                      {"v_mag", sol.v_mag[long(i)]},
                      {"v_ang_deg", sol.v_ang[long(i)] * 180.0 / M_PI},
                      {"p_inj_mw", sol.p_inj[long(i)]},
                      {"q_inj_mvar", sol.q_inj[long(i)]}});
        load_mw += b.p_load;
        gen_mw += sol.p_inj[long(i)] + b.p_load;
    }
    auto& jf = j["branches"] = ordered_json::array();
    for (size_t k = 0; k < net.branches.size(); ++k) {
        const auto& br = net.branches[k];
        const auto& fl = sol.flows[k];
        jf.push_back({{"from", br.from_bus},
                      {"to", br.to_bus},
                      {"in_service", fl.in_service},
                      {"p_from_mw", fl.p_from},
                      {"q_from_mvar", fl.q_from},
                      {"p_to_mw", fl.p_to},
                      {"q_to_mvar", fl.q_to}});
    }
    j["totals"] = {{"generation_mw", gen_mw},
                   {"load_mw", load_mw},
                   {"losses_mw", gen_mw - load_mw}};
    return j;
}

ossa::OperatingPoint point_from_file(const ossa::Network& net, const std::string& path,
                                     double default_lf) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open operating-point file " + path);
    ordered_json j = ordered_json::parse(f);
    static const std::set<std::string> allowed = {"load_factor", "p_g",          "v_setpoints",
                                                  "taps",        "q_c",          "recorded_q_g",
                                                  "recorded_u"};
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k))
            throw std::runtime_error("unknown operating-point key '" + k + "'");
    const double lf = j.value("load_factor", default_lf);
    ossa::ControlVector cv = ossa::base_controls(net);
    auto grab = [&](const char* key, std::vector<double>& into) {
        if (!j.contains(key)) return;
        auto v = j.at(key).get<std::vector<double>>();
        if (v.size() != into.size())
            throw std::runtime_error(std::string("operating-point '") + key + "' must have " +
                                     std::to_string(into.size()) + " entries");
        into = std::move(v);
    };
    grab("p_g", cv.p_g);
    grab("v_setpoints", cv.v_setpoints);
    grab("taps", cv.taps);
    grab("q_c", cv.q_c);
    if (j.contains("recorded_q_g") || j.contains("recorded_u")) {
        ossa::OperatingPoint op;
        op.load_factor = lf;
        op.controls = cv;
        if (j.contains("recorded_q_g"))
            op.recorded_q_g = j.at("recorded_q_g").get<std::vector<double>>();
        if (j.contains("recorded_u"))
            op.recorded_u = j.at("recorded_u").get<std::vector<double>>();
        return op;
    }
    return ossa::operating_point_from_controls(net, lf, cv);
}

// ---------------------------------------------------------------- flow

struct FlowOpts {
    std::string case_path, config, out;
    double tolerance = 1e-8;
    int max_iterations = 20;
    bool enforce_q_limits = false;
    double load_factor = 1.0;
};

int cmd_flow(const FlowOpts& o) {
    ossa::Network net = ossa::parse_case_file(o.case_path);
    if (o.load_factor != 1.0) net = ossa::scale_loads(net, o.load_factor);
    ossa::SolverOptions so;
    so.tolerance = o.tolerance;
    so.max_iterations = o.max_iterations;
    so.enforce_q_limits = o.enforce_q_limits;
    const ossa::FlowSolution sol = ossa::solve_nr(net, so);
    log_line("flow", (sol.converged ? "converged" : "did not converge") + std::string(" in ") +
                         std::to_string(sol.iterations) + " iterations, max mismatch " +
                         ossa::format_double(sol.max_mismatch) + " p.u.");
    const std::string text = flow_to_json(net, sol).dump(2) + "\n";
    if (o.out.empty())
        std::cout << text;
    else
        write_text(o.out, text);
    return sol.converged ? 0 : 1;  // scripts gate on the exit code
}

// ---------------------------------------------------------------- gen

struct GenOpts {
    std::string case_path, config, out;
    uint64_t seed = 42;
    int samples = 50;
    double load_min = 0.5, load_max = 1.5;
    int jobs = 1;
    int retry_budget = 10;
    bool no_timestamp = false;
};

int cmd_gen(const GenOpts& o) {
    const ossa::Network net = ossa::parse_case_file(o.case_path);
    ossa::GenConfig cfg;
    cfg.samples_per_contingency = o.samples;
    cfg.seed = o.seed;
    cfg.jobs = o.jobs;
    cfg.retry_budget = o.retry_budget;
    cfg.ranges.load_min = o.load_min;
    cfg.ranges.load_max = o.load_max;
    const ossa::TrainingSet ts = ossa::generate_dataset(net, cfg);
    int conv = 0;
    for (const auto& s : ts.samples) conv += s.converged;
    log_line("gen", std::to_string(ts.contingencies.size()) + " contingencies x " +
                        std::to_string(o.samples) + " samples; " + std::to_string(conv) + "/" +
                        std::to_string(ts.samples.size()) + " converged; train/test " +
                        std::to_string(ts.train_idx.size()) + "/" +
                        std::to_string(ts.test_idx.size()));
    ossa::save_dataset(ts, o.out, !o.no_timestamp);
    log_line("gen", "wrote " + (fs::path(o.out) / "dataset.csv").string() + " and dataset.json");
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
    std::string data, config, out, buckets;
    uint64_t seed = 1;
    int lambda_count = 100;
    int msa_steps = 3;
    bool no_timestamp = false;
};

int cmd_train(const TrainOpts& o) {
    const ossa::TrainingSet ts = ossa::load_dataset(o.data);
    ossa::AssessorConfig cfg;
    if (!o.buckets.empty())
        cfg.buckets = ossa::buckets_from_boundaries(parse_boundaries(o.buckets));
    cfg.lasso.path_count = o.lambda_count;
    cfg.lasso.steps = o.msa_steps;
    cfg.lasso.seed = o.seed;
    cfg.limits = ts.cfg.limits;
    const ossa::Assessor a = ossa::train_assessor(ts, cfg);
    for (size_t b = 0; b < a.buckets.size(); ++b) {
        const auto& m = a.models[b];
        int nnz = 0;
        for (long k = 0; k < m.coefficients.size(); ++k) nnz += m.coefficients[k] != 0;
        log_line("train", "bucket '" + a.buckets[b].label + "': lambda " +
                              ossa::format_double(m.lambda) + ", " + std::to_string(nnz) + "/" +
                              std::to_string(m.coefficients.size()) + " active coefficients");
    }
    ossa::save_assessor(a, o.out, !o.no_timestamp);
    log_line("train", "wrote assessor to " + o.out);
    return 0;
}

// ---------------------------------------------------------------- rank

struct RankOpts {
    std::string model, case_path, config, out, point;
    double load_factor = 1.0;
};

int cmd_rank(const RankOpts& o) {
    const ossa::Assessor a = ossa::load_assessor(o.model);
    const ossa::Network net = ossa::parse_case_file(o.case_path);
    if (ossa::network_fingerprint(net) != a.network_fingerprint)
        throw std::runtime_error("fingerprint mismatch: assessor was trained on a different case");
    const ossa::OperatingPoint op =
        o.point.empty() ? ossa::base_operating_point(net, o.load_factor)
                        : point_from_file(net, o.point, o.load_factor);
    ossa::reset_solve_count();
    const ossa::RankingReport rep = ossa::screen_and_rank(a, op);
    const long solves = ossa::solve_count();
    const auto screened = ossa::screened_rows(rep);
    log_line("rank", std::to_string(rep.rows.size()) + " contingencies ranked, " +
                         std::to_string(screened.size()) + " screened (state != secure), " +
                         std::to_string(solves) + " load-flow solves on the prediction path");
    const std::string csv = ossa::ranking_to_csv(rep);
    if (o.out.empty()) {
        std::cout << csv;
    } else {
        fs::create_directories(o.out);
        write_text(fs::path(o.out) / "ranking.csv", csv);
        write_text(fs::path(o.out) / "ranking.json",
                   ossa::ranking_to_json(rep).dump(2) + "\n");
        log_line("rank", "wrote ranking.csv and ranking.json to " + o.out);
    }
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
    std::string model, data, case_path, config, out;
    int jobs = 1;
    double load_factor = 1.0;
};

int cmd_eval(const EvalOpts& o) {
    const ossa::Assessor a = ossa::load_assessor(o.model);
    const ossa::TrainingSet ts = ossa::load_dataset(o.data);
    const ossa::Network net = ossa::parse_case_file(o.case_path);
    if (ts.network_fingerprint != ossa::network_fingerprint(net))
        throw std::runtime_error("fingerprint mismatch: dataset was generated from a different case");
    if (a.network_fingerprint != ts.network_fingerprint)
        throw std::runtime_error("fingerprint mismatch: assessor was trained on a different case");
    const ossa::OperatingPoint op = ossa::base_operating_point(net, o.load_factor);
    const ossa::EvaluationReport rep = ossa::evaluate(a, ts, net, &op, o.jobs);
    log_line("eval", "test rows " + std::to_string(rep.rows.size()) + ", mean |rel err| " +
                         ossa::format_double(rep.mean_abs_rel_err_pct) + "%, max " +
                         ossa::format_double(rep.max_abs_rel_err_pct) + "%");
    log_line("eval", "oracle sweep " + ossa::format_double(rep.oracle_sweep_seconds) +
                         " s, prediction sweep " +
                         ossa::format_double(rep.prediction_sweep_seconds) + " s, " +
                         std::to_string(rep.prediction_path_solves) +
                         " solves on the prediction path");
    const ordered_json summary = ossa::evaluation_summary(rep);
    if (o.out.empty()) {
        std::cout << summary.dump(2) << "\n";
    } else {
        fs::create_directories(o.out);
        write_text(fs::path(o.out) / "evaluation.csv", ossa::evaluation_csv(rep));
        write_text(fs::path(o.out) / "summary.json", summary.dump(2) + "\n");
        log_line("eval", "wrote evaluation.csv and summary.json to " + o.out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "ossa — static security assessment: AC load flow, N-1 contingency datasets,\n"
        "adaptive-Lasso training, and fast screening/ranking.\n"
        "Config files are flat JSON objects; keys are the long flag names with '-'\n"
        "replaced by '_' (e.g. {\"case\": \"data/case14.m\", \"load_min\": 0.6}).\n"
        "Command-line flags override config values."};
    app.require_subcommand(1);

    FlowOpts fo;
    auto* flow = app.add_subcommand("flow", "Solve the AC load flow and print the solution");
    auto* fo_case = flow->add_option("--case", fo.case_path, "Case file (config key: case)");
    flow->add_option("--config", fo.config, "JSON config file");
    auto* fo_tol =
        flow->add_option("--tolerance", fo.tolerance,
                         "Convergence tolerance, p.u. mismatch (config key: tolerance)");
    auto* fo_max = flow->add_option("--max-iterations", fo.max_iterations,
                                    "Iteration cap (config key: max_iterations)");
    auto* fo_q = flow->add_flag("--enforce-q-limits", fo.enforce_q_limits,
                                "Enforce generator Q limits (config key: enforce_q_limits)");
    auto* fo_lf = flow->add_option("--load-factor", fo.load_factor,
                                   "Uniform load scaling (config key: load_factor)");
    auto* fo_out = flow->add_option("--out", fo.out, "Output JSON path (config key: out)");

    GenOpts go;
    auto* gen = app.add_subcommand("gen", "Generate a seeded N-1 training dataset");
    auto* go_case = gen->add_option("--case", go.case_path, "Case file (config key: case)");
    gen->add_option("--config", go.config, "JSON config file");
    auto* go_seed = gen->add_option("--seed", go.seed, "Master RNG seed (config key: seed)");
    auto* go_samp = gen->add_option("--samples", go.samples,
                                    "Samples per contingency (config key: samples)");
    auto* go_lmin =
        gen->add_option("--load-min", go.load_min, "Load factor lower bound (config key: load_min)");
    auto* go_lmax =
        gen->add_option("--load-max", go.load_max, "Load factor upper bound (config key: load_max)");
    auto* go_jobs = gen->add_option("--jobs", go.jobs, "Worker threads (config key: jobs)");
    auto* go_retry = gen->add_option("--retry-budget", go.retry_budget,
                                     "Redraw attempts per sample (config key: retry_budget)");
    auto* go_out = gen->add_option("--out", go.out, "Output directory (config key: out)");
    auto* go_nots = gen->add_flag("--no-timestamp", go.no_timestamp,
                                  "Omit the generated_at field (config key: no_timestamp)");

    TrainOpts to;
    auto* train = app.add_subcommand("train", "Fit per-bucket MSA-Lasso models on a dataset");
    auto* to_data = train->add_option("--data", to.data, "Dataset directory (config key: data)");
    train->add_option("--config", to.config, "JSON config file");
    auto* to_seed =
        train->add_option("--seed", to.seed, "Validation-split seed (config key: seed)");
    auto* to_buck = train->add_option(
        "--buckets", to.buckets,
        "Comma-separated load-bucket boundaries, e.g. 0.5,0.9,1.1,1.5 (config key: buckets)");
    auto* to_lc = train->add_option("--lambda-count", to.lambda_count,
                                    "Regularization path length (config key: lambda_count)");
    auto* to_ms = train->add_option("--msa-steps", to.msa_steps,
                                    "Adaptive-Lasso steps (config key: msa_steps)");
    auto* to_out = train->add_option("--out", to.out, "Assessor directory (config key: out)");
    auto* to_nots = train->add_flag("--no-timestamp", to.no_timestamp,
                                    "Omit the trained_at field (config key: no_timestamp)");

    RankOpts ro;
    auto* rank = app.add_subcommand("rank", "Screen and rank contingencies at an operating point");
    auto* ro_model =
        rank->add_option("--model", ro.model, "Assessor directory (config key: model)");
    auto* ro_case = rank->add_option("--case", ro.case_path, "Case file (config key: case)");
    rank->add_option("--config", ro.config, "JSON config file");
    auto* ro_lf = rank->add_option("--load-factor", ro.load_factor,
                                   "Load factor for the base point (config key: load_factor)");
    auto* ro_point = rank->add_option(
        "--point", ro.point, "Operating-point JSON file; overrides --load-factor's base point "
                             "(config key: point)");
    auto* ro_out =
        rank->add_option("--out", ro.out, "Output directory; stdout if omitted (config key: out)");

    EvalOpts eo;
    auto* eval = app.add_subcommand("eval", "Evaluate an assessor against the load-flow oracle");
    auto* eo_model =
        eval->add_option("--model", eo.model, "Assessor directory (config key: model)");
    auto* eo_data = eval->add_option("--data", eo.data, "Dataset directory (config key: data)");
    auto* eo_case = eval->add_option("--case", eo.case_path, "Case file (config key: case)");
    eval->add_option("--config", eo.config, "JSON config file");
    auto* eo_jobs =
        eval->add_option("--jobs", eo.jobs, "Oracle-sweep worker threads (config key: jobs)");
    auto* eo_lf = eval->add_option("--load-factor", eo.load_factor,
                                   "Fixed ranking point load factor (config key: load_factor)");
    auto* eo_out =
        eval->add_option("--out", eo.out, "Output directory; stdout if omitted (config key: out)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        if (flow->parsed()) {
            if (!fo.config.empty()) {
                const auto cfg = load_config_file(
                    fo.config,
                    {"case", "tolerance", "max_iterations", "enforce_q_limits", "load_factor",
                     "out"});
                take(cfg, "case", fo_case, fo.case_path);
                take(cfg, "tolerance", fo_tol, fo.tolerance);
                take(cfg, "max_iterations", fo_max, fo.max_iterations);
                take(cfg, "enforce_q_limits", fo_q, fo.enforce_q_limits);
                take(cfg, "load_factor", fo_lf, fo.load_factor);
                take(cfg, "out", fo_out, fo.out);
            }
            if (fo.case_path.empty()) throw std::runtime_error("--case is required");
            return cmd_flow(fo);
        }
        if (gen->parsed()) {
            if (!go.config.empty()) {
                const auto cfg = load_config_file(
                    go.config, {"case", "seed", "samples", "load_min", "load_max", "jobs",
                                "retry_budget", "out", "no_timestamp"});
                take(cfg, "case", go_case, go.case_path);
                take(cfg, "seed", go_seed, go.seed);
                take(cfg, "samples", go_samp, go.samples);
                take(cfg, "load_min", go_lmin, go.load_min);
                take(cfg, "load_max", go_lmax, go.load_max);
                take(cfg, "jobs", go_jobs, go.jobs);
                take(cfg, "retry_budget", go_retry, go.retry_budget);
                take(cfg, "out", go_out, go.out);
                take(cfg, "no_timestamp", go_nots, go.no_timestamp);
            }
            if (go.case_path.empty()) throw std::runtime_error("--case is required");
            if (go.out.empty()) throw std::runtime_error("--out is required");
            return cmd_gen(go);
        }
        if (train->parsed()) {
            if (!to.config.empty()) {
                const auto cfg = load_config_file(
                    to.config,
                    {"data", "seed", "buckets", "lambda_count", "msa_steps", "out",
                     "no_timestamp"});
                take(cfg, "data", to_data, to.data);
                take(cfg, "seed", to_seed, to.seed);
                if (cfg.contains("buckets") && to_buck->count() == 0) {
                    if (cfg.at("buckets").is_array()) {
                        std::string s;
                        for (const auto& v : cfg.at("buckets"))
                            s += (s.empty() ? "" : ",") + ossa::format_double(v.get<double>());
                        to.buckets = s;
                    } else {
                        to.buckets = cfg.at("buckets").get<std::string>();
                    }
                }
                take(cfg, "lambda_count", to_lc, to.lambda_count);
                take(cfg, "msa_steps", to_ms, to.msa_steps);
                take(cfg, "out", to_out, to.out);
                take(cfg, "no_timestamp", to_nots, to.no_timestamp);
            }
            if (to.data.empty()) throw std::runtime_error("--data is required");
            if (to.out.empty()) throw std::runtime_error("--out is required");
            return cmd_train(to);
        }
        if (rank->parsed()) {
            if (!ro.config.empty()) {
                const auto cfg = load_config_file(
                    ro.config, {"model", "case", "load_factor", "point", "out"});
                take(cfg, "model", ro_model, ro.model);
                take(cfg, "case", ro_case, ro.case_path);
                take(cfg, "load_factor", ro_lf, ro.load_factor);
                take(cfg, "point", ro_point, ro.point);
                take(cfg, "out", ro_out, ro.out);
            }
            if (ro.model.empty()) throw std::runtime_error("--model is required");
            if (ro.case_path.empty()) throw std::runtime_error("--case is required");
            return cmd_rank(ro);
        }
        if (eval->parsed()) {
            if (!eo.config.empty()) {
                const auto cfg = load_config_file(
                    eo.config, {"model", "data", "case", "jobs", "load_factor", "out"});
                take(cfg, "model", eo_model, eo.model);
                take(cfg, "data", eo_data, eo.data);
                take(cfg, "case", eo_case, eo.case_path);
                take(cfg, "jobs", eo_jobs, eo.jobs);
                take(cfg, "load_factor", eo_lf, eo.load_factor);
                take(cfg, "out", eo_out, eo.out);
            }
            if (eo.model.empty()) throw std::runtime_error("--model is required");
            if (eo.data.empty()) throw std::runtime_error("--data is required");
            if (eo.case_path.empty()) throw std::runtime_error("--case is required");
            return cmd_eval(eo);
        }
    } catch (const ossa::ParseError& e) {
        return fail(cmd, "parse", e.what());
    } catch (const ossa::IslandedNetworkError& e) {
        return fail(cmd, "islanded", e.what());
    } catch (const std::exception& e) {
        return fail(cmd, "runtime", e.what());
    }
    return fail(cmd, "usage", "no subcommand handled");  // unreachable
}
