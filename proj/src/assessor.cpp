#include "ossa/assessor.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "ossa/powerflow.hpp"
#include "ossa/util.hpp"

namespace ossa {

namespace fs = std::filesystem;

std::vector<LoadBucket> default_buckets() {
    return {{"light", 0.5, 0.9, false}, {"normal", 0.9, 1.1, false}, {"heavy", 1.1, 1.5, true}};
}

std::vector<LoadBucket> buckets_from_boundaries(const std::vector<double>& bounds) {
    if (bounds.size() < 2) throw std::invalid_argument("buckets: need at least 2 boundaries");
    for (size_t i = 1; i < bounds.size(); ++i)
        if (!(bounds[i] > bounds[i - 1]))
            throw std::invalid_argument("buckets: boundaries must be strictly increasing");
    std::vector<LoadBucket> out;
    static const char* canon[3] = {"light", "normal", "heavy"};
    for (size_t i = 0; i + 1 < bounds.size(); ++i) {
        LoadBucket b;
        b.label = bounds.size() == 4 ? canon[i] : "b" + std::to_string(i);
        b.lo = bounds[i];
        b.hi = bounds[i + 1];
        b.upper_inclusive = i + 2 == bounds.size();
        out.push_back(b);
    }
    return out;
}

int bucket_of(const std::vector<LoadBucket>& buckets, double load_factor) {
    for (size_t i = 0; i < buckets.size(); ++i) {
        const auto& b = buckets[i];
        if (load_factor >= b.lo &&
            (load_factor < b.hi || (b.upper_inclusive && load_factor == b.hi)))
            return int(i);
    }
    throw std::out_of_range("load factor " + format_double(load_factor) +
                            " outside configured buckets");
}

OperatingPoint operating_point_from_controls(const Network& net, double load_factor,
                                             const ControlVector& controls) {
    OperatingPoint op;
    op.load_factor = load_factor;
    op.controls = controls;
    const Network scaled = apply_operating_point(net, load_factor, op.controls);
    const FlowSolution sol = solve_nr(scaled);
    if (!sol.converged)
        throw std::runtime_error("operating point did not converge pre-contingency");
    const auto order = generator_order(net);
    std::map<int, int> units_at;
    for (int gi : order) units_at[net.generators[gi].bus]++;
    for (int gi : order) {
        const int bi = net.bus_index(net.generators[gi].bus);
        op.recorded_q_g.push_back((sol.q_inj[bi] + scaled.buses[bi].q_load) /
                                  units_at[net.generators[gi].bus]);
    }
    op.recorded_u.assign(sol.v_mag.data(), sol.v_mag.data() + sol.v_mag.size());
    return op;
}

OperatingPoint base_operating_point(const Network& net, double load_factor) {
    return operating_point_from_controls(net, load_factor, base_controls(net));
}

Assessor train_assessor(const TrainingSet& ts, const AssessorConfig& cfg) {
    if (ts.samples.empty()) throw std::invalid_argument("train_assessor: empty dataset");
    Assessor a;
    a.buckets = cfg.buckets;
    a.base_mva = ts.base_mva;
    a.network_fingerprint = ts.network_fingerprint;
    a.layout = ts.layout;
    a.contingencies = ts.contingencies;
    a.limits = ts.cfg.limits;

    const int D = ts.layout.dim;
    for (size_t b = 0; b < cfg.buckets.size(); ++b) {
        std::vector<int> rows;
        for (int i : ts.train_idx)
            if (bucket_of(cfg.buckets, ts.samples[i].load_factor) == int(b)) rows.push_back(i);
        if (rows.empty())
            throw std::runtime_error("train_assessor: empty bucket '" + cfg.buckets[b].label +
                                     "'");
        Eigen::MatrixXd X(rows.size(), D);
        Eigen::VectorXd y(rows.size());
        for (size_t r = 0; r < rows.size(); ++r) {
            const Sample& s = ts.samples[rows[r]];
            X.row(r) = Eigen::Map<const Eigen::VectorXd>(s.features.data(), D);
            y[r] = s.response;
        }
        MsaConfig mc = cfg.lasso;
        mc.seed = RngStream::mix(cfg.lasso.seed ^ (0x6275636bULL + b));  // per-bucket stream
        LassoModel m = msa_lasso_fit(X, y, mc);
        m.layout_fingerprint = ts.layout.fingerprint();
        a.models.push_back(std::move(m));
    }
    return a;
}

namespace {

// predicted values within 1e-9 of a class boundary snap onto it
SecurityState classify_snapped(double pi) {
    if (std::abs(pi) < 1e-9) return SecurityState::secure;
    if (std::abs(pi - 1.0) < 1e-9) return SecurityState::alarmed;
    return classify(pi);
}

Eigen::VectorXd assemble_features(const Assessor& a, const OperatingPoint& op,
                                  int outage_branch_index) {
    const FeatureLayout& lay = a.layout;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(lay.dim);
    if (int(op.controls.p_g.size()) != lay.n_gen)
        throw std::invalid_argument("assess: p_g size mismatch");
    for (int i = 0; i < lay.n_gen; ++i) x[lay.pg_off + i] = op.controls.p_g[i] / a.base_mva;
    if (!op.recorded_q_g.empty()) {
        if (int(op.recorded_q_g.size()) != lay.n_gen)
            throw std::invalid_argument("assess: recorded_q_g size mismatch");
        for (int i = 0; i < lay.n_gen; ++i) x[lay.qg_off + i] = op.recorded_q_g[i] / a.base_mva;
    }
    if (!op.recorded_u.empty()) {
        if (int(op.recorded_u.size()) != lay.n_bus)
            throw std::invalid_argument("assess: recorded_u size mismatch");
        for (int i = 0; i < lay.n_bus; ++i) x[lay.u_off + i] = op.recorded_u[i];
    } else {
        // no measured profile: nominal flat profile; the usual callers
        // (base_operating_point, stored samples) always supply recorded_u
        for (int i = 0; i < lay.n_bus; ++i) x[lay.u_off + i] = 1.0;
    }
    if (int(op.controls.taps.size()) != lay.n_tap)
        throw std::invalid_argument("assess: taps size mismatch");
    for (int i = 0; i < lay.n_tap; ++i) x[lay.t_off + i] = op.controls.taps[i];
    if (int(op.controls.q_c.size()) != lay.n_cap)
        throw std::invalid_argument("assess: q_c size mismatch");
    for (int i = 0; i < lay.n_cap; ++i) x[lay.qc_off + i] = op.controls.q_c[i] / a.base_mva;
    for (int k = 0; k < lay.n_branch; ++k) x[lay.l_off + k] = 1.0;
    x[lay.l_off + outage_branch_index] = 0.0;
    return x;
}

}  // namespace

std::pair<double, SecurityState> assess(const Assessor& a, const OperatingPoint& op,
                                        const std::string& contingency_id) {
    const auto it = std::find_if(a.contingencies.begin(), a.contingencies.end(),
                                 [&](const Contingency& c) { return c.id == contingency_id; });
    if (it == a.contingencies.end())
        throw std::invalid_argument("unknown contingency " + contingency_id);
    const int b = bucket_of(a.buckets, op.load_factor);
    const Eigen::VectorXd x = assemble_features(a, op, it->branch_index);
    double pi = predict(a.models[b], x);
    if (pi < 0) pi = 0;  // PI_c is nonnegative by construction
    return {pi, classify_snapped(pi)};
}

RankingReport screen_and_rank(const Assessor& a, const OperatingPoint& op) {
    std::vector<RankRow> rows;
    for (const auto& c : a.contingencies) {
        auto [pi, state] = assess(a, op, c.id);
        RankRow r;
        r.contingency_id = c.id;
        r.from_bus = c.from_bus;
        r.to_bus = c.to_bus;
        r.pi_c = pi;
        r.state = state;
        rows.push_back(std::move(r));
    }
    return rank_contingencies(std::move(rows));
}

std::vector<RankRow> screened_rows(const RankingReport& rep) {
    std::vector<RankRow> out;
    for (const auto& r : rep.rows)
        if (r.state != SecurityState::secure) out.push_back(r);
    return out;
}

EvaluationReport evaluate(const Assessor& a, const TrainingSet& ts, const Network& net,
                          const OperatingPoint* fixed_point, int jobs) {
    if (network_fingerprint(net) != a.network_fingerprint)
        throw std::runtime_error("evaluate: network fingerprint mismatch");
    EvaluationReport rep;

    // --- paired oracle/prediction on the held-out rows
    double sum_rel = 0, max_rel = 0;
    for (int i : ts.test_idx) {
        const Sample& s = ts.samples[i];
        if (!s.converged) continue;
        const int b = bucket_of(a.buckets, s.load_factor);
        const Eigen::VectorXd x =
            Eigen::Map<const Eigen::VectorXd>(s.features.data(), ts.layout.dim);
        double pred = predict(a.models[b], x);
        if (pred < 0) pred = 0;

        EvalSampleRow row;
        row.sample_index = i;
        row.contingency_id = s.contingency_id;
        row.load_factor = s.load_factor;
        row.bucket = a.buckets[b].label;
        row.oracle = s.response;
        row.predicted = pred;
        row.oracle_state = classify(s.response);
        row.predicted_state = classify_snapped(pred);
        if (s.response > 0) {
            row.rel_err_pct = (pred - s.response) / s.response * 100.0;
            sum_rel += std::abs(*row.rel_err_pct);
            max_rel = std::max(max_rel, std::abs(*row.rel_err_pct));
            ++rep.n_error_rows;
        }
        rep.confusion[int(row.oracle_state)][int(row.predicted_state)]++;
        rep.rows.push_back(std::move(row));
    }
    rep.mean_abs_rel_err_pct = rep.n_error_rows ? sum_rel / rep.n_error_rows : 0;
    rep.max_abs_rel_err_pct = max_rel;

    // --- contingency ranking at the fixed operating point
    OperatingPoint op = fixed_point ? *fixed_point : base_operating_point(net, 1.0);
    const Network scaled = apply_operating_point(net, op.load_factor, op.controls);

    using clock = std::chrono::steady_clock;
    const size_t C = a.contingencies.size();
    std::vector<std::optional<RankRow>> slot(C);  // per-contingency, order-stable
    const auto t0 = clock::now();
    {
        std::atomic<size_t> next{0};
        auto sweep = [&] {
            for (size_t k; (k = next.fetch_add(1)) < C;) {
                const Contingency& c = a.contingencies[k];
                try {
                    const ReducedNetwork red = apply_contingency(scaled, c.branch_index);
                    const FlowSolution sol = solve_nr(red.net);
                    if (!sol.converged) continue;
                    RankRow r;
                    r.contingency_id = c.id;
                    r.from_bus = c.from_bus;
                    r.to_bus = c.to_bus;
                    r.pi_c = security_index(sol, default_limits(red.net, a.limits)).value;
                    r.state = classify(r.pi_c);
                    r.oracle = r.pi_c;
                    slot[k] = std::move(r);
                } catch (const std::exception&) {
                    // divergence or islanded slack; reported below
                }
            }
        };
        if (jobs <= 1) {
            sweep();
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < jobs; ++w) pool.emplace_back(sweep);
            for (auto& t : pool) t.join();
        }
    }
    const auto t1 = clock::now();
    rep.oracle_sweep_seconds = std::chrono::duration<double>(t1 - t0).count();
    std::vector<RankRow> oracle_rows;
    std::vector<std::string> diverged;
    for (size_t k = 0; k < C; ++k) {
        if (slot[k])
            oracle_rows.push_back(std::move(*slot[k]));
        else
            diverged.push_back(a.contingencies[k].id);
    }

    // prediction sweep: classifier only, instrumented for load-flow silence
    screen_and_rank(a, op);  // warm-up
    reset_solve_count();
    const auto t2 = clock::now();
    RankingReport pred_rank = screen_and_rank(a, op);
    const auto t3 = clock::now();
    rep.prediction_path_solves = solve_count();
    rep.prediction_sweep_seconds = std::chrono::duration<double>(t3 - t2).count();

    // pair the two orders
    std::map<std::string, double> pred_of;
    for (const auto& r : pred_rank.rows) pred_of[r.contingency_id] = r.pi_c;
    std::vector<RankRow> paired = oracle_rows;
    for (auto& r : paired) {
        r.predicted = pred_of.at(r.contingency_id);
        if (*r.oracle != 0)
            r.rel_err_pct = (*r.predicted - *r.oracle) / *r.oracle * 100.0;
    }
    rep.point_ranking = rank_contingencies(std::move(paired), std::move(diverged));

    // agreement metrics over the oracle-solvable rows, comparing the two
    // *displayed* orders (ties broken by contingency id in both)
    const auto& rows = rep.point_ranking.rows;  // oracle-descending order
    const int n = int(rows.size());
    std::vector<int> pred_rank_pos(n);
    {
        std::vector<RankRow> shadow;
        for (const auto& r : rows) {
            RankRow s;
            s.contingency_id = r.contingency_id;
            s.pi_c = *r.predicted;
            shadow.push_back(std::move(s));
        }
        const RankingReport disp = rank_contingencies(std::move(shadow));
        std::map<std::string, int> pos;
        for (int k = 0; k < n; ++k) pos[disp.rows[k].contingency_id] = k;
        for (int i = 0; i < n; ++i) pred_rank_pos[i] = pos.at(rows[i].contingency_id);
    }
    for (int i = 0; i < n; ++i) rep.rank_exact_matches += pred_rank_pos[i] == i;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double oi = *rows[i].oracle, oj = *rows[j].oracle;
            const double gap = std::abs(oi - oj) / std::max(std::abs(oi), std::abs(oj)) * 100.0;
            if (gap < rep.rank_gap_threshold_pct) continue;
            ++rep.rank_pairs_checked;
            // oracle order has row i above row j
            if (pred_rank_pos[i] > pred_rank_pos[j]) ++rep.rank_pair_inversions;
        }
    if (n > 1) {
        double d2 = 0;
        for (int i = 0; i < n; ++i) d2 += double(pred_rank_pos[i] - i) * (pred_rank_pos[i] - i);
        rep.spearman_rho = 1.0 - 6.0 * d2 / (double(n) * (double(n) * n - 1));
    }
    return rep;
}

std::string evaluation_csv(const EvaluationReport& rep) {
    std::ostringstream os;
    os << "sample,contingency,load_factor,bucket,oracle,predicted,rel_err_pct,oracle_state,"
          "predicted_state\n";
    for (const auto& r : rep.rows) {
        os << r.sample_index << ',' << r.contingency_id << ',' << format_double(r.load_factor)
           << ',' << r.bucket << ',' << format_double(r.oracle) << ','
           << format_double(r.predicted) << ','
           << (r.rel_err_pct ? format_double(*r.rel_err_pct) : "") << ','
           << to_string(r.oracle_state) << ',' << to_string(r.predicted_state) << "\n";
    }
    return os.str();
}

nlohmann::ordered_json evaluation_summary(const EvaluationReport& rep) {
    nlohmann::ordered_json j;
    j["error_rows"] = rep.n_error_rows;
    j["mean_abs_rel_err_pct"] = rep.mean_abs_rel_err_pct;
    j["max_abs_rel_err_pct"] = rep.max_abs_rel_err_pct;
    j["rank"] = {{"exact_matches", rep.rank_exact_matches},
                 {"pairs_checked", rep.rank_pairs_checked},
                 {"pair_inversions", rep.rank_pair_inversions},
                 {"gap_threshold_pct", rep.rank_gap_threshold_pct},
                 {"spearman_rho", rep.spearman_rho}};
    const char* labels[3] = {"secure", "alarmed", "insecure"};
    nlohmann::ordered_json conf;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k)
            conf[std::string("oracle_") + labels[i]][std::string("predicted_") + labels[k]] =
                rep.confusion[i][k];
    j["state_confusion"] = conf;
    j["timing"] = {{"oracle_sweep_seconds", rep.oracle_sweep_seconds},
                   {"prediction_sweep_seconds", rep.prediction_sweep_seconds},
                   {"speedup", rep.prediction_sweep_seconds > 0
                                   ? rep.oracle_sweep_seconds / rep.prediction_sweep_seconds
                                   : 0.0},
                   {"prediction_path_solves", rep.prediction_path_solves}};
    j["point_ranking"] = ranking_to_json(rep.point_ranking);
    return j;
}

namespace {
std::string iso_now() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}
}  // namespace

void save_assessor(const Assessor& a, const std::string& dir, bool with_timestamp) {
    fs::create_directories(dir);
    nlohmann::ordered_json man;
    man["schema_version"] = 1;
    man["network_fingerprint"] = a.network_fingerprint;
    man["layout_fingerprint"] = a.layout.fingerprint();
    man["layout_names"] = a.layout.names;
    man["layout_blocks"] = {{"pg", {a.layout.pg_off, a.layout.n_gen}},
                            {"qg", {a.layout.qg_off, a.layout.n_gen}},
                            {"u", {a.layout.u_off, a.layout.n_bus}},
                            {"t", {a.layout.t_off, a.layout.n_tap}},
                            {"qc", {a.layout.qc_off, a.layout.n_cap}},
                            {"l", {a.layout.l_off, a.layout.n_branch}}};
    man["base_mva"] = a.base_mva;
    man["limits"] = {{"v_alarm_frac", a.limits.v_alarm_frac},
                     {"v_security_frac", a.limits.v_security_frac},
                     {"p_alarm_frac", a.limits.p_alarm_frac},
                     {"nominal_v", a.limits.nominal_v},
                     {"exponent_n", a.limits.exponent_n}};
    auto& jb = man["buckets"] = nlohmann::ordered_json::array();
    for (const auto& b : a.buckets)
        jb.push_back({{"label", b.label},
                      {"lo", b.lo},
                      {"hi", b.hi},
                      {"upper_inclusive", b.upper_inclusive},
                      {"model_file", "model_" + b.label + ".json"}});
    auto& jc = man["contingencies"] = nlohmann::ordered_json::array();
    for (const auto& c : a.contingencies)
        jc.push_back({{"id", c.id},
                      {"branch_index", c.branch_index},
                      {"from", c.from_bus},
                      {"to", c.to_bus},
                      {"islanded_buses", c.islanded_buses}});
    if (with_timestamp) man["trained_at"] = iso_now();

    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!mf) throw std::runtime_error("cannot write manifest.json in " + dir);
    mf << man.dump(2) << "\n";
    for (size_t b = 0; b < a.buckets.size(); ++b) {
        std::ofstream f(fs::path(dir) / ("model_" + a.buckets[b].label + ".json"),
                        std::ios::binary);
        if (!f) throw std::runtime_error("cannot write model file in " + dir);
        f << model_to_json(a.models[b]).dump(2) << "\n";
    }
}

Assessor load_assessor(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("cannot open manifest.json in " + dir);
    nlohmann::ordered_json man = nlohmann::ordered_json::parse(mf);
    if (man.at("schema_version").get<int>() != 1)
        throw std::runtime_error("assessor schema version mismatch");

    Assessor a;
    a.network_fingerprint = man.at("network_fingerprint").get<std::string>();
    a.base_mva = man.at("base_mva");
    a.layout.names = man.at("layout_names").get<std::vector<std::string>>();
    const auto& blocks = man.at("layout_blocks");
    a.layout.pg_off = blocks.at("pg")[0];
    a.layout.n_gen = blocks.at("pg")[1];
    a.layout.qg_off = blocks.at("qg")[0];
    a.layout.u_off = blocks.at("u")[0];
    a.layout.n_bus = blocks.at("u")[1];
    a.layout.t_off = blocks.at("t")[0];
    a.layout.n_tap = blocks.at("t")[1];
    a.layout.qc_off = blocks.at("qc")[0];
    a.layout.n_cap = blocks.at("qc")[1];
    a.layout.l_off = blocks.at("l")[0];
    a.layout.n_branch = blocks.at("l")[1];
    a.layout.dim = int(a.layout.names.size());
    const auto& lm = man.at("limits");
    a.limits.v_alarm_frac = lm.at("v_alarm_frac");
    a.limits.v_security_frac = lm.at("v_security_frac");
    a.limits.p_alarm_frac = lm.at("p_alarm_frac");
    a.limits.nominal_v = lm.at("nominal_v");
    a.limits.exponent_n = lm.at("exponent_n");
    for (const auto& c : man.at("contingencies"))
        a.contingencies.push_back({c.at("id").get<std::string>(), c.at("branch_index").get<int>(),
                                   c.at("from").get<int>(), c.at("to").get<int>(),
                                   c.at("islanded_buses").get<int>()});
    for (const auto& b : man.at("buckets")) {
        LoadBucket lb{b.at("label").get<std::string>(), b.at("lo").get<double>(),
                      b.at("hi").get<double>(), b.at("upper_inclusive").get<bool>()};
        a.buckets.push_back(lb);
        std::ifstream f(fs::path(dir) / b.at("model_file").get<std::string>());
        if (!f) throw std::runtime_error("cannot open model file for bucket " + lb.label);
        LassoModel m = model_from_json(nlohmann::ordered_json::parse(f));
        if (m.layout_fingerprint != man.at("layout_fingerprint").get<std::string>())
            throw std::runtime_error("model/layout fingerprint mismatch for bucket " + lb.label);
        a.models.push_back(std::move(m));
    }
    if (a.layout.fingerprint() != man.at("layout_fingerprint").get<std::string>())
        throw std::runtime_error("assessor layout fingerprint mismatch");
    return a;
}

}  // namespace ossa
