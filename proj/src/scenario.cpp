#include "ossa/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace ossa {

namespace fs = std::filesystem;

std::vector<Contingency> enumerate_contingencies(const Network& net) {
    const int n = int(net.buses.size());
    std::vector<int> deg(n, 0);
    for (const auto& br : net.branches) {
        if (!br.in_service) continue;
        ++deg[net.bus_index(br.from_bus)];
        ++deg[net.bus_index(br.to_bus)];
    }
    std::vector<Contingency> out;
    for (size_t k = 0; k < net.branches.size(); ++k) {
        const auto& br = net.branches[k];
        if (!br.in_service) continue;
        // a line that is some bus's only connection cannot be tripped as a
        // study case: the stranded bus has no post-outage state to assess
        if (deg[net.bus_index(br.from_bus)] == 1 || deg[net.bus_index(br.to_bus)] == 1)
            continue;
        Contingency c;
        c.id = "L" + std::to_string(k + 1);
        c.branch_index = int(k);
        c.from_bus = br.from_bus;
        c.to_bus = br.to_bus;

        Network tmp = net;
        tmp.branches[k].in_service = false;
        auto comp = bus_components(tmp);
        const int slack_comp = comp[net.slack_index()];
        c.islanded_buses = int(std::count_if(comp.begin(), comp.end(),
                                             [&](int cc) { return cc != slack_comp; }));
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<int> generator_order(const Network& net) {
    std::vector<int> order(net.generators.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return net.generators[a].bus < net.generators[b].bus;
    });
    return order;
}

namespace {
int grid_count(double lo, double hi, double step) {
    if (!(step > 0)) throw std::invalid_argument("grid step must be positive");
    const int c = int(std::floor((hi - lo) / step + 0.5)) + 1;
    if (c < 1) throw std::invalid_argument("empty grid");
    return c;
}
}  // namespace

ControlVector sample_controls(const Network& net, const ControlRanges& r, RngStream& rng) {
    ControlVector cv;
    const auto order = generator_order(net);
    cv.p_g.reserve(order.size());
    for (int gi : order) {
        const auto& g = net.generators[gi];
        if (g.p_min > g.p_max) throw std::invalid_argument("sample_controls: p_min > p_max");
        cv.p_g.push_back(rng.uniform(g.p_min, g.p_max));
    }
    const auto vc = net.controlled_bus_indices();
    cv.v_setpoints.reserve(vc.size());
    for (size_t i = 0; i < vc.size(); ++i) cv.v_setpoints.push_back(rng.uniform(r.u_min, r.u_max));

    const auto taps = net.transformer_branch_indices();
    const int tn = grid_count(r.t_min, r.t_max, r.t_step);
    for (size_t i = 0; i < taps.size(); ++i)
        cv.taps.push_back(r.t_min + double(rng.next_index(tn)) * r.t_step);

    const int qn = grid_count(r.qc_min, r.qc_max, r.qc_step);
    for (size_t i = 0; i < net.shunt_capacitors.size(); ++i)
        cv.q_c.push_back((r.qc_min + double(rng.next_index(qn)) * r.qc_step) * net.base_mva);
    return cv;
}

ControlVector base_controls(const Network& net) {
    ControlVector cv;
    for (int gi : generator_order(net)) cv.p_g.push_back(net.generators[gi].p_out);
    for (int bi : net.controlled_bus_indices()) {
        const int id = net.buses[bi].id;
        for (int gi : generator_order(net))
            if (net.generators[gi].bus == id) {
                cv.v_setpoints.push_back(net.generators[gi].v_setpoint);
                break;
            }
    }
    for (int k : net.transformer_branch_indices()) cv.taps.push_back(net.branches[k].tap);
    for (const auto& c : net.shunt_capacitors) cv.q_c.push_back(c.q_switched);
    return cv;
}

Network apply_operating_point(const Network& net, double load_factor, const ControlVector& cv) {
    Network out = scale_loads(net, load_factor);
    const auto order = generator_order(net);
    if (cv.p_g.size() != order.size())
        throw std::invalid_argument("apply_operating_point: p_g size mismatch");
    for (size_t i = 0; i < order.size(); ++i) out.generators[order[i]].p_out = cv.p_g[i];

    const auto vc = net.controlled_bus_indices();
    if (cv.v_setpoints.size() != vc.size())
        throw std::invalid_argument("apply_operating_point: v_setpoints size mismatch");
    for (size_t i = 0; i < vc.size(); ++i) {
        const int id = net.buses[vc[i]].id;
        for (auto& g : out.generators)
            if (g.bus == id) g.v_setpoint = cv.v_setpoints[i];
    }

    const auto taps = net.transformer_branch_indices();
    if (cv.taps.size() != taps.size())
        throw std::invalid_argument("apply_operating_point: taps size mismatch");
    for (size_t i = 0; i < taps.size(); ++i) out.branches[taps[i]].tap = cv.taps[i];

    if (cv.q_c.size() != net.shunt_capacitors.size())
        throw std::invalid_argument("apply_operating_point: q_c size mismatch");
    for (size_t i = 0; i < cv.q_c.size(); ++i) {
        const auto& cap = net.shunt_capacitors[i];
        const int bi = out.bus_index(cap.bus);
        out.buses[bi].b_shunt += cv.q_c[i] - cap.q_switched;
    }
    return out;
}

ReducedNetwork apply_contingency(const Network& net, int branch_index) {
    if (branch_index < 0 || branch_index >= int(net.branches.size()))
        throw std::invalid_argument("apply_contingency: bad branch index");
    Network cut = net;
    cut.branches[branch_index].in_service = false;

    const auto comp = bus_components(cut);
    const int keep = comp[cut.slack_index()];

    ReducedNetwork red;
    std::vector<int> new_index(net.buses.size(), -1);
    for (size_t i = 0; i < cut.buses.size(); ++i) {
        if (comp[i] != keep) continue;
        new_index[i] = int(red.net.buses.size());
        red.net.buses.push_back(cut.buses[i]);
        red.orig_index.push_back(int(i));
    }
    red.dropped_buses = int(net.buses.size() - red.net.buses.size());
    red.net.base_mva = cut.base_mva;
    for (const auto& br : cut.branches) {
        const int f = cut.bus_index(br.from_bus), t = cut.bus_index(br.to_bus);
        if (new_index[f] < 0 || new_index[t] < 0) continue;
        red.net.branches.push_back(br);
    }
    for (const auto& g : cut.generators)
        if (new_index[cut.bus_index(g.bus)] >= 0) red.net.generators.push_back(g);
    for (const auto& c : cut.shunt_capacitors)
        if (new_index[cut.bus_index(c.bus)] >= 0) red.net.shunt_capacitors.push_back(c);
    red.net.rebuild_index();
    return red;
}

std::string FeatureLayout::fingerprint() const {
    Fnv1a h;
    for (const auto& n : names) {
        h.add(n);
        h.add(std::string_view("\x1f"));
    }
    return h.hex();
}

FeatureLayout feature_layout(const Network& net) {
    FeatureLayout lay;
    const auto order = generator_order(net);
    std::map<int, int> per_bus;
    for (int gi : order) per_bus[net.generators[gi].bus]++;

    auto gen_name = [&](const char* prefix, int gi, int seq) {
        const int bus = net.generators[gi].bus;
        std::string n = std::string(prefix) + "_" + std::to_string(bus);
        if (per_bus[bus] > 1) n += "_" + std::to_string(seq);
        return n;
    };

    lay.pg_off = 0;
    {
        std::map<int, int> seq;
        for (int gi : order) lay.names.push_back(gen_name("PG", gi, ++seq[net.generators[gi].bus]));
    }
    lay.qg_off = int(lay.names.size());
    {
        std::map<int, int> seq;
        for (int gi : order) lay.names.push_back(gen_name("QG", gi, ++seq[net.generators[gi].bus]));
    }
    lay.u_off = int(lay.names.size());
    for (const auto& b : net.buses) lay.names.push_back("U_" + std::to_string(b.id));
    lay.t_off = int(lay.names.size());
    for (int k : net.transformer_branch_indices())
        lay.names.push_back("T_" + std::to_string(k + 1));
    lay.qc_off = int(lay.names.size());
    for (const auto& c : net.shunt_capacitors) lay.names.push_back("QC_" + std::to_string(c.bus));
    lay.l_off = int(lay.names.size());
    for (size_t k = 0; k < net.branches.size(); ++k)
        lay.names.push_back("L_" + std::to_string(k + 1));

    lay.n_gen = int(order.size());
    lay.n_bus = int(net.buses.size());
    lay.n_tap = int(net.transformer_branch_indices().size());
    lay.n_cap = int(net.shunt_capacitors.size());
    lay.n_branch = int(net.branches.size());
    lay.dim = int(lay.names.size());
    return lay;
}

namespace {

struct SlotResult {
    Sample sample;
    bool ok = false;
};

Sample record_sample(const Network& base, const FeatureLayout& lay, const Contingency& cont,
                     double lf, const ControlVector& cv, const FlowSolution& sol,
                     const ReducedNetwork& red, double pi_c, bool converged) {
    Sample s;
    s.load_factor = lf;
    s.contingency_id = cont.id;
    s.converged = converged;
    s.response = pi_c;
    s.features.assign(lay.dim, 0.0);

    std::vector<int> red_of_orig(base.buses.size(), -1);
    for (size_t r = 0; r < red.orig_index.size(); ++r) red_of_orig[red.orig_index[r]] = int(r);

    const auto order = generator_order(base);
    std::map<int, int> units_at;
    for (int gi : order) units_at[base.generators[gi].bus]++;
    const int slack_bus_id = base.buses[base.slack_index()].id;

    for (size_t i = 0; i < order.size(); ++i) {
        const auto& g = base.generators[order[i]];
        const int oi = base.bus_index(g.bus);
        const int ri = red_of_orig[oi];
        double pg = cv.p_g[i];
        double qg = 0;
        if (converged) {
            if (ri >= 0) {
                const auto& rb = red.net.buses[ri];
                qg = (sol.q_inj[ri] + rb.q_load) / units_at[g.bus];
                if (g.bus == slack_bus_id) pg = (sol.p_inj[ri] + rb.p_load) / units_at[g.bus];
            } else {
                pg = 0;  // unit stranded off the slack island
            }
        }
        s.features[lay.pg_off + i] = pg / base.base_mva;
        s.features[lay.qg_off + i] = qg / base.base_mva;
    }
    for (size_t i = 0; i < base.buses.size(); ++i) {
        const int ri = red_of_orig[i];
        s.features[lay.u_off + i] = (converged && ri >= 0) ? sol.v_mag[ri] : 0.0;
    }
    for (size_t i = 0; i < cv.taps.size(); ++i) s.features[lay.t_off + i] = cv.taps[i];
    for (size_t i = 0; i < cv.q_c.size(); ++i)
        s.features[lay.qc_off + i] = cv.q_c[i] / base.base_mva;
    for (int k = 0; k < lay.n_branch; ++k) s.features[lay.l_off + k] = 1.0;
    s.features[lay.l_off + cont.branch_index] = 0.0;
    return s;
}

}  // namespace

TrainingSet generate_dataset(const Network& net, const GenConfig& cfg) {
    if (cfg.samples_per_contingency < 1)
        throw std::invalid_argument("generate_dataset: samples_per_contingency must be >= 1");

    TrainingSet ts;
    ts.rng_seed = cfg.seed;
    ts.base_mva = net.base_mva;
    ts.cfg = cfg;
    ts.network_fingerprint = network_fingerprint(net);
    ts.layout = feature_layout(net);
    ts.contingencies = enumerate_contingencies(net);

    const size_t S = ts.contingencies.size() * size_t(cfg.samples_per_contingency);
    ts.samples.resize(S);
    std::atomic<size_t> next{0};
    std::atomic<long> failures{0};

    auto gen_slot = [&](size_t slot) {
        const Contingency& cont = ts.contingencies[slot / cfg.samples_per_contingency];
        ControlVector cv;
        double lf = 1.0;
        for (int attempt = 0; attempt < cfg.retry_budget; ++attempt) {
            RngStream rng = derive_stream(cfg.seed, slot, uint64_t(attempt));
            lf = rng.uniform(cfg.ranges.load_min, cfg.ranges.load_max);
            cv = sample_controls(net, cfg.ranges, rng);
            try {
                Network op = apply_operating_point(net, lf, cv);
                ReducedNetwork red = apply_contingency(op, cont.branch_index);
                FlowSolution sol = solve_nr(red.net);
                if (!sol.converged) continue;
                const double pi =
                    security_index(sol, default_limits(red.net, cfg.limits)).value;
                ts.samples[slot] = record_sample(net, ts.layout, cont, lf, cv, sol, red, pi, true);
                return;
            } catch (const std::exception&) {
                continue;  // divergence and numeric trouble both burn one attempt
            }
        }
        failures.fetch_add(1);
        ReducedNetwork red;  // no solution; placeholder reduction keeps all buses dropped
        FlowSolution dummy;
        ts.samples[slot] =
            record_sample(net, ts.layout, cont, lf, cv, dummy, red, 0.0, false);
    };

    const int jobs = std::max(1, cfg.jobs);
    if (jobs == 1) {
        for (size_t s = 0; s < S; ++s) gen_slot(s);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w)
            pool.emplace_back([&] {
                for (size_t s; (s = next.fetch_add(1)) < S;) gen_slot(s);
            });
        for (auto& t : pool) t.join();
    }
    if (failures.load() == long(S))
        throw std::runtime_error("generate_dataset: no draw converged for any slot");

    // 80/20 shuffled split over converged rows
    std::vector<int> conv;
    for (size_t i = 0; i < S; ++i)
        if (ts.samples[i].converged) conv.push_back(int(i));
    RngStream shuf = derive_stream(cfg.seed, uint64_t(-1), 0x53504c4954ULL);  // "SPLIT"
    for (size_t i = conv.size(); i > 1; --i) {
        const size_t j = shuf.next_index(i);
        std::swap(conv[i - 1], conv[j]);
    }
    const size_t n_test = size_t(std::llround(0.2 * double(conv.size())));
    ts.test_idx.assign(conv.begin(), conv.begin() + n_test);
    ts.train_idx.assign(conv.begin() + n_test, conv.end());
    std::sort(ts.test_idx.begin(), ts.test_idx.end());
    std::sort(ts.train_idx.begin(), ts.train_idx.end());
    return ts;
}

std::string dataset_csv(const TrainingSet& ts) {
    std::ostringstream os;
    os << "load_factor,contingency";
    for (const auto& n : ts.layout.names) os << ',' << n;
    os << ",pi_c,converged\n";
    for (const auto& s : ts.samples) {
        os << format_double(s.load_factor) << ',' << s.contingency_id;
        for (double f : s.features) os << ',' << format_double(f);
        os << ',' << format_double(s.response) << ',' << (s.converged ? '1' : '0') << "\n";
    }
    return os.str();
}

namespace {
std::string iso_now() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}
}  // namespace

nlohmann::ordered_json dataset_sidecar(const TrainingSet& ts, bool with_timestamp) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["network_fingerprint"] = ts.network_fingerprint;
    j["seed"] = ts.rng_seed;
    j["base_mva"] = ts.base_mva;
    j["samples_per_contingency"] = ts.cfg.samples_per_contingency;
    j["retry_budget"] = ts.cfg.retry_budget;
    const auto& r = ts.cfg.ranges;
    j["ranges"] = {{"load", {r.load_min, r.load_max}},
                   {"u", {r.u_min, r.u_max}},
                   {"t", {r.t_min, r.t_max, r.t_step}},
                   {"qc", {r.qc_min, r.qc_max, r.qc_step}}};
    j["limits"] = {{"v_alarm_frac", ts.cfg.limits.v_alarm_frac},
                   {"v_security_frac", ts.cfg.limits.v_security_frac},
                   {"p_alarm_frac", ts.cfg.limits.p_alarm_frac},
                   {"nominal_v", ts.cfg.limits.nominal_v},
                   {"exponent_n", ts.cfg.limits.exponent_n}};
    auto& lay = j["layout"];
    lay["dim"] = ts.layout.dim;
    lay["fingerprint"] = ts.layout.fingerprint();
    lay["blocks"] = {{"pg", {ts.layout.pg_off, ts.layout.n_gen}},
                     {"qg", {ts.layout.qg_off, ts.layout.n_gen}},
                     {"u", {ts.layout.u_off, ts.layout.n_bus}},
                     {"t", {ts.layout.t_off, ts.layout.n_tap}},
                     {"qc", {ts.layout.qc_off, ts.layout.n_cap}},
                     {"l", {ts.layout.l_off, ts.layout.n_branch}}};
    lay["names"] = ts.layout.names;
    auto& jc = j["contingencies"] = nlohmann::ordered_json::array();
    for (const auto& c : ts.contingencies)
        jc.push_back({{"id", c.id},
                      {"branch_index", c.branch_index},
                      {"from", c.from_bus},
                      {"to", c.to_bus},
                      {"islanded_buses", c.islanded_buses}});
    int conv = 0;
    for (const auto& s : ts.samples) conv += s.converged;
    j["counts"] = {{"total", ts.samples.size()}, {"converged", conv}};
    j["split"] = {{"train", ts.train_idx}, {"test", ts.test_idx}};
    if (with_timestamp) j["generated_at"] = iso_now();
    return j;
}

void save_dataset(const TrainingSet& ts, const std::string& dir, bool with_timestamp) {
    fs::create_directories(dir);
    {
        std::ofstream f(fs::path(dir) / "dataset.csv", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write dataset.csv in " + dir);
        f << dataset_csv(ts);
    }
    {
        std::ofstream f(fs::path(dir) / "dataset.json", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write dataset.json in " + dir);
        f << dataset_sidecar(ts, with_timestamp).dump(2) << "\n";
    }
}

TrainingSet load_dataset(const std::string& dir) {
    std::ifstream jf(fs::path(dir) / "dataset.json");
    if (!jf) throw std::runtime_error("cannot open dataset.json in " + dir);
    nlohmann::ordered_json j = nlohmann::ordered_json::parse(jf);

    TrainingSet ts;
    ts.network_fingerprint = j.at("network_fingerprint").get<std::string>();
    ts.rng_seed = j.at("seed").get<uint64_t>();
    ts.base_mva = j.at("base_mva");
    ts.cfg.seed = ts.rng_seed;
    ts.cfg.samples_per_contingency = j.at("samples_per_contingency").get<int>();
    ts.cfg.retry_budget = j.at("retry_budget").get<int>();
    const auto& r = j.at("ranges");
    ts.cfg.ranges.load_min = r.at("load")[0];
    ts.cfg.ranges.load_max = r.at("load")[1];
    ts.cfg.ranges.u_min = r.at("u")[0];
    ts.cfg.ranges.u_max = r.at("u")[1];
    ts.cfg.ranges.t_min = r.at("t")[0];
    ts.cfg.ranges.t_max = r.at("t")[1];
    ts.cfg.ranges.t_step = r.at("t")[2];
    ts.cfg.ranges.qc_min = r.at("qc")[0];
    ts.cfg.ranges.qc_max = r.at("qc")[1];
    ts.cfg.ranges.qc_step = r.at("qc")[2];
    const auto& lm = j.at("limits");
    ts.cfg.limits.v_alarm_frac = lm.at("v_alarm_frac");
    ts.cfg.limits.v_security_frac = lm.at("v_security_frac");
    ts.cfg.limits.p_alarm_frac = lm.at("p_alarm_frac");
    ts.cfg.limits.nominal_v = lm.at("nominal_v");
    ts.cfg.limits.exponent_n = lm.at("exponent_n");

    const auto& lay = j.at("layout");
    ts.layout.dim = lay.at("dim");
    ts.layout.names = lay.at("names").get<std::vector<std::string>>();
    const auto& blocks = lay.at("blocks");
    ts.layout.pg_off = blocks.at("pg")[0];
    ts.layout.n_gen = blocks.at("pg")[1];
    ts.layout.qg_off = blocks.at("qg")[0];
    ts.layout.u_off = blocks.at("u")[0];
    ts.layout.n_bus = blocks.at("u")[1];
    ts.layout.t_off = blocks.at("t")[0];
    ts.layout.n_tap = blocks.at("t")[1];
    ts.layout.qc_off = blocks.at("qc")[0];
    ts.layout.n_cap = blocks.at("qc")[1];
    ts.layout.l_off = blocks.at("l")[0];
    ts.layout.n_branch = blocks.at("l")[1];
    if (ts.layout.fingerprint() != lay.at("fingerprint").get<std::string>())
        throw std::runtime_error("dataset layout fingerprint mismatch");

    for (const auto& c : j.at("contingencies"))
        ts.contingencies.push_back({c.at("id").get<std::string>(), c.at("branch_index").get<int>(),
                                    c.at("from").get<int>(), c.at("to").get<int>(),
                                    c.at("islanded_buses").get<int>()});
    ts.train_idx = j.at("split").at("train").get<std::vector<int>>();
    ts.test_idx = j.at("split").at("test").get<std::vector<int>>();

    std::ifstream cf(fs::path(dir) / "dataset.csv");
    if (!cf) throw std::runtime_error("cannot open dataset.csv in " + dir);
    std::string line;
    if (!std::getline(cf, line)) throw std::runtime_error("empty dataset.csv");
    {
        std::ostringstream expect;
        expect << "load_factor,contingency";
        for (const auto& n : ts.layout.names) expect << ',' << n;
        expect << ",pi_c,converged";
        if (line != expect.str()) throw std::runtime_error("dataset.csv header mismatch");
    }
    while (std::getline(cf, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        size_t start = 0;
        while (true) {
            const size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (int(cells.size()) != ts.layout.dim + 4)
            throw std::runtime_error("dataset.csv row has wrong column count");
        Sample s;
        s.load_factor = parse_double(cells[0]);
        s.contingency_id = cells[1];
        s.features.resize(ts.layout.dim);
        for (int k = 0; k < ts.layout.dim; ++k) s.features[k] = parse_double(cells[2 + k]);
        s.response = parse_double(cells[2 + ts.layout.dim]);
        s.converged = cells[3 + ts.layout.dim] == "1";
        ts.samples.push_back(std::move(s));
    }
    return ts;
}

}  // namespace ossa
