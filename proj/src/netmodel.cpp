#include "ossa/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include "ossa/util.hpp"

namespace ossa {

int Network::bus_index(int id) const {
    auto it = bus_pos.find(id);
    if (it == bus_pos.end())
        throw ParseError("unknown bus " + std::to_string(id));
    return it->second;
}

int Network::slack_index() const {
    for (size_t i = 0; i < buses.size(); ++i)
        if (buses[i].kind == BusKind::slack) return int(i);
    throw std::logic_error("no slack bus");
}

void Network::rebuild_index() {
    bus_pos.clear();
    for (size_t i = 0; i < buses.size(); ++i) bus_pos[buses[i].id] = int(i);
}

std::vector<int> Network::controlled_bus_indices() const {
    std::set<int> ids;
    for (const auto& g : generators) ids.insert(g.bus);
    std::vector<int> out;
    for (int id : ids) out.push_back(bus_index(id));
    return out;
}

std::vector<int> Network::transformer_branch_indices() const {
    std::vector<int> out;
    for (size_t k = 0; k < branches.size(); ++k)
        if (branches[k].is_transformer()) out.push_back(int(k));
    return out;
}

namespace {

struct RawTable {
    std::vector<std::vector<double>> rows;
};

// strips MATLAB comments, finds "mpc.<name> = [...];" numeric blocks and the
// baseMVA scalar
struct CaseText {
    double base_mva = 0;
    bool has_base = false;
    std::unordered_map<std::string, RawTable> tables;
};

CaseText scan_case(const std::string& text) {
    CaseText out;
    std::string cur_table;
    std::vector<double> cur_row;
    int cur_rownum = 1;
    bool in_matrix = false;

    std::istringstream ls(text);
    std::string line;
    while (std::getline(ls, line)) {
        if (auto c = line.find('%'); c != std::string::npos) line.erase(c);

        if (!in_matrix) {
            auto mpc = line.find("mpc.");
            if (mpc == std::string::npos) continue;
            auto eq = line.find('=', mpc);
            if (eq == std::string::npos) continue;
            std::string name = line.substr(mpc + 4, eq - mpc - 4);
            name.erase(std::remove_if(name.begin(), name.end(), ::isspace), name.end());
            std::string rhs = line.substr(eq + 1);
            auto br = rhs.find('[');
            if (br == std::string::npos) {
                if (name == "baseMVA") {
                    std::istringstream vs(rhs);
                    double v;
                    if (vs >> v) {
                        out.base_mva = v;
                        out.has_base = true;
                    }
                }
                continue;  // scalar or string assignment
            }
            cur_table = name;
            out.tables[cur_table];
            cur_row.clear();
            cur_rownum = 1;
            in_matrix = true;
            line = rhs.substr(br + 1);
        }

        // inside a matrix: consume tokens until the closing ']'
        bool done = false;
        if (auto close = line.find(']'); close != std::string::npos) {
            line.erase(close);
            done = true;
        }
        std::istringstream ts(line);
        std::string tok;
        while (ts >> tok) {
            bool row_end = false;
            if (tok.back() == ';') {
                tok.pop_back();
                row_end = true;
            }
            if (!tok.empty()) {
                char* endp = nullptr;
                double v = std::strtod(tok.c_str(), &endp);
                if (endp != tok.c_str() + tok.size())
                    throw ParseError(cur_table + " row " + std::to_string(cur_rownum) +
                                     ": bad number at column " +
                                     std::to_string(cur_row.size() + 1) + " ('" + tok + "')");
                cur_row.push_back(v);
            }
            if (row_end && !cur_row.empty()) {
                out.tables[cur_table].rows.push_back(cur_row);
                cur_row.clear();
                ++cur_rownum;
            }
        }
        if (done) {
            if (!cur_row.empty()) {
                out.tables[cur_table].rows.push_back(cur_row);
                cur_row.clear();
            }
            in_matrix = false;
            cur_table.clear();
        }
    }
    return out;
}

const RawTable& need_table(const CaseText& ct, const std::string& name, size_t min_cols) {
    auto it = ct.tables.find(name);
    if (it == ct.tables.end() || it->second.rows.empty())
        throw ParseError("missing table '" + name + "'");
    for (size_t r = 0; r < it->second.rows.size(); ++r)
        if (it->second.rows[r].size() < min_cols)
            throw ParseError(name + " row " + std::to_string(r + 1) + ": expected at least " +
                             std::to_string(min_cols) + " columns, got " +
                             std::to_string(it->second.rows[r].size()));
    return it->second;
}

}  // namespace

Network parse_case(const std::string& text) {
    CaseText ct = scan_case(text);
    if (!ct.has_base) throw ParseError("missing baseMVA scalar");

    Network net;
    net.base_mva = ct.base_mva;

    const RawTable& bus = need_table(ct, "bus", 13);
    const RawTable& gen = need_table(ct, "gen", 10);
    const RawTable& branch = need_table(ct, "branch", 11);

    int slack_count = 0;
    for (size_t r = 0; r < bus.rows.size(); ++r) {
        const auto& row = bus.rows[r];
        Bus b;
        b.id = int(row[0]);
        int type = int(row[1]);
        switch (type) {
            case 3: b.kind = BusKind::slack; ++slack_count; break;
            case 2: b.kind = BusKind::pv; break;
            case 1:
            case 4: b.kind = BusKind::pq; break;
            default:
                throw ParseError("bus row " + std::to_string(r + 1) + ": bad type " +
                                 std::to_string(type) + " at column 2");
        }
        b.p_load = row[2];
        b.q_load = row[3];
        b.g_shunt = row[4];
        b.b_shunt = row[5];
        b.v_mag = row[7];
        b.v_ang = row[8];
        b.base_kv = row[9];
        if (b.v_mag <= 0)
            throw ParseError("bus row " + std::to_string(r + 1) + ": non-positive Vm at column 8");
        net.buses.push_back(b);
    }
    if (slack_count == 0) throw ParseError("no slack bus");
    if (slack_count > 1) throw ParseError("multiple slack buses");
    net.rebuild_index();
    if (net.bus_pos.size() != net.buses.size()) throw ParseError("duplicate bus ids");

    for (size_t r = 0; r < gen.rows.size(); ++r) {
        const auto& row = gen.rows[r];
        if (row[7] <= 0) continue;  // out-of-service unit
        Generator g;
        g.bus = int(row[0]);
        if (!net.bus_pos.count(g.bus))
            throw ParseError("gen row " + std::to_string(r + 1) + ": unknown bus " +
                             std::to_string(g.bus) + " at column 1");
        g.p_out = row[1];
        g.q_out = row[2];
        g.q_max = row[3];
        g.q_min = row[4];
        g.v_setpoint = row[5];
        g.p_max = row[8];
        g.p_min = row[9];
        if (g.p_min > g.p_max)
            throw ParseError("gen row " + std::to_string(r + 1) + ": p_min > p_max");
        if (g.q_min > g.q_max)
            throw ParseError("gen row " + std::to_string(r + 1) + ": q_min > q_max");
        net.generators.push_back(g);
    }

    // a declared pv bus without an in-service unit behaves as pq
    {
        std::set<int> gen_buses;
        for (const auto& g : net.generators) gen_buses.insert(g.bus);
        for (auto& b : net.buses)
            if (b.kind == BusKind::pv && !gen_buses.count(b.id)) b.kind = BusKind::pq;
    }

    for (size_t r = 0; r < branch.rows.size(); ++r) {
        const auto& row = branch.rows[r];
        Branch br;
        br.from_bus = int(row[0]);
        br.to_bus = int(row[1]);
        if (!net.bus_pos.count(br.from_bus))
            throw ParseError("branch row " + std::to_string(r + 1) + ": unknown bus " +
                             std::to_string(br.from_bus) + " at column 1");
        if (!net.bus_pos.count(br.to_bus))
            throw ParseError("branch row " + std::to_string(r + 1) + ": unknown bus " +
                             std::to_string(br.to_bus) + " at column 2");
        if (br.from_bus == br.to_bus)
            throw ParseError("branch row " + std::to_string(r + 1) + ": self-loop");
        br.r = row[2];
        br.x = row[3];
        if (br.r == 0 && br.x == 0)
            throw ParseError("branch row " + std::to_string(r + 1) + ": r = x = 0");
        br.b_charging = row[4];
        br.flow_security_limit =
            row[5] > 0 ? row[5] : std::numeric_limits<double>::infinity();
        br.tap = row[8] != 0 ? row[8] : 1.0;
        br.shift = row[9];
        br.in_service = row[10] > 0;
        net.branches.push_back(br);
    }

    // switched capacitors: a positive bus shunt injection marks one
    // (sampling grid defaults: 0..0.5 p.u. in 0.01 p.u. steps)
    for (const auto& b : net.buses) {
        if (b.b_shunt > 0) {
            ShuntCapacitor c;
            c.bus = b.id;
            c.q_switched = b.b_shunt;
            c.q_min = 0;
            c.q_max = std::max(0.5 * net.base_mva, b.b_shunt);
            c.step = 0.01 * net.base_mva;
            net.shunt_capacitors.push_back(c);
        }
    }

    return net;
}

Network parse_case_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open case file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_case(ss.str());
}

Network scale_loads(const Network& net, double factor) {
    if (!(factor > 0)) throw std::invalid_argument("scale_loads: factor must be positive");
    Network out = net;
    for (auto& b : out.buses) {
        b.p_load *= factor;
        b.q_load *= factor;
    }
    return out;
}

std::vector<int> bus_components(const Network& net) {
    const int n = int(net.buses.size());
    std::vector<std::vector<int>> adj(n);
    for (const auto& br : net.branches) {
        if (!br.in_service) continue;
        int f = net.bus_index(br.from_bus), t = net.bus_index(br.to_bus);
        adj[f].push_back(t);
        adj[t].push_back(f);
    }
    std::vector<int> comp(n, -1);
    int cid = 0;
    for (int s = 0; s < n; ++s) {
        if (comp[s] >= 0) continue;
        std::queue<int> q;
        q.push(s);
        comp[s] = cid;
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int v : adj[u])
                if (comp[v] < 0) {
                    comp[v] = cid;
                    q.push(v);
                }
        }
        ++cid;
    }
    return comp;
}

std::string network_fingerprint(const Network& net) {
    Fnv1a h;
    h.add(net.base_mva);
    h.add(int64_t(net.buses.size()));
    for (const auto& b : net.buses) {
        h.add(int64_t(b.id));
        h.add(int64_t(b.kind));
        h.add(b.p_load);
        h.add(b.q_load);
        h.add(b.g_shunt);
        h.add(b.b_shunt);
        h.add(b.base_kv);
    }
    h.add(int64_t(net.branches.size()));
    for (const auto& br : net.branches) {
        h.add(int64_t(br.from_bus));
        h.add(int64_t(br.to_bus));
        h.add(br.r);
        h.add(br.x);
        h.add(br.b_charging);
        h.add(br.tap);
        h.add(br.shift);
        h.add(std::isinf(br.flow_security_limit) ? -1.0 : br.flow_security_limit);
        h.add(int64_t(br.in_service));
    }
    h.add(int64_t(net.generators.size()));
    for (const auto& g : net.generators) {
        h.add(int64_t(g.bus));
        h.add(g.p_min);
        h.add(g.p_max);
        h.add(g.q_min);
        h.add(g.q_max);
    }
    return h.hex();
}

nlohmann::ordered_json network_to_json(const Network& net) {
    nlohmann::ordered_json j;
    j["base_mva"] = net.base_mva;
    j["fingerprint"] = network_fingerprint(net);
    auto& jb = j["buses"] = nlohmann::ordered_json::array();
    for (const auto& b : net.buses) {
        const char* kind = b.kind == BusKind::slack ? "slack" : b.kind == BusKind::pv ? "pv" : "pq";
        jb.push_back({{"id", b.id},
                      {"kind", kind},
                      {"p_load", b.p_load},
                      {"q_load", b.q_load},
                      {"g_shunt", b.g_shunt},
                      {"b_shunt", b.b_shunt},
                      {"v_mag", b.v_mag},
                      {"v_ang", b.v_ang},
                      {"base_kv", b.base_kv}});
    }
    auto& jr = j["branches"] = nlohmann::ordered_json::array();
    for (const auto& br : net.branches) {
        nlohmann::ordered_json row = {{"from", br.from_bus}, {"to", br.to_bus},
                                      {"r", br.r},           {"x", br.x},
                                      {"b", br.b_charging},  {"tap", br.tap},
                                      {"shift", br.shift},   {"in_service", br.in_service}};
        if (!std::isinf(br.flow_security_limit)) row["rate_mw"] = br.flow_security_limit;
        jr.push_back(row);
    }
    auto& jg = j["generators"] = nlohmann::ordered_json::array();
    for (const auto& g : net.generators)
        jg.push_back({{"bus", g.bus},
                      {"p_out", g.p_out},
                      {"q_out", g.q_out},
                      {"p_min", g.p_min},
                      {"p_max", g.p_max},
                      {"q_min", g.q_min},
                      {"q_max", g.q_max},
                      {"v_setpoint", g.v_setpoint}});
    auto& jc = j["shunt_capacitors"] = nlohmann::ordered_json::array();
    for (const auto& c : net.shunt_capacitors)
        jc.push_back({{"bus", c.bus},
                      {"q_switched", c.q_switched},
                      {"q_min", c.q_min},
                      {"q_max", c.q_max},
                      {"step", c.step}});
    return j;
}

}  // namespace ossa
