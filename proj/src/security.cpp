#include "ossa/security.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ossa/util.hpp"

namespace ossa {

const char* to_string(SecurityState s) {
    switch (s) {
        case SecurityState::secure: return "secure";
        case SecurityState::alarmed: return "alarmed";
        case SecurityState::insecure: return "insecure";
    }
    return "?";
}

SecurityLimits default_limits(const Network& net, const LimitConfig& cfg) {
    const int n = int(net.buses.size());
    const int m = int(net.branches.size());
    SecurityLimits lim;
    lim.exponent_n = cfg.exponent_n;
    lim.v_alarm_max = Eigen::VectorXd::Constant(n, cfg.nominal_v * (1 + cfg.v_alarm_frac));
    lim.v_alarm_min = Eigen::VectorXd::Constant(n, cfg.nominal_v * (1 - cfg.v_alarm_frac));
    lim.v_security_max = Eigen::VectorXd::Constant(n, cfg.nominal_v * (1 + cfg.v_security_frac));
    lim.v_security_min = Eigen::VectorXd::Constant(n, cfg.nominal_v * (1 - cfg.v_security_frac));
    lim.p_security.resize(m);
    lim.p_alarm.resize(m);
    for (int k = 0; k < m; ++k) {
        const double ph = net.branches[k].flow_security_limit;
        lim.p_security[k] = ph;
        lim.p_alarm[k] = std::isinf(ph) ? ph : cfg.p_alarm_frac * ph;
    }
    return lim;
}

SecurityState classify(double pi_c) {
    if (pi_c < 0) throw std::invalid_argument("classify: negative PI_c");
    if (pi_c == 0) return SecurityState::secure;
    if (pi_c <= 1) return SecurityState::alarmed;
    return SecurityState::insecure;
}

PIcResult security_index(const FlowSolution& sol, const SecurityLimits& lim) {
    if (!sol.converged)
        throw std::invalid_argument("security_index: unconverged solution");
    const int n = int(sol.v_mag.size());
    const int m = int(sol.flows.size());
    if (lim.v_alarm_max.size() != n || lim.p_security.size() != m)
        throw std::invalid_argument("security_index: dimension mismatch");

    PIcResult r;
    r.q_v_max = Eigen::VectorXd::Zero(n);
    r.q_v_min = Eigen::VectorXd::Zero(n);
    r.q_p = Eigen::VectorXd::Zero(m);

    const double p2n = 2.0 * lim.exponent_n;
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        const double u = sol.v_mag[i];
        if (u > lim.v_alarm_max[i]) {
            r.q_v_max[i] = (u - lim.v_alarm_max[i]) / (lim.v_security_max[i] - lim.v_alarm_max[i]);
            acc += std::pow(r.q_v_max[i], p2n);
        } else if (u < lim.v_alarm_min[i]) {
            r.q_v_min[i] = (lim.v_alarm_min[i] - u) / (lim.v_alarm_min[i] - lim.v_security_min[i]);
            acc += std::pow(r.q_v_min[i], p2n);
        }
    }
    for (int k = 0; k < m; ++k) {
        if (!sol.flows[k].in_service || std::isinf(lim.p_security[k])) continue;
        const double p = std::max(std::abs(sol.flows[k].p_from), std::abs(sol.flows[k].p_to));
        if (p > lim.p_alarm[k]) {
            r.q_p[k] = (p - lim.p_alarm[k]) / (lim.p_security[k] - lim.p_alarm[k]);
            acc += std::pow(r.q_p[k], p2n);
        }
    }
    r.value = acc == 0 ? 0.0 : std::pow(acc, 1.0 / p2n);
    r.state = classify(r.value);
    return r;
}

namespace {
// "L10" sorts after "L9": compare (alpha prefix, numeric suffix)
std::pair<std::string, long> id_key(const std::string& id) {
    size_t i = 0;
    while (i < id.size() && !isdigit((unsigned char)id[i])) ++i;
    long num = -1;
    if (i < id.size()) num = std::stol(id.substr(i));
    return {id.substr(0, i), num};
}
}  // namespace

RankingReport rank_contingencies(std::vector<RankRow> rows, std::vector<std::string> diverged) {
    for (const auto& r : rows)
        if (std::isnan(r.pi_c))
            throw std::invalid_argument("rank_contingencies: NaN PI_c for " + r.contingency_id);
    std::stable_sort(rows.begin(), rows.end(), [](const RankRow& a, const RankRow& b) {
        if (a.pi_c != b.pi_c) return a.pi_c > b.pi_c;
        return id_key(a.contingency_id) < id_key(b.contingency_id);
    });
    RankingReport rep;
    rep.rows = std::move(rows);
    rep.diverged = std::move(diverged);
    return rep;
}

std::string ranking_to_csv(const RankingReport& rep) {
    bool paired = false;
    for (const auto& r : rep.rows) paired |= r.oracle.has_value() || r.predicted.has_value();
    std::ostringstream os;
    os << "rank,contingency,from,to,pi_c,state";
    if (paired) os << ",oracle,predicted,rel_err_pct";
    os << "\n";
    int rank = 1;
    for (const auto& r : rep.rows) {
        os << rank++ << ',' << r.contingency_id << ',' << r.from_bus << ',' << r.to_bus << ','
           << format_double(r.pi_c) << ',' << to_string(r.state);
        if (paired) {
            os << ',' << (r.oracle ? format_double(*r.oracle) : "") << ','
               << (r.predicted ? format_double(*r.predicted) : "") << ','
               << (r.rel_err_pct ? format_double(*r.rel_err_pct) : "");
        }
        os << "\n";
    }
    for (const auto& id : rep.diverged) {
        os << "," << id << ",,,,diverged";
        if (paired) os << ",,,";
        os << "\n";
    }
    return os.str();
}

nlohmann::ordered_json ranking_to_json(const RankingReport& rep) {
    nlohmann::ordered_json j;
    auto& rows = j["rows"] = nlohmann::ordered_json::array();
    int rank = 1;
    for (const auto& r : rep.rows) {
        nlohmann::ordered_json row;
        row["rank"] = rank++;
        row["contingency"] = r.contingency_id;
        row["from"] = r.from_bus;
        row["to"] = r.to_bus;
        row["pi_c"] = r.pi_c;
        row["state"] = to_string(r.state);
        if (r.oracle) row["oracle"] = *r.oracle;
        if (r.predicted) row["predicted"] = *r.predicted;
        if (r.rel_err_pct) row["rel_err_pct"] = *r.rel_err_pct;
        rows.push_back(std::move(row));
    }
    j["diverged"] = rep.diverged;
    return j;
}

}  // namespace ossa
