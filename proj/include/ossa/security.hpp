#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ossa/netmodel.hpp"
#include "ossa/powerflow.hpp"

namespace ossa {

struct LimitConfig {
    double v_alarm_frac = 0.05;     // A = nominal * (1 +/- this)
    double v_security_frac = 0.07;  // H = nominal * (1 +/- this)
    double p_alarm_frac = 0.8;      // P_A = this * P_H
    double nominal_v = 1.0;         // p.u.
    int exponent_n = 2;
};

struct SecurityLimits {
    Eigen::VectorXd v_alarm_max, v_alarm_min;        // A_i, per bus
    Eigen::VectorXd v_security_max, v_security_min;  // H_i, per bus
    Eigen::VectorXd p_alarm, p_security;             // P_A, P_H per branch, MW
    int exponent_n = 2;
};

enum class SecurityState { secure, alarmed, insecure };
const char* to_string(SecurityState s);

struct PIcResult {
    double value = 0;
    Eigen::VectorXd q_v_max, q_v_min;  // per bus
    Eigen::VectorXd q_p;               // per branch
    SecurityState state = SecurityState::secure;
};

SecurityLimits default_limits(const Network& net, const LimitConfig& cfg = {});
PIcResult security_index(const FlowSolution& sol, const SecurityLimits& lim);
SecurityState classify(double pi_c);

struct RankRow {
    std::string contingency_id;
    int from_bus = 0, to_bus = 0;
    double pi_c = 0;
    SecurityState state = SecurityState::secure;
    std::optional<double> oracle, predicted, rel_err_pct;
};

struct RankingReport {
    std::vector<RankRow> rows;             // sorted: pi_c desc, id asc
    std::vector<std::string> diverged;     // contingency ids with no solution
};

RankingReport rank_contingencies(std::vector<RankRow> rows,
                                 std::vector<std::string> diverged = {});
std::string ranking_to_csv(const RankingReport& rep);
nlohmann::ordered_json ranking_to_json(const RankingReport& rep);

}  // namespace ossa
