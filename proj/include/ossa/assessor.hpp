#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ossa/lasso.hpp"
#include "ossa/netmodel.hpp"
#include "ossa/scenario.hpp"
#include "ossa/security.hpp"

namespace ossa {

struct LoadBucket {
    std::string label;
    double lo = 0, hi = 0;        // [lo, hi) — last bucket closes at hi
    bool upper_inclusive = false;
};

std::vector<LoadBucket> default_buckets();
std::vector<LoadBucket> buckets_from_boundaries(const std::vector<double>& bounds);
int bucket_of(const std::vector<LoadBucket>& buckets, double load_factor);

struct OperatingPoint {
    double load_factor = 1.0;
    ControlVector controls;
    std::vector<double> recorded_q_g;  // MVAr per generator (bus-id order)
    std::vector<double> recorded_u;    // p.u. per bus; empty = fill from setpoints
};

// operating point from explicit controls; records Q_G and U off one solve
OperatingPoint operating_point_from_controls(const Network& net, double load_factor,
                                             const ControlVector& controls);
// same, with the case-file controls
OperatingPoint base_operating_point(const Network& net, double load_factor = 1.0);

struct AssessorConfig {
    std::vector<LoadBucket> buckets = default_buckets();
    MsaConfig lasso;
    LimitConfig limits;
};

struct Assessor {
    std::vector<LoadBucket> buckets;
    std::vector<LassoModel> models;  // one per bucket
    std::string network_fingerprint;
    FeatureLayout layout;
    std::vector<Contingency> contingencies;
    LimitConfig limits;
    double base_mva = 100.0;
};

Assessor train_assessor(const TrainingSet& ts, const AssessorConfig& cfg);

std::pair<double, SecurityState> assess(const Assessor& a, const OperatingPoint& op,
                                        const std::string& contingency_id);
RankingReport screen_and_rank(const Assessor& a, const OperatingPoint& op);
std::vector<RankRow> screened_rows(const RankingReport& rep);

struct EvalSampleRow {
    int sample_index = 0;
    std::string contingency_id;
    double load_factor = 0;
    std::string bucket;
    double oracle = 0, predicted = 0;
    std::optional<double> rel_err_pct;  // only when oracle > 0
    SecurityState oracle_state = SecurityState::secure;
    SecurityState predicted_state = SecurityState::secure;
};

struct EvaluationReport {
    std::vector<EvalSampleRow> rows;
    double mean_abs_rel_err_pct = 0;
    double max_abs_rel_err_pct = 0;
    int n_error_rows = 0;

    // ranking agreement at the fixed operating point
    RankingReport point_ranking;          // oracle + predicted columns
    int rank_exact_matches = 0;           // same position in both orders
    int rank_pair_inversions = 0;         // inverted pairs with oracle gap >= threshold
    int rank_pairs_checked = 0;
    double rank_gap_threshold_pct = 1.0;
    double spearman_rho = 0;

    long confusion[3][3] = {};  // [oracle state][predicted state]

    double oracle_sweep_seconds = 0;
    double prediction_sweep_seconds = 0;
    long prediction_path_solves = 0;
};

EvaluationReport evaluate(const Assessor& a, const TrainingSet& ts, const Network& net,
                          const OperatingPoint* fixed_point = nullptr, int jobs = 1);

std::string evaluation_csv(const EvaluationReport& rep);
nlohmann::ordered_json evaluation_summary(const EvaluationReport& rep);

void save_assessor(const Assessor& a, const std::string& dir, bool with_timestamp);
Assessor load_assessor(const std::string& dir);

}  // namespace ossa
