#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "ossa/netmodel.hpp"
#include "ossa/powerflow.hpp"
#include "ossa/security.hpp"
#include "ossa/util.hpp"

namespace ossa {

struct Contingency {
    std::string id;        // "L<k>", k = 1-based branch index
    int branch_index = 0;  // 0-based into Network::branches
    int from_bus = 0, to_bus = 0;
    int islanded_buses = 0;  // buses cut off from the slack when this line trips
};

std::vector<Contingency> enumerate_contingencies(const Network& net);

struct ControlRanges {
    double u_min = 0.95, u_max = 1.05;             // p.u. voltage setpoints
    double t_min = 0.9, t_max = 1.1, t_step = 0.0125;
    double qc_min = 0.0, qc_max = 0.5, qc_step = 0.01;  // p.u.
    double load_min = 0.5, load_max = 1.5;
};

struct ControlVector {
    std::vector<double> p_g;          // MW, per generator ordered by bus id
    std::vector<double> v_setpoints;  // p.u., per voltage-controlled bus (ascending id)
    std::vector<double> taps;         // p.u., per adjustable transformer (branch order)
    std::vector<double> q_c;          // MVAr, per shunt capacitor (bus order)
};

// generator indices ordered by (bus id, file position); the order used by
// ControlVector::p_g and the P_G/Q_G feature blocks
std::vector<int> generator_order(const Network& net);

ControlVector sample_controls(const Network& net, const ControlRanges& rng_cfg, RngStream& rng);
ControlVector base_controls(const Network& net);
Network apply_operating_point(const Network& net, double load_factor, const ControlVector& cv);

struct ReducedNetwork {
    Network net;                  // slack island only
    std::vector<int> orig_index;  // reduced bus -> original bus index
    int dropped_buses = 0;
};
// takes the branch out of service and keeps the slack's island
ReducedNetwork apply_contingency(const Network& net, int branch_index);

struct FeatureLayout {
    std::vector<std::string> names;
    int pg_off = 0, qg_off = 0, u_off = 0, t_off = 0, qc_off = 0, l_off = 0;
    int n_gen = 0, n_bus = 0, n_tap = 0, n_cap = 0, n_branch = 0;
    int dim = 0;
    std::string fingerprint() const;
};
FeatureLayout feature_layout(const Network& net);

struct Sample {
    std::vector<double> features;
    double response = 0;  // PI_c
    double load_factor = 1.0;
    std::string contingency_id;
    bool converged = false;
};

struct GenConfig {
    int samples_per_contingency = 50;
    ControlRanges ranges;
    uint64_t seed = 42;
    int retry_budget = 10;
    int jobs = 1;
    LimitConfig limits;
};

struct TrainingSet {
    std::vector<Sample> samples;
    std::vector<int> train_idx, test_idx;  // ascending, disjoint, converged rows only
    uint64_t rng_seed = 0;
    double base_mva = 100.0;
    std::string network_fingerprint;
    FeatureLayout layout;
    std::vector<Contingency> contingencies;
    GenConfig cfg;
};

TrainingSet generate_dataset(const Network& net, const GenConfig& cfg);

std::string dataset_csv(const TrainingSet& ts);
nlohmann::ordered_json dataset_sidecar(const TrainingSet& ts, bool with_timestamp);
void save_dataset(const TrainingSet& ts, const std::string& dir, bool with_timestamp);
TrainingSet load_dataset(const std::string& dir);

}  // namespace ossa
