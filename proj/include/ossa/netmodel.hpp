#pragma once

#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace ossa {

enum class BusKind { slack, pv, pq };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::pq;
    double p_load = 0, q_load = 0;   // MW / MVAr
    double g_shunt = 0, b_shunt = 0; // MW / MVAr injected at 1.0 p.u.
    double v_mag = 1.0;              // p.u.
    double v_ang = 0.0;              // degrees
    double base_kv = 0.0;
};

struct Branch {
    int from_bus = 0, to_bus = 0;
    double r = 0, x = 0;
    double b_charging = 0;           // total line charging, p.u.
    double tap = 1.0;                // off-nominal ratio; 1.0 = plain line
    double shift = 0;                // degrees
    double flow_security_limit = std::numeric_limits<double>::infinity(); // MW
    bool in_service = true;

    bool is_transformer() const { return tap != 1.0; }
};

struct Generator {
    int bus = 0;
    double p_out = 0, q_out = 0;     // MW / MVAr
    double p_min = 0, p_max = 0;
    double q_min = 0, q_max = 0;
    double v_setpoint = 1.0;         // p.u.
};

struct ShuntCapacitor {
    int bus = 0;
    double q_switched = 0;           // MVAr at 1.0 p.u.
    double q_min = 0, q_max = 0;
    double step = 0;                 // MVAr
};

struct Network {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    std::vector<ShuntCapacitor> shunt_capacitors;

    std::unordered_map<int, int> bus_pos; // bus id -> index into buses

    int bus_index(int id) const;
    int slack_index() const;
    void rebuild_index();
    // buses with a generator attached (voltage-controlled), ascending bus id
    std::vector<int> controlled_bus_indices() const;
    std::vector<int> transformer_branch_indices() const;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Network parse_case(const std::string& text);
Network parse_case_file(const std::string& path);
Network scale_loads(const Network& net, double factor);

// connected components over in-service branches; returns component id per bus
std::vector<int> bus_components(const Network& net);

std::string network_fingerprint(const Network& net);
nlohmann::ordered_json network_to_json(const Network& net);

}  // namespace ossa
