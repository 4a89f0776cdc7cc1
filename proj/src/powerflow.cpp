#include "ossa/powerflow.hpp"

#include <Eigen/SparseLU>
#include <atomic>
#include <cmath>

namespace ossa {

using cplx = std::complex<double>;

namespace {
std::atomic<long> g_solves{0};
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
}  // namespace

long solve_count() { return g_solves.load(); }
void reset_solve_count() { g_solves.store(0); }

Eigen::VectorXcd FlowSolution::complex_v() const {
    Eigen::VectorXcd v(v_mag.size());
    for (Eigen::Index i = 0; i < v_mag.size(); ++i)
        v[i] = std::polar(v_mag[i], v_ang[i]);
    return v;
}

AdmittanceMatrix build_ybus(const Network& net) {
    const int n = int(net.buses.size());
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(4 * net.branches.size() + n);

    for (const auto& br : net.branches) {
        if (!br.in_service) continue;
        if (br.r == 0 && br.x == 0)
            throw std::invalid_argument("build_ybus: branch with r = x = 0");
        const int f = net.bus_index(br.from_bus);
        const int t = net.bus_index(br.to_bus);
        const cplx ys = 1.0 / cplx(br.r, br.x);
        const cplx ych(0, br.b_charging / 2.0);
        const cplx tap = std::polar(br.tap, br.shift * kDegToRad);
        trip.emplace_back(f, f, (ys + ych) / (tap * std::conj(tap)));
        trip.emplace_back(t, t, ys + ych);
        trip.emplace_back(f, t, -ys / std::conj(tap));
        trip.emplace_back(t, f, -ys / tap);
    }
    for (int i = 0; i < n; ++i) {
        const auto& b = net.buses[i];
        if (b.g_shunt != 0 || b.b_shunt != 0)
            trip.emplace_back(i, i, cplx(b.g_shunt, b.b_shunt) / net.base_mva);
    }

    AdmittanceMatrix Y;
    Y.n = n;
    Y.Y.resize(n, n);
    Y.Y.setFromTriplets(trip.begin(), trip.end());
    return Y;
}

std::vector<BranchFlow> branch_flows(const Network& net, const Eigen::VectorXcd& v) {
    if (v.size() != Eigen::Index(net.buses.size()))
        throw std::invalid_argument("branch_flows: voltage dimension mismatch");
    std::vector<BranchFlow> out(net.branches.size());
    for (size_t k = 0; k < net.branches.size(); ++k) {
        const auto& br = net.branches[k];
        if (!br.in_service) {
            out[k].in_service = false;
            continue;
        }
        const int f = net.bus_index(br.from_bus);
        const int t = net.bus_index(br.to_bus);
        const cplx ys = 1.0 / cplx(br.r, br.x);
        const cplx ych(0, br.b_charging / 2.0);
        const cplx tap = std::polar(br.tap, br.shift * kDegToRad);
        const cplx yff = (ys + ych) / (tap * std::conj(tap));
        const cplx yft = -ys / std::conj(tap);
        const cplx ytf = -ys / tap;
        const cplx ytt = ys + ych;
        const cplx sf = v[f] * std::conj(yff * v[f] + yft * v[t]) * net.base_mva;
        const cplx st = v[t] * std::conj(ytf * v[f] + ytt * v[t]) * net.base_mva;
        out[k].p_from = sf.real();
        out[k].q_from = sf.imag();
        out[k].p_to = st.real();
        out[k].q_to = st.imag();
    }
    return out;
}

FlowSolution solve_nr(const Network& net, const SolverOptions& opts) {
    g_solves.fetch_add(1, std::memory_order_relaxed);

    const int n = int(net.buses.size());
    {
        auto comp = bus_components(net);
        for (int c : comp)
            if (c != comp[0])
                throw IslandedNetworkError("solve_nr: network is islanded");
    }

    const AdmittanceMatrix Ym = build_ybus(net);
    const auto& Y = Ym.Y;

    // scheduled injections, p.u.
    Eigen::VectorXd p_spec = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd q_spec = Eigen::VectorXd::Zero(n);
    std::vector<double> v_set(n, 0.0);
    for (const auto& g : net.generators) {
        const int i = net.bus_index(g.bus);
        p_spec[i] += g.p_out / net.base_mva;
        q_spec[i] += g.q_out / net.base_mva;
        if (v_set[i] == 0.0) v_set[i] = g.v_setpoint;
    }
    for (int i = 0; i < n; ++i) {
        p_spec[i] -= net.buses[i].p_load / net.base_mva;
        q_spec[i] -= net.buses[i].q_load / net.base_mva;
    }

    const int slack = net.slack_index();
    std::vector<int> pvpq, pq;
    for (int i = 0; i < n; ++i) {
        if (i == slack) continue;
        pvpq.push_back(i);
        if (net.buses[i].kind == BusKind::pq) pq.push_back(i);
    }
    const int na = int(pvpq.size()), nv = int(pq.size());
    std::vector<int> ang_pos(n, -1), mag_pos(n, -1);
    for (int k = 0; k < na; ++k) ang_pos[pvpq[k]] = k;
    for (int k = 0; k < nv; ++k) mag_pos[pq[k]] = na + k;

    Eigen::VectorXd vm(n), va(n);
    for (int i = 0; i < n; ++i) {
        const auto& b = net.buses[i];
        const bool controlled = b.kind != BusKind::pq && v_set[i] > 0;
        if (opts.flat_start) {
            vm[i] = controlled ? v_set[i] : 1.0;
            va[i] = (i == slack) ? b.v_ang * kDegToRad : 0.0;
        } else {
            vm[i] = controlled ? v_set[i] : b.v_mag;
            va[i] = b.v_ang * kDegToRad;
        }
    }

    auto calc_injections = [&](Eigen::VectorXd& pc, Eigen::VectorXd& qc) {
        Eigen::VectorXcd v(n);
        for (int i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);
        Eigen::VectorXcd s = v.cwiseProduct((Y * v).conjugate());
        pc = s.real();
        qc = s.imag();
    };

    auto mismatch = [&](const Eigen::VectorXd& pc, const Eigen::VectorXd& qc) {
        double m = 0;
        for (int i : pvpq) m = std::max(m, std::abs(pc[i] - p_spec[i]));
        for (int i : pq) m = std::max(m, std::abs(qc[i] - q_spec[i]));
        return m;
    };

    FlowSolution sol;
    Eigen::VectorXd pc(n), qc(n);
    calc_injections(pc, qc);
    sol.max_mismatch = mismatch(pc, qc);

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    int it = 0;
    while (it < opts.max_iterations) {
        // Jacobian on polar variables [dtheta(pv+pq); dV(pq)]
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(size_t(Y.nonZeros()) * 4);
        for (int col = 0; col < n; ++col) {
            for (Eigen::SparseMatrix<cplx>::InnerIterator itY(Y, col); itY; ++itY) {
                const int i = int(itY.row());
                const int j = col;
                const double G = itY.value().real(), B = itY.value().imag();
                if (i == j) {
                    const double vi = vm[i];
                    if (ang_pos[i] >= 0) {
                        trip.emplace_back(ang_pos[i], ang_pos[i], -qc[i] - B * vi * vi);
                        if (mag_pos[i] >= 0)
                            trip.emplace_back(ang_pos[i], mag_pos[i], pc[i] / vi + G * vi);
                    }
                    if (mag_pos[i] >= 0) {
                        trip.emplace_back(mag_pos[i], ang_pos[i], pc[i] - G * vi * vi);
                        trip.emplace_back(mag_pos[i], mag_pos[i], qc[i] / vi - B * vi);
                    }
                } else {
                    const double th = va[i] - va[j];
                    const double ct = std::cos(th), st = std::sin(th);
                    const double vij = vm[i] * vm[j];
                    const double dp_dth = vij * (G * st - B * ct);
                    const double dp_dv = vm[i] * (G * ct + B * st);
                    if (ang_pos[i] >= 0) {
                        if (ang_pos[j] >= 0) trip.emplace_back(ang_pos[i], ang_pos[j], dp_dth);
                        if (mag_pos[j] >= 0) trip.emplace_back(ang_pos[i], mag_pos[j], dp_dv);
                    }
                    if (mag_pos[i] >= 0) {
                        if (ang_pos[j] >= 0) trip.emplace_back(mag_pos[i], ang_pos[j], -vm[i] * vm[j] * (G * ct + B * st));
                        if (mag_pos[j] >= 0) trip.emplace_back(mag_pos[i], mag_pos[j], vm[i] * (G * st - B * ct));
                    }
                }
            }
        }
        Eigen::SparseMatrix<double> J(na + nv, na + nv);
        J.setFromTriplets(trip.begin(), trip.end());

        Eigen::VectorXd rhs(na + nv);
        for (int k = 0; k < na; ++k) rhs[k] = -(pc[pvpq[k]] - p_spec[pvpq[k]]);
        for (int k = 0; k < nv; ++k) rhs[na + k] = -(qc[pq[k]] - q_spec[pq[k]]);

        lu.compute(J);
        if (lu.info() != Eigen::Success)
            throw std::runtime_error("solve_nr: singular Jacobian");
        Eigen::VectorXd dx = lu.solve(rhs);
        if (!dx.allFinite()) throw std::runtime_error("solve_nr: singular Jacobian");

        for (int k = 0; k < na; ++k) va[pvpq[k]] += dx[k];
        for (int k = 0; k < nv; ++k) vm[pq[k]] += dx[na + k];
        ++it;

        calc_injections(pc, qc);
        sol.max_mismatch = mismatch(pc, qc);
        if (!std::isfinite(sol.max_mismatch)) break;
        if (sol.max_mismatch < opts.tolerance) {
            sol.converged = true;
            break;
        }
    }

    sol.iterations = it;
    sol.v_mag = vm;
    sol.v_ang = va;
    sol.p_inj = pc * net.base_mva;
    sol.q_inj = qc * net.base_mva;
    Eigen::VectorXcd v(n);
    for (int i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);
    sol.flows = branch_flows(net, v);

    if (opts.enforce_q_limits && sol.converged) {
        // PV buses whose reactive output leaves its band become PQ at the limit
        std::vector<double> qlo(n, 0), qhi(n, 0);
        std::vector<bool> has_gen(n, false);
        for (const auto& g : net.generators) {
            const int i = net.bus_index(g.bus);
            qlo[i] += g.q_min;
            qhi[i] += g.q_max;
            has_gen[i] = true;
        }
        Network clamped = net;
        bool any = false;
        for (int i = 0; i < n; ++i) {
            if (net.buses[i].kind != BusKind::pv || !has_gen[i]) continue;
            const double q_gen = sol.q_inj[i] + net.buses[i].q_load;
            double target = q_gen;
            if (q_gen > qhi[i]) target = qhi[i];
            else if (q_gen < qlo[i]) target = qlo[i];
            else continue;
            any = true;
            clamped.buses[i].kind = BusKind::pq;
            int units = 0;
            for (const auto& g : net.generators) units += g.bus == net.buses[i].id;
            for (auto& g : clamped.generators)
                if (g.bus == net.buses[i].id) g.q_out = target / units;
        }
        if (any) return solve_nr(clamped, opts);
    }
    return sol;
}

}  // namespace ossa
