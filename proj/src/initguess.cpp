#include "pssinit/initguess.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pss {

namespace {

using C = std::complex<double>;

double warp_factor(const SystemSpec& spec, double warp_h) {
    if (warp_h <= 0.0)
        return 1.0;
    const double half = 0.5 * spec.omega_b() * warp_h;
    return std::tan(half) / half;
}

struct PFNetwork {
    Eigen::MatrixXcd ybus;
    std::vector<int> bus_ids;
    std::unordered_map<int, int> index;
};

PFNetwork build_ybus(const SystemSpec& spec, double w) {
    PFNetwork net;
    const int n = int(spec.buses.size());
    net.ybus = Eigen::MatrixXcd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        net.bus_ids.push_back(spec.buses[std::size_t(i)].id);
        net.index[spec.buses[std::size_t(i)].id] = i;
    }
    for (const auto& br : spec.branches) {
        const int f = net.index.at(br.from);
        const int t = net.index.at(br.to);
        const C y = 1.0 / C(br.r, br.x * w);
        const C ysh(0.0, w * br.b / 2.0);
        const double a = br.ratio;
        net.ybus(f, f) += y / (a * a) + ysh;
        net.ybus(t, t) += y + ysh;
        net.ybus(f, t) -= y / a;
        net.ybus(t, f) -= y / a;
    }
    return net;
}

enum class BusKind { Slack, PV, PQ };

} // namespace

PowerFlowSolution power_flow(const SystemSpec& spec, const PowerFlowOptions& opts) {
    const double w = warp_factor(spec, opts.warp_h);
    PFNetwork net = build_ybus(spec, w);
    const int n = int(spec.buses.size());

    // Bus classification and scheduled injections from the device conditions.
    std::vector<BusKind> kind(std::size_t(n), BusKind::PQ);
    std::vector<double> vset(std::size_t(n), 1.0);
    std::vector<double> pgen(std::size_t(n), 0.0);
    int slack = -1;
    double slack_angle = 0.0;

    auto gen_bus = [&](const std::string& id) -> int {
        for (const auto& g : spec.generators)
            if (g.id == id)
                return net.index.at(g.bus);
        throw std::runtime_error("power_flow: condition device '" + id + "' is not a generator");
    };

    // Loads (ZIP at the solved |V|) and the motor P with a flat-start Q
    // estimate enter the PQ mismatches.
    struct PqLoad {
        int bus;
        double p0, q0;
        ZipCoeffs zip;
    };
    std::vector<PqLoad> pq_loads;
    for (const auto& l : spec.loads)
        pq_loads.push_back({net.index.at(l.bus), l.s_total.real(), l.s_total.imag(), l.zip});

    std::unordered_map<std::string, double> motor_p;
    for (const auto& c : spec.conditions) {
        switch (c.kind) {
        case PFCondition::Kind::VTheta: {
            slack = gen_bus(c.device);
            kind[std::size_t(slack)] = BusKind::Slack;
            vset[std::size_t(slack)] = c.v;
            slack_angle = c.theta;
            break;
        }
        case PFCondition::Kind::PV: {
            const int b = gen_bus(c.device);
            kind[std::size_t(b)] = BusKind::PV;
            vset[std::size_t(b)] = c.v;
            pgen[std::size_t(b)] += c.p;
            break;
        }
        case PFCondition::Kind::MotorP:
            motor_p[c.device] = c.p;
            break;
        case PFCondition::Kind::PQ:
            break; // covered through the load list
        }
    }
    if (slack < 0)
        throw std::runtime_error("power_flow: no angle reference device");

    for (const auto& m : spec.motors) {
        const auto it = motor_p.find(m.id);
        if (it == motor_p.end())
            continue;
        const MotorPars mp = derive_motor_pars(m);
        MotorSteadyState flat = motor_steady_state(mp, Phasor(1.0, 0.0), it->second);
        const double q_est = motor_input_reactive(mp, Phasor(1.0, 0.0), flat.slip);
        pq_loads.push_back({net.index.at(m.bus), it->second, q_est, ZipCoeffs{}});
    }

    // Flat start at the setpoint magnitudes.
    Eigen::VectorXd vm(n), va(n);
    for (int i = 0; i < n; ++i) {
        vm(i) = vset[std::size_t(i)];
        va(i) = slack_angle;
    }

    std::vector<int> ang_idx, mag_idx;
    for (int i = 0; i < n; ++i) {
        if (kind[std::size_t(i)] != BusKind::Slack)
            ang_idx.push_back(i);
        if (kind[std::size_t(i)] == BusKind::PQ)
            mag_idx.push_back(i);
    }
    const int na = int(ang_idx.size()), nm = int(mag_idx.size());

    auto calc_power = [&](int i) -> C {
        C s(0.0, 0.0);
        const C vi = std::polar(vm(i), va(i));
        for (int k = 0; k < n; ++k) {
            if (net.ybus(i, k) == C(0.0, 0.0))
                continue;
            s += vi * std::conj(net.ybus(i, k) * std::polar(vm(k), va(k)));
        }
        return s;
    };
    auto sched_power = [&](int i) -> C {
        C s(pgen[std::size_t(i)], 0.0);
        for (const auto& l : pq_loads) {
            if (l.bus != i)
                continue;
            const auto [p, q] = zip_target(vm(i), l.zip, l.p0, l.q0);
            s -= C(p, q);
        }
        return s;
    };

    PowerFlowSolution sol;
    int it = 0;
    for (;; ++it) {
        Eigen::VectorXd mis(na + nm);
        std::vector<C> s_calc(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            s_calc[std::size_t(i)] = calc_power(i);
        for (int r = 0; r < na; ++r)
            mis(r) = sched_power(ang_idx[std::size_t(r)]).real() -
                     s_calc[std::size_t(ang_idx[std::size_t(r)])].real();
        for (int r = 0; r < nm; ++r)
            mis(na + r) = sched_power(mag_idx[std::size_t(r)]).imag() -
                          s_calc[std::size_t(mag_idx[std::size_t(r)])].imag();
        sol.max_mismatch = mis.size() ? mis.cwiseAbs().maxCoeff() : 0.0;
        if (sol.max_mismatch < opts.tol)
            break;
        if (it >= opts.maxiter)
            throw std::runtime_error("power_flow: diverged after " + std::to_string(opts.maxiter) +
                                     " iterations (mismatch " + std::to_string(sol.max_mismatch) +
                                     ")");

        // Standard polar Jacobian plus the ZIP derivative of the scheduled
        // injections on the magnitude columns.
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(na + nm, na + nm);
        for (int r = 0; r < na; ++r) {
            const int i = ang_idx[std::size_t(r)];
            const C vi = std::polar(vm(i), va(i));
            for (int cidx = 0; cidx < na; ++cidx) {
                const int k = ang_idx[std::size_t(cidx)];
                if (i == k) {
                    J(r, cidx) = -s_calc[std::size_t(i)].imag() -
                                 vm(i) * vm(i) * net.ybus(i, i).imag();
                } else {
                    const C t = vi * std::conj(net.ybus(i, k) * std::polar(vm(k), va(k)));
                    J(r, cidx) = t.imag();
                }
            }
            for (int cidx = 0; cidx < nm; ++cidx) {
                const int k = mag_idx[std::size_t(cidx)];
                if (i == k) {
                    J(r, na + cidx) =
                        s_calc[std::size_t(i)].real() / vm(i) + vm(i) * net.ybus(i, i).real();
                } else {
                    const C t = vi * std::conj(net.ybus(i, k) * std::polar(vm(k), va(k)));
                    J(r, na + cidx) = t.real() / vm(k);
                }
                for (const auto& l : pq_loads)
                    if (l.bus == i && i == k)
                        J(r, na + cidx) += (l.zip.kpi + 2.0 * l.zip.kpz * vm(i)) * l.p0;
            }
        }
        for (int r = 0; r < nm; ++r) {
            const int i = mag_idx[std::size_t(r)];
            const C vi = std::polar(vm(i), va(i));
            for (int cidx = 0; cidx < na; ++cidx) {
                const int k = ang_idx[std::size_t(cidx)];
                if (i == k) {
                    J(na + r, cidx) = s_calc[std::size_t(i)].real() -
                                      vm(i) * vm(i) * net.ybus(i, i).real();
                } else {
                    const C t = vi * std::conj(net.ybus(i, k) * std::polar(vm(k), va(k)));
                    J(na + r, cidx) = -t.real();
                }
            }
            for (int cidx = 0; cidx < nm; ++cidx) {
                const int k = mag_idx[std::size_t(cidx)];
                if (i == k) {
                    J(na + r, na + cidx) =
                        s_calc[std::size_t(i)].imag() / vm(i) - vm(i) * net.ybus(i, i).imag();
                } else {
                    const C t = vi * std::conj(net.ybus(i, k) * std::polar(vm(k), va(k)));
                    J(na + r, na + cidx) = t.imag() / vm(k);
                }
                for (const auto& l : pq_loads)
                    if (l.bus == i && i == k)
                        J(na + r, na + cidx) += (l.zip.kqi + 2.0 * l.zip.kqz * vm(i)) * l.q0;
            }
        }

        const Eigen::VectorXd dx = J.partialPivLu().solve(mis);
        for (int r = 0; r < na; ++r)
            va(ang_idx[std::size_t(r)]) += dx(r);
        for (int r = 0; r < nm; ++r)
            vm(mag_idx[std::size_t(r)]) += dx(na + r);
    }
    sol.iterations = it;

    sol.bus_v.resize(std::size_t(n));
    for (int i = 0; i < n; ++i)
        sol.bus_v[std::size_t(i)] = std::polar(vm(i), va(i));

    // Balanced expansion; phase b lags a by 120 degrees.
    const C rot_b = std::polar(1.0, -2.0 * std::numbers::pi / 3.0);
    const C rot_c = std::conj(rot_b);
    sol.bus_v3.resize(std::size_t(n));
    for (int i = 0; i < n; ++i) {
        sol.bus_v3[std::size_t(i)].a = sol.bus_v[std::size_t(i)];
        sol.bus_v3[std::size_t(i)].b = sol.bus_v[std::size_t(i)] * rot_b;
        sol.bus_v3[std::size_t(i)].c = sol.bus_v[std::size_t(i)] * rot_c;
    }

    // Device currents and powers at the balanced solution.
    auto injected = [&](int i) -> C {
        C acc(0.0, 0.0);
        for (int k = 0; k < n; ++k)
            acc += net.ybus(i, k) * sol.bus_v[std::size_t(k)];
        return sol.bus_v[std::size_t(i)] * std::conj(acc);
    };
    for (const auto& g : spec.generators) {
        const int b = net.index.at(g.bus);
        C s_gen = injected(b);
        for (const auto& l : pq_loads) {
            if (l.bus != b)
                continue;
            const auto [p, q] = zip_target(vm(b), l.zip, l.p0, l.q0);
            s_gen += C(p, q);
        }
        sol.device_power_out[g.id] = s_gen;
        sol.device_current[g.id] = std::conj(s_gen / sol.bus_v[std::size_t(b)]);
        if (b == slack)
            sol.slack_injection = s_gen;
    }
    for (const auto& m : spec.motors) {
        const auto it2 = motor_p.find(m.id);
        if (it2 == motor_p.end())
            continue;
        // Current drawn at the solved terminal voltage, from the machine's
        // own circuit at the slip matching its P setpoint.
        const int b = net.index.at(m.bus);
        const MotorPars mp = derive_motor_pars(m);
        const MotorSteadyState ss = motor_steady_state(mp, sol.bus_v[std::size_t(b)], it2->second);
        const double q = motor_input_reactive(mp, sol.bus_v[std::size_t(b)], ss.slip);
        const C s_draw(it2->second, q);
        sol.device_current[m.id] = std::conj(s_draw / sol.bus_v[std::size_t(b)]);
        sol.device_power_out[m.id] = -s_draw;
    }

    if (!opts.refine_sweep)
        return sol;

    // One per-phase current-injection sweep: generator buses held at their
    // balanced phase voltages, allocated loads converted to admittances,
    // motors injected as fixed currents. Phases decouple because the
    // network itself is symmetric.
    std::vector<int> fixed, free;
    for (int i = 0; i < n; ++i) {
        if (kind[std::size_t(i)] == BusKind::Slack || kind[std::size_t(i)] == BusKind::PV)
            fixed.push_back(i);
        else
            free.push_back(i);
    }
    if (free.empty())
        return sol;

    for (int ph = 0; ph < 3; ++ph) {
        const C rot = ph == 0 ? C(1.0, 0.0) : (ph == 1 ? rot_b : rot_c);
        Eigen::MatrixXcd yff(free.size(), free.size());
        Eigen::VectorXcd rhs(free.size());
        for (std::size_t r = 0; r < free.size(); ++r) {
            C inj(0.0, 0.0);
            for (const auto& m : spec.motors) {
                const auto it2 = motor_p.find(m.id);
                if (it2 != motor_p.end() && net.index.at(m.bus) == free[r])
                    inj -= sol.device_current[m.id] * rot;
            }
            rhs(Eigen::Index(r)) = inj;
            for (std::size_t c2 = 0; c2 < free.size(); ++c2)
                yff(Eigen::Index(r), Eigen::Index(c2)) = net.ybus(free[r], free[c2]);
            for (int fb : fixed)
                rhs(Eigen::Index(r)) -= net.ybus(free[r], fb) * sol.bus_v[std::size_t(fb)] * rot;
        }
        for (const auto& l : spec.loads) {
            const int b = net.index.at(l.bus);
            const auto shares = allocate_load(l.s_total, l.alloc_k);
            for (std::size_t r = 0; r < free.size(); ++r) {
                if (free[r] != b)
                    continue;
                const double vmag = vm(b);
                const auto [p, q] = zip_target(vmag, l.zip, shares[ph].real(), shares[ph].imag());
                yff(Eigen::Index(r), Eigen::Index(r)) += std::conj(C(p, q)) / (vmag * vmag);
            }
        }
        const Eigen::VectorXcd vph = yff.partialPivLu().solve(rhs);
        for (std::size_t r = 0; r < free.size(); ++r)
            sol.bus_v3[std::size_t(free[r])][ph] = vph(Eigen::Index(r));
    }
    return sol;
}

std::complex<double> init_load(const std::complex<double>& s_target, const Phasor& v) {
    if (std::abs(s_target) == 0.0)
        throw std::invalid_argument("init_load: zero power target");
    const double vmag2 = std::norm(v);
    return vmag2 / std::conj(s_target);
}

Eigen::VectorXd assemble_X0(const SystemSpec& spec, const System& sys, UnknownLayout& layout,
                            const PowerFlowSolution& pf, double warp_h) {
    const double w = warp_factor(spec, warp_h);
    Eigen::VectorXd X = Eigen::VectorXd::Zero(layout.m());
    auto inst = [](const Phasor& p) { return std::sqrt(2.0) * p.real(); }; // value at t = 0

    std::unordered_map<int, int> spec_bus_index; // netlist id -> pf index
    for (int i = 0; i < int(spec.buses.size()); ++i)
        spec_bus_index[spec.buses[std::size_t(i)].id] = i;

    // Bus capacitor voltages.
    for (std::size_t bi = 0; bi < spec.buses.size(); ++bi) {
        const int xb = sys.buses[bi].x0;
        for (int ph = 0; ph < 3; ++ph)
            X[xb + ph] = inst(pf.bus_v3[bi][ph]);
    }
    // Branch inductor currents from the (possibly warped) series impedance.
    for (std::size_t ri = 0; ri < spec.branches.size(); ++ri) {
        const auto& br = spec.branches[ri];
        const auto& inst_br = sys.branches[ri];
        const int f = spec_bus_index.at(br.from);
        const int t = spec_bus_index.at(br.to);
        const std::complex<double> z(br.r, br.x * w);
        for (int ph = 0; ph < 3; ++ph) {
            const Phasor i = (pf.bus_v3[std::size_t(f)][ph] / br.ratio -
                              pf.bus_v3[std::size_t(t)][ph]) / z;
            X[inst_br.x0 + ph] = inst(i);
        }
    }

    // Load parameters and currents. The stored X parameter is divided by
    // the warp factor so the discretized load consumes the continuous
    // target.
    const int ns = layout.n_states();
    std::vector<std::array<std::complex<double>, 3>> load_z(spec.loads.size());
    for (std::size_t li = 0; li < spec.loads.size(); ++li) {
        const auto& l = spec.loads[li];
        const int b = spec_bus_index.at(l.bus);
        const auto shares = allocate_load(l.s_total, l.alloc_k);
        for (int ph = 0; ph < 3; ++ph) {
            const Phasor v = pf.bus_v3[std::size_t(b)][ph];
            const auto [pt, qt] = zip_target(std::abs(v), l.zip, shares[ph].real(),
                                             shares[ph].imag());
            load_z[li][std::size_t(ph)] = init_load({pt, qt}, v);
            X[sys.loads[li].x0 + ph] = inst(v / load_z[li][std::size_t(ph)]);
        }
    }
    int at = ns;
    for (const auto& p : layout.params) {
        const auto& z = load_z[std::size_t(p.load)][std::size_t(p.phase)];
        X[at++] = p.is_x ? z.imag() / w : z.real();
    }

    // Machines: conventional balanced initialization at the
    // positive-sequence terminal voltage.
    std::vector<double> gen_efd(spec.generators.size()), gen_tm(spec.generators.size());
    for (std::size_t gi = 0; gi < spec.generators.size(); ++gi) {
        const auto& g = spec.generators[gi];
        const Phasor v = positive_sequence(pf.bus_v3[std::size_t(spec_bus_index.at(g.bus))]);
        const auto s_it = pf.device_power_out.find(g.id);
        if (s_it == pf.device_power_out.end())
            throw std::runtime_error("assemble_X0: generator " + g.id + " missing from power flow");
        const SyncSteadyState ss = sync_steady_state(sys.gens[gi].p, v, s_it->second);
        for (int k = 0; k < 8; ++k)
            X[sys.gens[gi].x0 + k] = ss.state[std::size_t(k)];
        gen_efd[gi] = ss.efd;
        gen_tm[gi] = ss.tm;
    }
    std::vector<double> motor_tl(spec.motors.size(), 0.0);
    for (std::size_t mi = 0; mi < spec.motors.size(); ++mi) {
        const auto& m = spec.motors[mi];
        double p_target = 0.0;
        for (const auto& c : spec.conditions)
            if (c.kind == PFCondition::Kind::MotorP && c.device == m.id)
                p_target = c.p;
        const Phasor v = positive_sequence(pf.bus_v3[std::size_t(spec_bus_index.at(m.bus))]);
        const MotorSteadyState ss = motor_steady_state(sys.motors[mi].p, v, p_target);
        for (int k = 0; k < 6; ++k)
            X[sys.motors[mi].x0 + k] = ss.state[std::size_t(k)];
        motor_tl[mi] = ss.tl;
    }

    for (const auto& in : layout.inputs) {
        switch (in.kind) {
        case UnknownLayout::InputEntry::Kind::Efd:
            X[at++] = gen_efd[std::size_t(in.device)];
            break;
        case UnknownLayout::InputEntry::Kind::Tm:
            X[at++] = gen_tm[std::size_t(in.device)];
            break;
        case UnknownLayout::InputEntry::Kind::Tl:
            X[at++] = motor_tl[std::size_t(in.device)];
            break;
        }
    }

    // Pin the initial-value conditions at the guess.
    for (int i = 0; i < ns; ++i)
        if (layout.states[std::size_t(i)].tag == StateTag::InitialValue)
            layout.states[std::size_t(i)].y0 = X[i];

    return X;
}

} // namespace pss
