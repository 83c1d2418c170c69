#include "pssinit/emt.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace pss {

int System::bus_of(int netlist_id) const {
    const auto it = bus_index.find(netlist_id);
    if (it == bus_index.end())
        throw std::runtime_error("unknown bus id " + std::to_string(netlist_id));
    return it->second;
}

double System::bus_voltage(int bus, int phase, double t, const Eigen::VectorXd& x) const {
    const BusNode& b = buses[std::size_t(bus)];
    if (!b.fixed)
        return x[b.x0 + phase];
    const SourceWave& w = b.source[std::size_t(phase)];
    if (w.amp == 0.0)
        return w.dc;
    return w.dc + w.amp * std::cos(omega_b * w.freq_mult * t + w.phase);
}

void System::gen_current(int idx, double t, const Eigen::VectorXd& x, double* iabc) const {
    const SyncInst& g = gens[std::size_t(idx)];
    const double* s = x.data() + g.x0;
    const double flux_d[3] = {s[0], s[2], s[3]};
    const double flux_q[3] = {s[1], s[4], s[5]};
    const auto& di = g.p.dinv;
    const auto& qi = g.p.qinv;
    const double id = di[0] * flux_d[0] + di[1] * flux_d[1] + di[2] * flux_d[2];
    const double iq = qi[0] * flux_q[0] + qi[1] * flux_q[1] + qi[2] * flux_q[2];
    const double theta = omega_b * t + s[6] - std::numbers::pi / 2.0;
    inv_park(theta, id, iq, iabc);
}

void System::motor_current(int idx, double t, const Eigen::VectorXd& x, double* iabc) const {
    const MotorInst& m = motors[std::size_t(idx)];
    const double* s = x.data() + m.x0;
    const auto& mi = m.p.minv;
    const double ids = mi[0] * s[0] + mi[1] * s[2];
    const double iqs = mi[0] * s[1] + mi[1] * s[3];
    inv_park(omega_b * t, ids, iqs, iabc);
}

void System::rhs(double t, const Eigen::VectorXd& x, Eigen::VectorXd& dx,
                 Eigen::VectorXd& inj) const {
    dx.setZero();
    inj.setZero();

    for (const auto& br : branches) {
        const double gain = omega_b / br.x;
        for (int ph = 0; ph < 3; ++ph) {
            const double i = x[br.x0 + ph];
            const double vf = bus_voltage(br.fbus, ph, t, x);
            const double vt = bus_voltage(br.tbus, ph, t, x);
            dx[br.x0 + ph] = gain * (vf / br.ratio - vt - br.r * i);
            inj[3 * br.fbus + ph] -= i / br.ratio;
            inj[3 * br.tbus + ph] += i;
        }
    }

    for (const auto& ld : loads) {
        for (int ph = 0; ph < 3; ++ph) {
            const double i = x[ld.x0 + ph];
            const double v = bus_voltage(ld.bus, ph, t, x);
            dx[ld.x0 + ph] = omega_b / ld.x[std::size_t(ph)] * (v - ld.r[std::size_t(ph)] * i);
            inj[3 * ld.bus + ph] -= i;
        }
    }

    double vabc[3], iabc[3];
    for (std::size_t gi = 0; gi < gens.size(); ++gi) {
        const SyncInst& g = gens[gi];
        const double* s = x.data() + g.x0;
        double* d = dx.data() + g.x0;
        const auto& di = g.p.dinv;
        const auto& qi = g.p.qinv;
        const double id = di[0] * s[0] + di[1] * s[2] + di[2] * s[3];
        const double ifd = di[3] * s[0] + di[4] * s[2] + di[5] * s[3];
        const double i1d = di[6] * s[0] + di[7] * s[2] + di[8] * s[3];
        const double iq = qi[0] * s[1] + qi[1] * s[4] + qi[2] * s[5];
        const double i1q = qi[3] * s[1] + qi[4] * s[4] + qi[5] * s[5];
        const double i2q = qi[6] * s[1] + qi[7] * s[4] + qi[8] * s[5];
        const double delta = s[6], omega = s[7];
        const double theta = omega_b * t + delta - std::numbers::pi / 2.0;
        for (int ph = 0; ph < 3; ++ph)
            vabc[ph] = bus_voltage(g.bus, ph, t, x);
        double vd, vq;
        park(theta, vabc, vd, vq);

        d[0] = omega_b * (vd + g.p.ra * id + omega * s[1]);
        d[1] = omega_b * (vq + g.p.ra * iq - omega * s[0]);
        d[2] = omega_b * g.p.rfd * (g.efd / g.p.lad - ifd);
        d[3] = -omega_b * g.p.r1d * i1d;
        d[4] = -omega_b * g.p.r1q * i1q;
        d[5] = -omega_b * g.p.r2q * i2q;
        const double te = s[0] * iq - s[1] * id;
        d[6] = omega_b * (omega - 1.0);
        d[7] = (g.tm - te - g.p.damping * (omega - 1.0)) / g.p.two_h;

        inv_park(theta, id, iq, iabc);
        for (int ph = 0; ph < 3; ++ph)
            inj[3 * g.bus + ph] += iabc[ph];
    }

    for (std::size_t mi_ = 0; mi_ < motors.size(); ++mi_) {
        const MotorInst& m = motors[mi_];
        const double* s = x.data() + m.x0;
        double* d = dx.data() + m.x0;
        const auto& mi = m.p.minv;
        const double ids = mi[0] * s[0] + mi[1] * s[2];
        const double iqs = mi[0] * s[1] + mi[1] * s[3];
        const double idr = mi[2] * s[0] + mi[3] * s[2];
        const double iqr = mi[2] * s[1] + mi[3] * s[3];
        const double omega_r = s[4];
        const double theta = omega_b * t;
        for (int ph = 0; ph < 3; ++ph)
            vabc[ph] = bus_voltage(m.bus, ph, t, x);
        double vds, vqs;
        park(theta, vabc, vds, vqs);

        d[0] = omega_b * (vds - m.p.rs * ids + s[1]);
        d[1] = omega_b * (vqs - m.p.rs * iqs - s[0]);
        d[2] = omega_b * (-m.p.rr * idr + (1.0 - omega_r) * s[3]);
        d[3] = omega_b * (-m.p.rr * iqr - (1.0 - omega_r) * s[2]);
        const double te = s[0] * iqs - s[1] * ids;
        d[4] = (te - m.tl - m.p.damping * (omega_r - 1.0)) / m.p.two_h;
        d[5] = omega_b * (omega_r - 1.0);

        inv_park(theta, ids, iqs, iabc);
        for (int ph = 0; ph < 3; ++ph)
            inj[3 * m.bus + ph] -= iabc[ph];
    }

    for (std::size_t bi = 0; bi < buses.size(); ++bi) {
        const BusNode& b = buses[bi];
        if (b.fixed)
            continue;
        const double gain = omega_b / b.bsh;
        for (int ph = 0; ph < 3; ++ph)
            dx[b.x0 + ph] = gain * inj[3 * int(bi) + ph];
    }
}

namespace {

void name_phases(std::vector<std::string>& names, const std::string& base) {
    names.push_back(base + ".a");
    names.push_back(base + ".b");
    names.push_back(base + ".c");
}

void finalize_states(System& sys) {
    sys.nstates = 0;
    sys.state_names.clear();
    for (auto& b : sys.buses) {
        if (b.fixed)
            continue;
        b.x0 = sys.nstates;
        sys.nstates += 3;
        name_phases(sys.state_names, b.name + ".v");
    }
    for (auto& br : sys.branches) {
        br.x0 = sys.nstates;
        sys.nstates += 3;
        name_phases(sys.state_names, br.name + ".i");
    }
    for (auto& ld : sys.loads) {
        ld.x0 = sys.nstates;
        sys.nstates += 3;
        name_phases(sys.state_names, ld.name + ".i");
    }
    for (auto& g : sys.gens) {
        g.x0 = sys.nstates;
        sys.nstates += 8;
        for (const char* f : {"psi_d", "psi_q", "psi_fd", "psi_1d", "psi_1q", "psi_2q", "delta",
                              "omega"})
            sys.state_names.push_back(g.name + "." + f);
    }
    for (auto& mo : sys.motors) {
        mo.x0 = sys.nstates;
        sys.nstates += 6;
        for (const char* f : {"psi_ds", "psi_qs", "psi_dr", "psi_qr", "omega_r", "theta_r"})
            sys.state_names.push_back(mo.name + "." + f);
    }
}

} // namespace

System build_system(const SystemSpec& spec, double h) {
    System sys;
    sys.omega_b = spec.omega_b();
    sys.period = spec.period();
    sys.h = h;
    const double ratio = sys.period / h;
    const auto n = std::llround(ratio);
    if (n < 2 || std::abs(ratio - double(n)) > 1e-9 * ratio)
        throw std::runtime_error("build_system: step does not divide the fundamental period");
    sys.steps_per_period = int(n);

    sys.buses.reserve(spec.buses.size());
    for (const auto& b : spec.buses) {
        BusNode node;
        node.name = b.name;
        sys.bus_index[b.id] = int(sys.buses.size());
        sys.buses.push_back(node);
    }
    for (const auto& br : spec.branches) {
        BranchInst bi;
        bi.name = br.id;
        bi.fbus = sys.bus_of(br.from);
        bi.tbus = sys.bus_of(br.to);
        bi.r = br.r;
        bi.x = br.x;
        bi.ratio = br.ratio;
        sys.buses[std::size_t(bi.fbus)].bsh += br.b / 2.0;
        sys.buses[std::size_t(bi.tbus)].bsh += br.b / 2.0;
        sys.branches.push_back(bi);
    }
    for (const auto& b : sys.buses)
        if (b.bsh <= 0.0)
            throw std::runtime_error("build_system: bus " + b.name +
                                     " carries no shunt capacitance");

    for (const auto& l : spec.loads) {
        LoadInst li;
        li.name = l.id;
        li.bus = sys.bus_of(l.bus);
        const auto shares = allocate_load(l.s_total, l.alloc_k);
        for (int ph = 0; ph < 3; ++ph) {
            const std::complex<double> z = 1.0 / std::conj(shares[ph]);
            li.r[std::size_t(ph)] = z.real();
            li.x[std::size_t(ph)] = z.imag();
            if (li.x[std::size_t(ph)] <= 0.0)
                throw std::runtime_error("build_system: load " + l.id +
                                         " needs a positive per-phase reactance");
        }
        sys.loads.push_back(li);
    }
    for (const auto& g : spec.generators) {
        SyncInst gi;
        gi.name = g.id;
        gi.bus = sys.bus_of(g.bus);
        gi.p = derive_sync_pars(g, sys.omega_b);
        sys.gens.push_back(gi);
    }
    for (const auto& m : spec.motors) {
        MotorInst mi;
        mi.name = m.id;
        mi.bus = sys.bus_of(m.bus);
        mi.p = derive_motor_pars(m);
        sys.motors.push_back(mi);
    }

    finalize_states(sys);

    // Record every condition-carrying device: terminal voltage plus device
    // current, and the rotor channels used by the reports.
    auto add_record = [&sys](RecordChannel::Kind k, const std::string& dev, int idx) {
        sys.records.push_back({k, dev, idx});
    };
    for (const auto& c : spec.conditions) {
        for (std::size_t i = 0; i < sys.gens.size(); ++i) {
            if (sys.gens[i].name != c.device)
                continue;
            add_record(RecordChannel::Kind::BusVoltage, c.device, int(i));
            add_record(RecordChannel::Kind::GenCurrent, c.device, int(i));
            add_record(RecordChannel::Kind::GenOmega, c.device, int(i));
        }
        for (std::size_t i = 0; i < sys.motors.size(); ++i) {
            if (sys.motors[i].name != c.device)
                continue;
            add_record(RecordChannel::Kind::BusVoltage, c.device, int(i));
            add_record(RecordChannel::Kind::MotorCurrent, c.device, int(i));
            add_record(RecordChannel::Kind::MotorOmega, c.device, int(i));
            add_record(RecordChannel::Kind::MotorAngle, c.device, int(i));
        }
        for (std::size_t i = 0; i < sys.loads.size(); ++i) {
            if (sys.loads[i].name != c.device)
                continue;
            add_record(RecordChannel::Kind::BusVoltage, c.device, int(i));
            add_record(RecordChannel::Kind::LoadCurrent, c.device, int(i));
        }
    }
    return sys;
}

SystemBuilder::SystemBuilder(double nominal_freq, double h) {
    sys_.omega_b = 2.0 * std::numbers::pi * nominal_freq;
    sys_.period = 1.0 / nominal_freq;
    sys_.h = h;
    sys_.steps_per_period = int(std::llround(sys_.period / h));
}

int SystemBuilder::add_source_bus(const std::string& name, const std::array<SourceWave, 3>& w) {
    BusNode b;
    b.name = name;
    b.fixed = true;
    b.source = w;
    sys_.buses.push_back(b);
    return int(sys_.buses.size()) - 1;
}

int SystemBuilder::add_cap_bus(const std::string& name, double bsh) {
    BusNode b;
    b.name = name;
    b.bsh = bsh;
    sys_.buses.push_back(b);
    return int(sys_.buses.size()) - 1;
}

void SystemBuilder::add_branch(const std::string& name, int fbus, int tbus, double r, double x,
                               double ratio) {
    sys_.branches.push_back({name, fbus, tbus, r, x, ratio, -1});
}

void SystemBuilder::add_load(const std::string& name, int bus, std::array<double, 3> r,
                             std::array<double, 3> x) {
    sys_.loads.push_back({name, bus, r, x, -1});
}

void SystemBuilder::add_gen(const std::string& name, int bus, const SyncMachinePars& p, double efd,
                            double tm) {
    SyncInst g;
    g.name = name;
    g.bus = bus;
    g.p = p;
    g.efd = efd;
    g.tm = tm;
    sys_.gens.push_back(g);
}

void SystemBuilder::add_motor(const std::string& name, int bus, const MotorPars& p, double tl) {
    MotorInst m;
    m.name = name;
    m.bus = bus;
    m.p = p;
    m.tl = tl;
    sys_.motors.push_back(m);
}

System SystemBuilder::finalize() {
    finalize_states(sys_);
    return sys_;
}

const WaveRecord* TrajectoryRecord::wave(const std::string& name) const {
    for (const auto& [n, w] : waves)
        if (n == name)
            return &w;
    return nullptr;
}

namespace {

// Implicit-step integrator. The per-step nonlinear system is solved by
// Newton iteration with a finite-difference Jacobian rebuilt at each step's
// predictor point.
class Simulator {
  public:
    explicit Simulator(const System& sys)
        : sys_(sys), n_(sys.nstates), f0_(n_), f1_(n_), fg_(n_), g_(n_), xg_(n_), xp_(n_),
          inj_(3 * Eigen::Index(sys.buses.size())), jac_(n_, n_), a_(n_, n_) {}

    // One implicit step t -> t+h: trapezoidal, or backward Euler for the
    // discontinuity treatment. The terminal-slope weight doubles as the
    // Newton iteration-matrix weight.
    void step(double t, double h, Eigen::VectorXd& x, bool backward_euler, int step_index) {
        sys_.rhs(t, x, f0_, inj_);
        const double wt = backward_euler ? h : h / 2.0;
        xg_ = x + h * f0_; // explicit predictor
        build_jacobian(t + h, xg_, wt);

        Eigen::VectorXd& xn = xg_;
        for (int it = 0; it < 30; ++it) {
            sys_.rhs(t + h, xn, f1_, inj_);
            if (backward_euler)
                g_ = xn - x - wt * f1_;
            else
                g_ = xn - x - wt * (f0_ + f1_);
            if (!g_.allFinite())
                throw SimError(step_index, "non-finite state in implicit solve");
            if (g_.lpNorm<Eigen::Infinity>() < 1e-12)
                break;
            if (it == 29)
                throw SimError(step_index, "implicit step did not converge");
            xn -= lu_.solve(g_);
        }
        x = xn;
    }

    void build_jacobian(double t, const Eigen::VectorXd& x, double wt) {
        sys_.rhs(t, x, fg_, inj_);
        xp_ = x;
        for (int j = 0; j < n_; ++j) {
            const double dj = 1e-7 * (1.0 + std::abs(x[j]));
            xp_[j] += dj;
            sys_.rhs(t, xp_, f1_, inj_);
            jac_.col(j) = (f1_ - fg_) / dj;
            xp_[j] = x[j];
        }
        a_ = Eigen::MatrixXd::Identity(n_, n_) - wt * jac_;
        lu_.compute(a_);
    }

  private:
    const System& sys_;
    int n_;
    Eigen::VectorXd f0_, f1_, fg_, g_, xg_, xp_, inj_;
    Eigen::MatrixXd jac_, a_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

double record_value(const System& sys, const RecordChannel& rc, int phase, double t,
                    const Eigen::VectorXd& x) {
    double iabc[3];
    switch (rc.kind) {
    case RecordChannel::Kind::BusVoltage: {
        int bus = 0; // the device's terminal bus
        for (const auto& g : sys.gens)
            if (g.name == rc.device)
                bus = g.bus;
        for (const auto& m : sys.motors)
            if (m.name == rc.device)
                bus = m.bus;
        for (const auto& l : sys.loads)
            if (l.name == rc.device)
                bus = l.bus;
        return sys.bus_voltage(bus, phase, t, x);
    }
    case RecordChannel::Kind::GenCurrent:
        sys.gen_current(rc.index, t, x, iabc);
        return iabc[phase];
    case RecordChannel::Kind::MotorCurrent:
        sys.motor_current(rc.index, t, x, iabc);
        return iabc[phase];
    case RecordChannel::Kind::LoadCurrent:
        return x[sys.loads[std::size_t(rc.index)].x0 + phase];
    case RecordChannel::Kind::GenOmega:
        return x[sys.gens[std::size_t(rc.index)].x0 + 7];
    case RecordChannel::Kind::MotorOmega:
        return x[sys.motors[std::size_t(rc.index)].x0 + 4];
    case RecordChannel::Kind::MotorAngle:
        return x[sys.motors[std::size_t(rc.index)].x0 + 5];
    }
    return 0.0;
}

bool is_scalar(RecordChannel::Kind k) {
    return k == RecordChannel::Kind::GenOmega || k == RecordChannel::Kind::MotorOmega ||
           k == RecordChannel::Kind::MotorAngle;
}

std::string channel_name(const RecordChannel& rc, int phase) {
    static const char* ph = "abc";
    std::string q;
    switch (rc.kind) {
    case RecordChannel::Kind::BusVoltage:
        q = "v";
        break;
    case RecordChannel::Kind::GenCurrent:
    case RecordChannel::Kind::MotorCurrent:
    case RecordChannel::Kind::LoadCurrent:
        q = "i";
        break;
    case RecordChannel::Kind::GenOmega:
    case RecordChannel::Kind::MotorOmega:
        return rc.device + ".omega";
    case RecordChannel::Kind::MotorAngle:
        return rc.device + ".theta_r";
    }
    return rc.device + "." + q + "." + ph[phase];
}

} // namespace

TrajectoryRecord run_period(const System& sys, const Eigen::VectorXd& from, double t0, int periods,
                            FirstStepMode first) {
    if (from.size() != sys.nstates)
        throw std::invalid_argument("run_period: state dimension mismatch");
    if (periods < 1)
        throw std::invalid_argument("run_period: at least one period required");

    TrajectoryRecord traj;
    traj.t0 = t0;
    traj.period_T = sys.period;
    traj.steps_per_period = sys.steps_per_period;
    traj.periods = periods;
    traj.start_state = from;
    traj.boundaries.push_back(from);

    const int total_steps = sys.steps_per_period * periods;
    traj.step_count = total_steps;

    // waveform channels, preallocated
    std::vector<std::pair<std::string, WaveRecord>> waves;
    for (const auto& rc : sys.records) {
        const int nph = is_scalar(rc.kind) ? 1 : 3;
        for (int ph = 0; ph < nph; ++ph) {
            WaveRecord w;
            w.dt = sys.h;
            w.t_start = t0;
            w.samples.reserve(std::size_t(total_steps) + 1);
            waves.emplace_back(channel_name(rc, ph), std::move(w));
        }
    }
    auto sample = [&](double t, const Eigen::VectorXd& x) {
        std::size_t wi = 0;
        for (const auto& rc : sys.records) {
            const int nph = is_scalar(rc.kind) ? 1 : 3;
            for (int ph = 0; ph < nph; ++ph)
                waves[wi++].second.samples.push_back(record_value(sys, rc, ph, t, x));
        }
    };

    Simulator sim(sys);
    Eigen::VectorXd x = from;
    sample(t0, x);
    for (int k = 0; k < total_steps; ++k) {
        const double t = t0 + double(k) * sys.h;
        if (k == 0 && first == FirstStepMode::BackwardEulerHalves) {
            // An inconsistent start is treated as a discontinuity: two
            // half-length backward Euler steps suppress step-to-step
            // oscillation the trapezoidal rule would sustain.
            sim.step(t, sys.h / 2.0, x, true, k);
            sim.step(t + sys.h / 2.0, sys.h / 2.0, x, true, k);
        } else {
            sim.step(t, sys.h, x, false, k);
        }
        sample(t0 + double(k + 1) * sys.h, x);
        if ((k + 1) % sys.steps_per_period == 0)
            traj.boundaries.push_back(x);
    }
    traj.end_state = x;
    traj.waves = std::move(waves);
    return traj;
}

void write_waveforms_csv(const std::string& path, const TrajectoryRecord& traj) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot open " + path);
    os.precision(17);
    os << "t";
    for (const auto& [name, w] : traj.waves)
        os << "," << name;
    os << "\n";
    const std::size_t n = traj.waves.empty() ? 0 : traj.waves.front().second.samples.size();
    for (std::size_t i = 0; i < n; ++i) {
        os << traj.t0 + double(i) * (traj.waves.front().second.dt);
        for (const auto& [name, w] : traj.waves)
            os << "," << w.samples[i];
        os << "\n";
    }
}

} // namespace pss
