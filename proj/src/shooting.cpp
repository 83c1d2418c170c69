#include "pssinit/shooting.hpp"

#include <cmath>

namespace pss {

int UnknownLayout::index_of(const std::string& name) const {
    for (int i = 0; i < int(states.size()); ++i)
        if (states[std::size_t(i)].name == name)
            return i;
    for (int i = 0; i < int(params.size()); ++i)
        if (params[std::size_t(i)].name == name)
            return n_states() + i;
    for (int i = 0; i < int(inputs.size()); ++i)
        if (inputs[std::size_t(i)].name == name)
            return n_states() + int(params.size()) + i;
    return -1;
}

std::string UnknownLayout::name_of(int i) const {
    if (i < n_states())
        return states[std::size_t(i)].name;
    i -= n_states();
    if (i < int(params.size()))
        return params[std::size_t(i)].name;
    i -= int(params.size());
    return inputs[std::size_t(i)].name;
}

UnknownLayout build_layout(const SystemSpec& spec, const System& sys) {
    UnknownLayout layout;
    layout.states.reserve(std::size_t(sys.nstates));
    for (const auto& name : sys.state_names) {
        UnknownLayout::StateEntry e;
        e.name = name;
        // Induction-machine rotor angles drift at slip frequency; they take
        // the initial-value condition instead of periodicity.
        e.tag = name.ends_with(".theta_r") ? StateTag::InitialValue : StateTag::Periodic;
        layout.states.push_back(e);
    }

    static const char* ph = "abc";
    for (int li = 0; li < int(sys.loads.size()); ++li) {
        const auto& ld = sys.loads[std::size_t(li)];
        for (int p = 0; p < 3; ++p) {
            layout.params.push_back({ld.name + ".R_" + ph[p], li, p, false});
            layout.params.push_back({ld.name + ".X_" + ph[p], li, p, true});
        }
    }
    for (int gi = 0; gi < int(sys.gens.size()); ++gi) {
        const auto& g = sys.gens[std::size_t(gi)];
        layout.inputs.push_back({g.name + ".Efd", UnknownLayout::InputEntry::Kind::Efd, gi});
        layout.inputs.push_back({g.name + ".Tm", UnknownLayout::InputEntry::Kind::Tm, gi});
    }
    for (int mi = 0; mi < int(sys.motors.size()); ++mi)
        layout.inputs.push_back(
            {sys.motors[std::size_t(mi)].name + ".Tl", UnknownLayout::InputEntry::Kind::Tl, mi});

    const int res = count_pf_residuals(spec);
    const int free = int(layout.params.size() + layout.inputs.size());
    if (res != free) {
        std::string msg = "build_layout: " + std::to_string(res) + " power-flow residuals vs " +
                          std::to_string(free) + " free quantities; conditions:";
        for (const auto& c : spec.conditions)
            msg += " " + c.device;
        throw std::runtime_error(msg);
    }
    return layout;
}

Eigen::VectorXd apply_unknowns(System& sys, const Eigen::VectorXd& X,
                               const UnknownLayout& layout) {
    if (X.size() != layout.m())
        throw std::invalid_argument("apply_unknowns: dimension mismatch");
    Eigen::VectorXd x0 = X.head(layout.n_states());
    int at = layout.n_states();
    for (const auto& p : layout.params) {
        auto& ld = sys.loads[std::size_t(p.load)];
        (p.is_x ? ld.x : ld.r)[std::size_t(p.phase)] = X[at++];
    }
    for (const auto& in : layout.inputs) {
        switch (in.kind) {
        case UnknownLayout::InputEntry::Kind::Efd:
            sys.gens[std::size_t(in.device)].efd = X[at++];
            break;
        case UnknownLayout::InputEntry::Kind::Tm:
            sys.gens[std::size_t(in.device)].tm = X[at++];
            break;
        case UnknownLayout::InputEntry::Kind::Tl:
            sys.motors[std::size_t(in.device)].tl = X[at++];
            break;
        }
    }
    return x0;
}

Eigen::VectorXd pack_unknowns(const System& sys, const Eigen::VectorXd& x0,
                              const UnknownLayout& layout) {
    Eigen::VectorXd X(layout.m());
    X.head(layout.n_states()) = x0;
    int at = layout.n_states();
    for (const auto& p : layout.params) {
        const auto& ld = sys.loads[std::size_t(p.load)];
        X[at++] = (p.is_x ? ld.x : ld.r)[std::size_t(p.phase)];
    }
    for (const auto& in : layout.inputs) {
        switch (in.kind) {
        case UnknownLayout::InputEntry::Kind::Efd:
            X[at++] = sys.gens[std::size_t(in.device)].efd;
            break;
        case UnknownLayout::InputEntry::Kind::Tm:
            X[at++] = sys.gens[std::size_t(in.device)].tm;
            break;
        case UnknownLayout::InputEntry::Kind::Tl:
            X[at++] = sys.motors[std::size_t(in.device)].tl;
            break;
        }
    }
    return X;
}

namespace {

ThreePhase<Phasor> fit_three(const TrajectoryRecord& traj, const std::string& device,
                             const char* quantity, double omega0) {
    ThreePhase<Phasor> out;
    static const char* ph = "abc";
    for (int p = 0; p < 3; ++p) {
        const std::string name = device + "." + quantity + "." + ph[p];
        const WaveRecord* w = traj.wave(name);
        if (!w)
            throw std::runtime_error("pf_residuals: condition references unrecorded device '" +
                                     device + "'");
        out[p] = fit_phasor(*w, omega0);
    }
    return out;
}

} // namespace

std::vector<double> pf_residuals(const TrajectoryRecord& traj,
                                 const std::vector<PFCondition>& conditions,
                                 const SystemSpec& spec) {
    const double omega0 = spec.omega_b();
    std::vector<double> out;
    for (const auto& c : conditions) {
        const auto v3 = fit_three(traj, c.device, "v", omega0);
        switch (c.kind) {
        case PFCondition::Kind::VTheta: {
            const Phasor vp = positive_sequence(v3);
            out.push_back(c.v * std::cos(c.theta) - vp.real());
            out.push_back(c.v * std::sin(c.theta) - vp.imag());
            break;
        }
        case PFCondition::Kind::PV: {
            const auto i3 = fit_three(traj, c.device, "i", omega0);
            const Phasor vp = positive_sequence(v3);
            const Phasor ip = positive_sequence(i3);
            const Phasor s = device_power(vp, ip, PowerScope::PositiveSequence);
            out.push_back(c.p - s.real());
            out.push_back(c.v - std::abs(vp));
            break;
        }
        case PFCondition::Kind::MotorP: {
            const auto i3 = fit_three(traj, c.device, "i", omega0);
            const Phasor vp = positive_sequence(v3);
            const Phasor ip = positive_sequence(i3);
            const Phasor s = device_power(vp, ip, PowerScope::PositiveSequence);
            out.push_back(c.p - s.real());
            break;
        }
        case PFCondition::Kind::PQ: {
            const auto i3 = fit_three(traj, c.device, "i", omega0);
            if (c.scope == PowerScope::PositiveSequence) {
                const Phasor vp = positive_sequence(v3);
                const Phasor ip = positive_sequence(i3);
                const auto [pt, qt] = zip_target(std::abs(vp), c.zip, c.p, c.q);
                const Phasor s = device_power(vp, ip, PowerScope::PositiveSequence);
                out.push_back(pt - s.real());
                out.push_back(qt - s.imag());
            } else {
                const LoadSpec* load = spec.find_load(c.device);
                if (!load)
                    throw std::runtime_error("pf_residuals: per-phase pq condition on '" +
                                             c.device + "' which is not a load");
                const auto shares = allocate_load({c.p, c.q}, load->alloc_k);
                for (int p = 0; p < 3; ++p) {
                    const auto [pt, qt] =
                        zip_target(std::abs(v3[p]), c.zip, shares[p].real(), shares[p].imag());
                    const Phasor s = device_power(v3[p], i3[p], PowerScope::PerPhase);
                    out.push_back(pt - s.real());
                    out.push_back(qt - s.imag());
                }
            }
            break;
        }
        }
    }
    return out;
}

EvalContext make_context(const SystemSpec& spec, double h) {
    System sys = build_system(spec, h);
    UnknownLayout layout = build_layout(spec, sys);
    return EvalContext(spec, std::move(sys), std::move(layout));
}

ResidualReport evaluate_F(const Eigen::VectorXd& X, EvalContext& ctx) {
    System work = ctx.templ;
    const Eigen::VectorXd x0 = apply_unknowns(work, X, ctx.layout);

    TrajectoryRecord traj;
    try {
        traj = run_period(work, x0);
    } catch (const SimError& e) {
        throw EvalError(e.step(), std::string("residual evaluation failed: ") + e.what());
    }

    ResidualReport rep;
    rep.values.resize(ctx.layout.m());
    const int ns = ctx.layout.n_states();
    double sp = 0.0, si = 0.0, sf = 0.0;
    for (int i = 0; i < ns; ++i) {
        const auto& e = ctx.layout.states[std::size_t(i)];
        double r;
        if (e.tag == StateTag::Periodic)
            r = traj.end_state[i] - traj.start_state[i];
        else
            r = e.y0 - traj.start_state[i];
        rep.values[i] = r;
        (e.tag == StateTag::Periodic ? sp : si) += r * r;
    }
    const std::vector<double> pf = pf_residuals(traj, ctx.spec.conditions, ctx.spec);
    if (int(pf.size()) != ctx.layout.m() - ns)
        throw std::runtime_error("evaluate_F: power-flow residual count mismatch");
    for (int i = 0; i < int(pf.size()); ++i) {
        rep.values[ns + i] = pf[std::size_t(i)];
        sf += pf[std::size_t(i)] * pf[std::size_t(i)];
    }
    rep.norm_periodic = std::sqrt(sp);
    rep.norm_initial = std::sqrt(si);
    rep.norm_pf = std::sqrt(sf);
    rep.norm2 = std::sqrt(sp + si + sf);
    rep.eval_index = ++ctx.f_evals;
    return rep;
}

} // namespace pss
