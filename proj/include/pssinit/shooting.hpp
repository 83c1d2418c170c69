#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <string>
#include <vector>

#include "pssinit/emt.hpp"
#include "pssinit/netlist.hpp"

namespace pss {

enum class StateTag { Periodic, InitialValue };

// Ordered map between the solver vector X and the system: dynamic states
// first (each tagged periodic or initial-value), then dependent parameters
// (per-phase load R, X), then external inputs (Efd, Tm per generator, load
// torque per motor).
struct UnknownLayout {
    struct StateEntry {
        std::string name;
        StateTag tag = StateTag::Periodic;
        double y0 = 0.0; // pinned value for initial-value states
    };
    struct ParamEntry {
        std::string name;
        int load = 0;
        int phase = 0;
        bool is_x = false; // false: R, true: X
    };
    struct InputEntry {
        enum class Kind { Efd, Tm, Tl };
        std::string name;
        Kind kind = Kind::Efd;
        int device = 0;
    };

    std::vector<StateEntry> states;
    std::vector<ParamEntry> params;
    std::vector<InputEntry> inputs;

    int n_states() const { return int(states.size()); }
    int m() const { return int(states.size() + params.size() + inputs.size()); }
    int index_of(const std::string& name) const; // -1 when absent
    std::string name_of(int i) const;
};

// Builds the layout for an assembled system; enforces the residual/unknown
// balance and tags exactly the induction-machine rotor angles as
// initial-value states.
UnknownLayout build_layout(const SystemSpec& spec, const System& sys);

// Writes states/parameters/inputs from X into the system and returns the
// simulation start state. Throws on dimension mismatch.
Eigen::VectorXd apply_unknowns(System& sys, const Eigen::VectorXd& X, const UnknownLayout& layout);

// Inverse of apply_unknowns for a given start state.
Eigen::VectorXd pack_unknowns(const System& sys, const Eigen::VectorXd& x0,
                              const UnknownLayout& layout);

// Power-flow residuals in condition order, from phasors fitted over the
// final recorded period: VTheta -> (V cos(th) - Re V+, V sin(th) - Im V+),
// PV -> (P - Re(V+ I+*), V - |V+|), MotorP -> P - Re(V+ I+*), per-phase PQ
// -> ZIP targets on the allocated shares against V_x I_x*/3.
std::vector<double> pf_residuals(const TrajectoryRecord& traj,
                                 const std::vector<PFCondition>& conditions,
                                 const SystemSpec& spec);

struct ResidualReport {
    Eigen::VectorXd values;
    double norm2 = 0.0;
    double norm_periodic = 0.0;
    double norm_initial = 0.0;
    double norm_pf = 0.0;
    long eval_index = 0;
};

class EvalError : public std::runtime_error {
  public:
    EvalError(int step, const std::string& msg)
        : std::runtime_error(msg), step_(step) {}
    int step() const { return step_; }

  private:
    int step_;
};

// Residual-evaluation context: a pristine system template plus the layout.
// evaluate_F clones the template per call, so concurrent evaluations at
// different X are safe; the evaluation counter is the only shared state.
struct EvalContext {
    SystemSpec spec;
    System templ;
    UnknownLayout layout;
    std::atomic<long> f_evals{0};

    EvalContext(SystemSpec s, System t, UnknownLayout l)
        : spec(std::move(s)), templ(std::move(t)), layout(std::move(l)) {}
};

EvalContext make_context(const SystemSpec& spec, double h);

// Applies X, simulates one nominal fundamental period, and assembles the
// residual in layout order: periodicity x(t0+T) - x(t0), initial-value
// y0 - y(t0), then the power-flow residuals.
ResidualReport evaluate_F(const Eigen::VectorXd& X, EvalContext& ctx);

} // namespace pss
