#pragma once

#include <Eigen/Dense>
#include <complex>
#include <unordered_map>
#include <vector>

#include "pssinit/emt.hpp"
#include "pssinit/machines.hpp"
#include "pssinit/netlist.hpp"
#include "pssinit/shooting.hpp"

namespace pss {

struct PowerFlowOptions {
    // When positive, series reactances and shunt susceptances are scaled by
    // tan(w0 h/2)/(w0 h/2) so the phasors describe the trapezoidal
    // discretization at step h rather than the continuous network. Used for
    // integrator-consistent initial guesses; leave 0 for the plain network.
    double warp_h = 0.0;
    // One three-phase current-injection refinement sweep after the balanced
    // expansion, capturing load unbalance in the guess.
    bool refine_sweep = true;
    double tol = 1e-8;
    int maxiter = 30;
};

struct PowerFlowSolution {
    std::vector<Phasor> bus_v;                  // positive-sequence, by bus index
    std::vector<ThreePhase<Phasor>> bus_v3;     // per-phase
    std::unordered_map<std::string, Phasor> device_current;           // positive-sequence
    std::unordered_map<std::string, std::complex<double>> device_power_out; // generation (+)
    Phasor slack_injection;
    int iterations = 0;
    double max_mismatch = 0.0;
};

// Positive-sequence Newton-Raphson power flow on the balanced aggregate
// (loads at their total S, ZIP-aware; the motor as a PQ bus with its P
// setpoint and a flat-start Q estimate), followed by balanced per-phase
// expansion and the optional refinement sweep. Throws on divergence.
PowerFlowSolution power_flow(const SystemSpec& spec, const PowerFlowOptions& opts = {});

// Constant-impedance equivalent of a per-phase power target at voltage v:
// Z = |v|^2 / conj(S).
std::complex<double> init_load(const std::complex<double>& s_target, const Phasor& v);

// Fills X0 in layout order: machine states from the conventional
// steady-state initializations, network states as instantaneous values of
// the power-flow phasors at t0 = 0, load impedances from init_load, and
// the external inputs. Also pins the initial-value y0 entries.
Eigen::VectorXd assemble_X0(const SystemSpec& spec, const System& sys, UnknownLayout& layout,
                            const PowerFlowSolution& pf, double warp_h = 0.0);

} // namespace pss
