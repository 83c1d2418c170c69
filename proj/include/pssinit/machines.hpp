#pragma once

#include <array>
#include <complex>

#include "pssinit/netlist.hpp"
#include "pssinit/phasor.hpp"

namespace pss {

// ---------------------------------------------------------------------------
// Synchronous machine: flux-linkage model with stator dynamics, a field
// winding, one d-axis damper and two q-axis dampers. Generator convention
// (stator current positive out of the machine). States, in order:
//   psi_d, psi_q, psi_fd, psi_1d, psi_1q, psi_2q, delta, omega
// delta is the q-axis angle relative to the synchronously rotating frame;
// the Park angle is w_b*t + delta - pi/2.
// ---------------------------------------------------------------------------

struct SyncMachinePars {
    double ra = 0.0, ll = 0.0;
    double lad = 0.0, laq = 0.0;
    double lfd = 0.0, l1d = 0.0, l1q = 0.0, l2q = 0.0;
    double rfd = 0.0, r1d = 0.0, r1q = 0.0, r2q = 0.0;
    double two_h = 0.0, damping = 0.0;
    // current = inv(L) * flux, with the stator row negated for the
    // generator convention: [id, ifd, i1d] = Dinv [psi_d, psi_fd, psi_1d].
    std::array<double, 9> dinv{}, qinv{};

    double xd() const { return ll + lad; }
    double xq() const { return ll + laq; }
};

// Derives the fundamental parameters from the operational (reactance /
// open-circuit time constant) set using the classical expressions; the
// derived set defines the model.
SyncMachinePars derive_sync_pars(const GenSpec& g, double omega_b);

struct SyncSteadyState {
    std::array<double, 8> state{};
    double efd = 0.0;
    double tm = 0.0;
};

// Closed-form steady-state solution at speed 1 p.u. for terminal phasor v
// and complex power output s (both p.u., positive-sequence). No iteration;
// saturation and limits are not modeled.
SyncSteadyState sync_steady_state(const SyncMachinePars& p, const Phasor& v,
                                  const std::complex<double>& s);

// ---------------------------------------------------------------------------
// Induction machine: stator/rotor flux model in the synchronously rotating
// frame, motor convention (stator current positive into the machine),
// floating-Y stator (no zero-sequence path). States, in order:
//   psi_ds, psi_qs, psi_dr, psi_qr, omega_r, theta_r
// theta_r is the rotor angle relative to the synchronous frame; it drifts
// at slip frequency and is the one non-periodic state.
// ---------------------------------------------------------------------------

struct MotorPars {
    double rs = 0.0, lls = 0.0;
    double rr = 0.0, llr = 0.0;
    double lm = 0.0;
    double two_h = 0.0, damping = 0.0;
    std::array<double, 4> minv{}; // [is, ir] = Minv [psi_s, psi_r], per axis

    double lss() const { return lls + lm; }
    double lrr() const { return llr + lm; }
};

MotorPars derive_motor_pars(const MotorSpec& m);

struct MotorSteadyState {
    std::array<double, 6> state{};
    double slip = 0.0;
    double tl = 0.0;
};

// Real power drawn by the steady-state equivalent circuit at slip s and
// terminal phasor v.
double motor_input_power(const MotorPars& p, const Phasor& v, double slip);

// Reactive power companion, used for the power-flow PQ estimate.
double motor_input_reactive(const MotorPars& p, const Phasor& v, double slip);

// Solves the slip by bisection so that the drawn real power equals
// p_target (to 1e-10), then fills flux/current states and load torque from
// the circuit solution. Targets at or below the no-load draw return the
// zero-slip magnetizing solution; targets above pull-out throw with the
// feasible range.
MotorSteadyState motor_steady_state(const MotorPars& p, const Phasor& v, double p_target);

// ---------------------------------------------------------------------------
// Reference-frame transforms. Instantaneous waveforms carry sqrt(2) times
// their RMS per-unit value, and the Park transform is scaled so that dq
// quantities are RMS p.u.; a balanced 1 p.u. set maps to |v_dq| = 1.
// ---------------------------------------------------------------------------

void park(double theta, const double* vabc, double& vd, double& vq);
void inv_park(double theta, double id, double iq, double* iabc);

// Phasor -> dq at t = 0 for Park angle offset theta0 (theta = w_b t +
// theta0): returns w with vd = Re(w), vq = Im(w), w = v * exp(-j theta0).
std::complex<double> phasor_to_dq(const Phasor& v, double theta0);

} // namespace pss
