#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "pssinit/machines.hpp"
#include "pssinit/netlist.hpp"
#include "pssinit/phasor.hpp"

namespace pss {

class SimError : public std::runtime_error {
  public:
    SimError(int step, const std::string& msg)
        : std::runtime_error("step " + std::to_string(step) + ": " + msg), step_(step) {}
    int step() const { return step_; }

  private:
    int step_;
};

// ---------------------------------------------------------------------------
// Assembled phase-domain system. Every netlist bus carries shunt
// capacitance (aggregated line/transformer charging), so bus voltages are
// states and the whole system is a first-order ODE in
//   [bus voltages | branch currents | load currents | machine states].
// Fixed-voltage source buses exist for test circuits only; they carry no
// states.
// ---------------------------------------------------------------------------

struct SourceWave {
    double amp = 0.0;   // instantaneous amplitude (sqrt(2) x RMS for AC)
    double phase = 0.0; // rad
    double freq_mult = 1.0;
    double dc = 0.0;
};

struct BusNode {
    std::string name;
    double bsh = 0.0; // total shunt susceptance, p.u.
    int x0 = -1;      // first of 3 phase-voltage states; -1 for source buses
    bool fixed = false;
    std::array<SourceWave, 3> source{};
};

struct BranchInst {
    std::string name;
    int fbus = 0, tbus = 0;
    double r = 0.0, x = 0.0, ratio = 1.0;
    int x0 = -1; // 3 phase-current states
};

struct LoadInst {
    std::string name;
    int bus = 0;
    std::array<double, 3> r{}, x{}; // dependent parameters, per phase
    int x0 = -1;                    // 3 phase-current states
};

struct SyncInst {
    std::string name;
    int bus = 0;
    SyncMachinePars p;
    double efd = 0.0, tm = 0.0; // external inputs
    int x0 = -1;                // 8 states
};

struct MotorInst {
    std::string name;
    int bus = 0;
    MotorPars p;
    double tl = 0.0; // external input
    int x0 = -1;     // 6 states
};

// Recorded channel kinds; three-phase channels occupy a/b/c, scalar
// channels (speeds, angles) a single wave.
struct RecordChannel {
    enum class Kind { BusVoltage, GenCurrent, MotorCurrent, LoadCurrent, GenOmega, MotorOmega,
                      MotorAngle };
    Kind kind;
    std::string device;
    int index = 0; // device index within its vector
};

struct System {
    double omega_b = 0.0;
    double h = 0.0;          // step size, s
    int steps_per_period = 0;
    double period = 0.0;

    std::vector<BusNode> buses;
    std::vector<BranchInst> branches;
    std::vector<LoadInst> loads;
    std::vector<SyncInst> gens;
    std::vector<MotorInst> motors;
    std::vector<RecordChannel> records;

    int nstates = 0;
    std::vector<std::string> state_names;
    std::unordered_map<int, int> bus_index; // netlist bus id -> index

    int bus_of(int netlist_id) const;
    // State derivatives; inj is 3*nbuses scratch for per-phase bus current
    // injections (returned for diagnostics).
    void rhs(double t, const Eigen::VectorXd& x, Eigen::VectorXd& dx, Eigen::VectorXd& inj) const;
    double bus_voltage(int bus, int phase, double t, const Eigen::VectorXd& x) const;
    // Stator current injection of machine dev into its bus (sign as seen by
    // the network; negative values for the motor mean it draws current).
    void gen_current(int idx, double t, const Eigen::VectorXd& x, double* iabc) const;
    void motor_current(int idx, double t, const Eigen::VectorXd& x, double* iabc) const;
};

// Assembles the spec at step h; requires T/h integer and every bus to carry
// shunt capacitance. Load parameters default to the constant-impedance
// equivalent of the allocated load at 1 p.u. voltage until apply_unknowns
// overwrites them.
System build_system(const SystemSpec& spec, double h);

// Test-oriented incremental assembly of small circuits.
class SystemBuilder {
  public:
    SystemBuilder(double nominal_freq, double h);
    int add_source_bus(const std::string& name, const std::array<SourceWave, 3>& waves);
    int add_cap_bus(const std::string& name, double bsh);
    void add_branch(const std::string& name, int fbus, int tbus, double r, double x,
                    double ratio = 1.0);
    void add_load(const std::string& name, int bus, std::array<double, 3> r,
                  std::array<double, 3> x);
    void add_gen(const std::string& name, int bus, const SyncMachinePars& p, double efd, double tm);
    void add_motor(const std::string& name, int bus, const MotorPars& p, double tl);
    System finalize();

  private:
    System sys_;
};

struct TrajectoryRecord {
    Eigen::VectorXd start_state, end_state;
    double t0 = 0.0;
    double period_T = 0.0;
    int steps_per_period = 0;
    int periods = 1;
    int step_count = 0;
    std::vector<std::pair<std::string, WaveRecord>> waves;
    std::vector<Eigen::VectorXd> boundaries; // states at each period boundary

    const WaveRecord* wave(const std::string& name) const;
};

enum class FirstStepMode { BackwardEulerHalves, Trapezoidal };

// Runs the system for `periods` fundamental periods from the given state.
// Each step is one implicit trapezoidal step solved by Newton iteration to
// 1e-12; the first step of the run is replaced by two half-length backward
// Euler steps to absorb an inconsistent start. The system itself is never
// mutated, so repeated evaluation is bit-identical.
TrajectoryRecord run_period(const System& sys, const Eigen::VectorXd& from, double t0 = 0.0,
                            int periods = 1,
                            FirstStepMode first = FirstStepMode::BackwardEulerHalves);

// Waveform CSV: header `t,<device>.<quantity>[.<phase>]`, one row per step,
// full precision.
void write_waveforms_csv(const std::string& path, const TrajectoryRecord& traj);

} // namespace pss
