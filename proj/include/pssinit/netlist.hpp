#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "pssinit/options.hpp"
#include "pssinit/phasor.hpp"

namespace pss {

// ---------------------------------------------------------------------------
// System description. All electrical quantities are per-unit on the single
// system MVA base; machine records are normalized to the system base at
// parse time. Time constants in seconds, angles in radians.
// ---------------------------------------------------------------------------

struct BusSpec {
    int id = 0;
    std::string name;
};

// Per-phase series R-L branch with total lumped charging susceptance b
// (split half per end) and a from-side off-nominal ratio.
struct BranchSpec {
    std::string id;
    int from = 0, to = 0;
    double r = 0.0, x = 0.0, b = 0.0, ratio = 1.0;
};

struct GenSpec {
    std::string id;
    int bus = 0;
    double rated_mva = 0.0;
    double ra = 0.0, xl = 0.0;
    double xd = 0.0, xq = 0.0;      // synchronous
    double xd1 = 0.0, xq1 = 0.0;    // transient
    double xd2 = 0.0, xq2 = 0.0;    // subtransient
    double td01 = 0.0, tq01 = 0.0;  // open-circuit transient time constants
    double td02 = 0.0, tq02 = 0.0;  // open-circuit subtransient time constants
    double h = 0.0, d = 0.0;
};

struct MotorSpec {
    std::string id;
    int bus = 0;
    double rated_mva = 0.0;
    double rs = 0.0, xls = 0.0;
    double rr = 0.0, xlr = 0.0;
    double xm = 0.0;
    double h = 0.0, d = 0.0;
    std::string conn = "floating_y";
};

struct LoadSpec {
    std::string id;
    int bus = 0;
    std::complex<double> s_total; // three-phase total, p.u.
    ZipCoeffs zip;
    double alloc_k = 0.0; // per-phase unbalance allocation factor, |k| < 1
};

struct PFCondition {
    enum class Kind { VTheta, PV, PQ, MotorP };
    std::string device;
    Kind kind = Kind::PQ;
    double v = 0.0, theta = 0.0; // VTheta / PV
    double p = 0.0, q = 0.0;     // PV / PQ / MotorP targets (nominal P0, Q0 for PQ)
    ZipCoeffs zip;
    PowerScope scope = PowerScope::PerPhase;
};

struct SystemSpec {
    double base_mva = 100.0;
    double nominal_freq = 60.0;
    std::vector<BusSpec> buses;
    std::vector<BranchSpec> branches;
    std::vector<GenSpec> generators;
    std::vector<MotorSpec> motors;
    std::vector<LoadSpec> loads;
    std::vector<PFCondition> conditions;
    SolverOptions solver;

    double omega_b() const;
    double period() const;
    const BusSpec* find_bus(int id) const;
    const LoadSpec* find_load(const std::string& device) const;
};

class ParseError : public std::runtime_error {
  public:
    ParseError(int line, const std::string& msg);
    int line() const { return line_; }

  private:
    int line_;
};

// Parses the line-oriented netlist format (see README for the field order of
// every section). Machine per-unit data are rebased to the system MVA base.
SystemSpec parse_system(const std::string& text);

// Canonical text form; parse(serialize(spec)) reproduces spec exactly.
std::string serialize_system(const SystemSpec& spec);

// S -> (Sa, Sb, Sc) = ((1-k) S/3, S/3, (1+k) S/3). Rejects |k| >= 1.
ThreePhase<std::complex<double>> allocate_load(const std::complex<double>& s, double k);

// Structural diagnostics; empty result means the spec is ready for
// initialization (invariants hold and the power-flow residual count matches
// the free dependent-parameter/external-input count).
std::vector<std::string> validate(const SystemSpec& spec);

// Residual / free-quantity bookkeeping shared by validate() and the unknown
// layout: per condition VTheta->2, PV->2, MotorP->1, PQ->2 (x3 per-phase);
// per device gen->2 inputs, motor->1 input, load->6 parameters.
int count_pf_residuals(const SystemSpec& spec);
int count_free_quantities(const SystemSpec& spec);

} // namespace pss
