#pragma once

#include <optional>
#include <string>

#include "pssinit/initguess.hpp"
#include "pssinit/netlist.hpp"
#include "pssinit/shooting.hpp"
#include "pssinit/solver.hpp"

namespace pss {

// Operational configuration shared by the CLI and the acceptance suite.
struct RunConfig {
    std::string netlist_path;
    int step_frac = 25;        // initialization steps per fundamental period
    double sim_step = 250e-6;  // free-simulation step request, seconds
    int periods = 5;
    std::string out_dir = ".";
    std::optional<double> k_override;      // unbalance factor for every load
    std::optional<double> tol, reltol, eps;
    std::optional<int> maxiter;
    std::optional<bool> precondition;
    bool refine_sweep = true;
    bool check_invariants = false;
};

struct InitResult {
    SystemSpec spec;
    UnknownLayout layout;
    Eigen::VectorXd x;
    SolveStats stats;
    double init_step = 0.0;
    long f_evals_context = 0;
};

SystemSpec load_spec(const RunConfig& cfg);

// parse -> validate -> power-flow guess -> newton_gmres. Writes
// convergence.csv and solution.csv into cfg.out_dir when write_outputs is
// set.
InitResult run_init(const RunConfig& cfg, bool write_outputs = true);

// Rounds the requested step to an integer number of steps per period,
// simulates cfg.periods periods from the solution, and writes
// waveforms.csv. Returns the trajectory for further inspection.
TrajectoryRecord run_simulate(const RunConfig& cfg, const InitResult& init,
                              bool write_outputs = true);

// Periodicity-drift and harmonic-content table from a waveform CSV.
struct ReportRow {
    std::string channel;
    double dc = 0.0, h1 = 0.0, h2 = 0.0;
    double drift = 0.0; // |x(end) - x(end - T)|
};
std::vector<ReportRow> run_report(const std::string& waveform_csv, double nominal_freq);

void write_convergence_csv(const std::string& path, const SolveStats& stats);
void write_solution_csv(const std::string& path, const UnknownLayout& layout,
                        const Eigen::VectorXd& x);
Eigen::VectorXd read_solution_csv(const std::string& path, const UnknownLayout& layout);

} // namespace pss
