#include <CLI11.hpp>
#include <cstdio>
#include <exception>

#include "pssinit/pipeline.hpp"

namespace {

int cmd_init(const pss::RunConfig& cfg) {
    const auto res = pss::run_init(cfg);
    std::printf("unknowns: %d\n", res.layout.m());
    std::printf("%-6s %-14s %-8s\n", "iter", "residual", "krylov");
    for (std::size_t i = 0; i < res.stats.residual_norms.size(); ++i)
        std::printf("%-6zu %-14.6e %-8d\n", i, res.stats.residual_norms[i],
                    i > 0 ? res.stats.krylov_per_iter[i - 1] : 0);
    std::printf("iterations: %d\n", res.stats.iterations());
    std::printf("F evaluations: %ld\n", res.stats.f_evals);
    std::printf("final residual 2-norm: %.6e\n", res.stats.residual_norms.back());
    std::printf("%s\n", res.stats.converged ? "converged" : "NOT CONVERGED");
    if (res.stats.aborted)
        std::fprintf(stderr, "aborted: %s\n", res.stats.abort_reason.c_str());
    return res.stats.converged ? 0 : 1;
}

int cmd_simulate(const pss::RunConfig& cfg, const std::string& solution_path) {
    pss::InitResult init;
    init.spec = pss::load_spec(cfg);
    const double h = init.spec.period() / cfg.step_frac;
    pss::System sys = pss::build_system(init.spec, h);
    init.layout = pss::build_layout(init.spec, sys);
    init.x = pss::read_solution_csv(solution_path, init.layout);
    const auto traj = pss::run_simulate(cfg, init);
    std::printf("simulated %d periods, %d steps/period -> %s/waveforms.csv\n", traj.periods,
                traj.steps_per_period, cfg.out_dir.c_str());
    return 0;
}

int cmd_report(const std::string& waveforms, double freq) {
    const auto rows = pss::run_report(waveforms, freq);
    std::printf("%-24s %-13s %-13s %-13s %-13s\n", "channel", "dc", "fund", "h2", "drift");
    for (const auto& r : rows)
        std::printf("%-24s %-13.4e %-13.4e %-13.4e %-13.4e\n", r.channel.c_str(), r.dc, r.h1, r.h2,
                    r.drift);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"periodic steady-state initialization for multiphase transient simulation"};
    app.require_subcommand(1);

    pss::RunConfig icfg, scfg;
    double i_k = 0.0, s_k = 0.0, tol = 0.0, reltol = 0.0, eps = 0.0;
    int maxiter = 0;
    bool precond = true;

    auto* init = app.add_subcommand("init", "solve the steady-state initialization problem");
    init->add_option("netlist", icfg.netlist_path, "system netlist file")->required();
    init->add_option("--out", icfg.out_dir, "output directory");
    auto* io_k = init->add_option("--k", i_k, "override the load unbalance factor");
    init->add_option("--step-frac", icfg.step_frac, "initialization steps per period");
    auto* o_tol = init->add_option("--tol", tol, "Newton tolerance");
    auto* o_rel = init->add_option("--reltol", reltol, "GMRES relative tolerance");
    auto* o_eps = init->add_option("--eps", eps, "finite-difference perturbation");
    auto* o_max = init->add_option("--maxiter", maxiter, "Newton iteration cap");
    auto* o_pre = init->add_flag("--precondition,!--no-precondition", precond,
                                 "Broyden-updated right preconditioner");
    init->add_flag("!--no-refine", icfg.refine_sweep,
                   "skip the per-phase refinement sweep in the guess");

    auto* sim = app.add_subcommand("simulate", "free simulation from a converged solution");
    sim->add_option("netlist", scfg.netlist_path, "system netlist file")->required();
    sim->add_option("--out", scfg.out_dir, "output directory");
    auto* so_k = sim->add_option("--k", s_k, "override the load unbalance factor");
    std::string solution = "solution.csv";
    sim->add_option("--solution", solution, "solution.csv from init")->required();
    sim->add_option("--periods", scfg.periods, "periods to simulate");
    sim->add_option("--step", scfg.sim_step,
                    "simulation step in seconds (rounded to divide the period)");

    auto* rep = app.add_subcommand("report", "periodicity and harmonic report from waveforms");
    std::string waveforms = "waveforms.csv";
    double freq = 60.0;
    rep->add_option("waveforms", waveforms, "waveform CSV from simulate")->required();
    rep->add_option("--freq", freq, "nominal fundamental frequency, Hz");

    CLI11_PARSE(app, argc, argv);

    try {
        if (init->parsed()) {
            if (io_k->count())
                icfg.k_override = i_k;
            if (o_tol->count())
                icfg.tol = tol;
            if (o_rel->count())
                icfg.reltol = reltol;
            if (o_eps->count())
                icfg.eps = eps;
            if (o_max->count())
                icfg.maxiter = maxiter;
            if (o_pre->count())
                icfg.precondition = precond;
            return cmd_init(icfg);
        }
        if (sim->parsed()) {
            if (so_k->count())
                scfg.k_override = s_k;
            return cmd_simulate(scfg, solution);
        }
        if (rep->parsed())
            return cmd_report(waveforms, freq);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
