#include "pssinit/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace pss {

SystemSpec load_spec(const RunConfig& cfg) {
    std::ifstream is(cfg.netlist_path);
    if (!is)
        throw std::runtime_error("cannot open netlist " + cfg.netlist_path);
    std::stringstream buf;
    buf << is.rdbuf();
    SystemSpec spec = parse_system(buf.str());

    if (cfg.k_override)
        for (auto& l : spec.loads)
            l.alloc_k = *cfg.k_override;
    if (cfg.tol)
        spec.solver.tolerance = *cfg.tol;
    if (cfg.reltol)
        spec.solver.reltol = *cfg.reltol;
    if (cfg.eps)
        spec.solver.eps = *cfg.eps;
    if (cfg.maxiter)
        spec.solver.maxiter = *cfg.maxiter;
    if (cfg.precondition)
        spec.solver.precondition = *cfg.precondition;
    spec.solver.check_invariants = cfg.check_invariants;

    const auto diags = validate(spec);
    if (!diags.empty()) {
        std::string msg = "validation failed:";
        for (const auto& d : diags)
            msg += "\n  " + d;
        throw std::runtime_error(msg);
    }
    return spec;
}

InitResult run_init(const RunConfig& cfg, bool write_outputs) {
    InitResult out;
    out.spec = load_spec(cfg);
    out.init_step = out.spec.period() / cfg.step_frac;

    auto ctx = make_context(out.spec, out.init_step);
    PowerFlowOptions pf_opts;
    pf_opts.warp_h = out.init_step;
    pf_opts.refine_sweep = cfg.refine_sweep;
    const PowerFlowSolution pf = power_flow(out.spec, pf_opts);
    const Eigen::VectorXd x0 =
        assemble_X0(out.spec, ctx.templ, ctx.layout, pf, out.init_step);

    ResidualFn F = [&ctx](const Eigen::VectorXd& X) { return evaluate_F(X, ctx).values; };
    auto [x, stats] = newton_gmres(F, x0, out.spec.solver);
    out.x = std::move(x);
    out.stats = std::move(stats);
    out.layout = ctx.layout;
    out.f_evals_context = ctx.f_evals.load();

    if (write_outputs) {
        std::filesystem::create_directories(cfg.out_dir);
        write_convergence_csv(cfg.out_dir + "/convergence.csv", out.stats);
        write_solution_csv(cfg.out_dir + "/solution.csv", out.layout, out.x);
    }
    return out;
}

TrajectoryRecord run_simulate(const RunConfig& cfg, const InitResult& init, bool write_outputs) {
    const double period = init.spec.period();
    int steps = int(std::llround(period / cfg.sim_step));
    if (steps < 5)
        steps = 5;
    const double h = period / steps;

    System sys = build_system(init.spec, h);
    UnknownLayout layout = build_layout(init.spec, sys);
    const Eigen::VectorXd x0 = apply_unknowns(sys, init.x, layout);
    TrajectoryRecord traj = run_period(sys, x0, 0.0, cfg.periods);
    if (write_outputs) {
        std::filesystem::create_directories(cfg.out_dir);
        write_waveforms_csv(cfg.out_dir + "/waveforms.csv", traj);
    }
    return traj;
}

std::vector<ReportRow> run_report(const std::string& waveform_csv, double nominal_freq) {
    std::ifstream is(waveform_csv);
    if (!is)
        throw std::runtime_error("cannot open " + waveform_csv);
    std::string header;
    if (!std::getline(is, header))
        throw std::runtime_error("empty waveform file");
    std::vector<std::string> names;
    {
        std::stringstream hs(header);
        std::string tok;
        while (std::getline(hs, tok, ','))
            names.push_back(tok);
    }
    if (names.size() < 2 || names[0] != "t")
        throw std::runtime_error("malformed waveform header");

    std::vector<std::vector<double>> cols(names.size());
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        std::stringstream ls(line);
        std::string tok;
        std::size_t c = 0;
        while (std::getline(ls, tok, ',') && c < cols.size())
            cols[c++].push_back(std::strtod(tok.c_str(), nullptr));
    }
    if (cols[0].size() < 2)
        throw std::runtime_error("waveform file holds no samples");

    const double dt = cols[0][1] - cols[0][0];
    const double omega0 = 2.0 * std::numbers::pi * nominal_freq;
    const auto per = std::size_t(std::llround(1.0 / (nominal_freq * dt)));

    std::vector<ReportRow> rows;
    for (std::size_t c = 1; c < cols.size(); ++c) {
        WaveRecord w;
        w.samples = cols[c];
        w.dt = dt;
        w.t_start = cols[0][0];
        ReportRow r;
        r.channel = names[c];
        r.dc = harmonic_magnitude(w, omega0, 0);
        r.h1 = harmonic_magnitude(w, omega0, 1);
        r.h2 = harmonic_magnitude(w, omega0, 2);
        const std::size_t last = w.samples.size() - 1;
        r.drift = last >= per ? std::abs(w.samples[last] - w.samples[last - per]) : 0.0;
        rows.push_back(r);
    }
    return rows;
}

void write_convergence_csv(const std::string& path, const SolveStats& stats) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot open " + path);
    os.precision(17);
    os << "iter,residual_2norm,cumulative_F_evals,krylov_iters\n";
    long cum = 1; // the iteration-0 residual evaluation
    for (std::size_t i = 0; i < stats.residual_norms.size(); ++i) {
        const int kry = i > 0 ? stats.krylov_per_iter[i - 1] : 0;
        if (i > 0)
            cum += 1 + kry; // directional evaluations plus the residual check
        os << i << "," << stats.residual_norms[i] << "," << cum << "," << kry << "\n";
    }
}

void write_solution_csv(const std::string& path, const UnknownLayout& layout,
                        const Eigen::VectorXd& x) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot open " + path);
    os.precision(17);
    os << "name,value\n";
    for (int i = 0; i < layout.m(); ++i)
        os << layout.name_of(i) << "," << x[i] << "\n";
}

Eigen::VectorXd read_solution_csv(const std::string& path, const UnknownLayout& layout) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(is, line); // header
    Eigen::VectorXd x = Eigen::VectorXd::Constant(layout.m(), std::nan(""));
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("malformed solution row: " + line);
        const std::string name = line.substr(0, comma);
        const int idx = layout.index_of(name);
        if (idx < 0)
            throw std::runtime_error("solution entry '" + name + "' not in layout");
        x[idx] = std::strtod(line.c_str() + comma + 1, nullptr);
    }
    if (!x.allFinite())
        throw std::runtime_error("solution file misses layout entries");
    return x;
}

} // namespace pss
