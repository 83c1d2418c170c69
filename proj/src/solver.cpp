#include "pssinit/solver.hpp"

#include <cmath>
#include <stdexcept>

namespace pss {

void givens_qr_update(Eigen::MatrixXd& H, int k, Eigen::VectorXd& c, Eigen::VectorXd& s,
                      Eigen::VectorXd& g) {
    for (int i = 0; i < k; ++i) {
        const double t1 = c(i) * H(i, k) - s(i) * H(i + 1, k);
        const double t2 = s(i) * H(i, k) + c(i) * H(i + 1, k);
        H(i, k) = t1;
        H(i + 1, k) = t2;
    }
    const double v = std::hypot(H(k, k), H(k + 1, k));
    if (v == 0.0) {
        c(k) = 1.0;
        s(k) = 0.0;
    } else {
        c(k) = H(k, k) / v;
        s(k) = -H(k + 1, k) / v;
    }
    H(k, k) = c(k) * H(k, k) - s(k) * H(k + 1, k);
    H(k + 1, k) = 0.0;
    const double g1 = c(k) * g(k) - s(k) * g(k + 1);
    const double g2 = s(k) * g(k) + c(k) * g(k + 1);
    g(k) = g1;
    g(k + 1) = g2;
}

Eigen::VectorXd back_substitute(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, int k) {
    Eigen::VectorXd y(k);
    for (int i = k - 1; i >= 0; --i) {
        if (H(i, i) == 0.0)
            throw std::runtime_error("back_substitute: zero diagonal entry");
        double acc = g(i);
        for (int j = i + 1; j < k; ++j)
            acc -= H(i, j) * y(j);
        y(i) = acc / H(i, i);
    }
    return y;
}

namespace {

void broyden_update(Eigen::MatrixXd& M, const Eigen::VectorXd& dx, const Eigen::VectorXd& df,
                    SolveStats* stats, bool check) {
    const Eigen::VectorXd mdf = M * df;
    const double den = dx.dot(mdf);
    if (std::abs(den) <= 1e-14 * dx.norm() * mdf.norm()) {
        if (stats)
            ++stats->precond_skips;
        return;
    }
    const Eigen::VectorXd u = (dx - mdf) / den;
    const Eigen::RowVectorXd w = dx.transpose() * M;
    M.noalias() += u * w;
    if (check && stats) {
        const double viol = (M * df - dx).norm() / std::max(dx.norm(), 1e-300);
        stats->max_secant_violation = std::max(stats->max_secant_violation, viol);
    }
}

} // namespace

void precond_outer_update(Preconditioner& pre, const Eigen::VectorXd& dx,
                          const Eigen::VectorXd& df, SolveStats* stats, bool check) {
    if (pre.frozen_identity)
        return;
    broyden_update(pre.M, dx, df, stats, check);
}

void precond_inner_update(Preconditioner& pre, const Eigen::VectorXd& ez,
                          const Eigen::VectorXd& df, SolveStats* stats, bool check) {
    if (pre.frozen_identity)
        return;
    broyden_update(pre.M0, ez, df, stats, check);
}

GmresResult gmres_inner(const ResidualFn& F, const Eigen::VectorXd& X, const Eigen::VectorXd& FX,
                        const SolverOptions& opts, Preconditioner* pre, SolveStats* stats) {
    const int m = int(X.size());
    const int cap = opts.m_max > 0 ? std::min(opts.m_max, m) : m;
    const double rho0 = FX.norm();
    const double errtol = std::max(0.5 * opts.tolerance, opts.reltol * rho0);
    double eps = opts.eps;
    if (opts.eps_relative)
        eps *= 1.0 + X.lpNorm<Eigen::Infinity>();

    GmresResult out;
    if (rho0 == 0.0)
        return out;

    Eigen::MatrixXd Q(m, cap + 1);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(cap + 1, cap);
    Eigen::VectorXd c(cap + 1), s(cap + 1), g = Eigen::VectorXd::Zero(cap + 1);
    Q.col(0) = -FX / rho0;
    g(0) = rho0;

    double rho = rho0;
    int k = 0;
    Eigen::VectorXd zbar(m), w(m);
    while (rho > errtol && k < cap) {
        const int j = k; // zero-based column of the new direction
        if (pre)
            zbar.noalias() = pre->M * Q.col(j);
        else
            zbar = Q.col(j);
        w = F(X + eps * zbar);
        ++out.f_evals;
        w -= FX;
        if (pre)
            precond_inner_update(*pre, eps * zbar, w, stats, opts.check_invariants);
        w /= eps;
        for (int i = 0; i <= j; ++i) {
            H(i, j) = w.dot(Q.col(i));
            w.noalias() -= H(i, j) * Q.col(i);
        }
        H(j + 1, j) = w.norm();
        if (H(j + 1, j) > 0.0)
            Q.col(j + 1) = w / H(j + 1, j);
        else
            Q.col(j + 1).setZero(); // happy breakdown; rotations drive rho to 0
        givens_qr_update(H, j, c, s, g);
        rho = std::abs(g(j + 1));
        ++k;
    }

    Eigen::VectorXd y = back_substitute(H, g, k);
    out.dx.noalias() = Q.leftCols(k) * y;
    if (pre)
        out.dx = pre->M * out.dx;
    out.k = k;
    out.hit_cap = rho > errtol;
    out.final_rho = rho;

    if (stats && opts.check_invariants && k > 0) {
        const Eigen::MatrixXd qk = Q.leftCols(k);
        const double viol =
            (qk.transpose() * qk - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
        stats->max_ortho_violation = std::max(stats->max_ortho_violation, viol);
    }
    return out;
}

std::pair<Eigen::VectorXd, SolveStats> newton_gmres(const ResidualFn& F, Eigen::VectorXd X,
                                                    const SolverOptions& opts) {
    SolveStats stats;
    const int m = int(X.size());
    Preconditioner pre(opts.precondition ? m : 0);
    pre.frozen_identity = opts.precond_frozen_identity;

    Eigen::VectorXd FX, prev_fx, prev_dx;
    int iter = 0;
    while (true) {
        try {
            FX = F(X);
        } catch (const std::exception& e) {
            stats.aborted = true;
            stats.abort_reason = e.what();
            return {X, stats};
        }
        ++stats.f_evals;
        const double rho = FX.norm();
        stats.residual_norms.push_back(rho);
        if (rho < opts.tolerance) {
            stats.converged = true;
            return {X, stats};
        }
        if (iter >= opts.maxiter)
            return {X, stats};
        ++iter;

        if (opts.precondition && iter > 1) {
            pre.M = pre.M0;
            precond_outer_update(pre, prev_dx, FX - prev_fx, &stats, opts.check_invariants);
        }
        if (opts.precondition)
            pre.M0 = pre.M;

        GmresResult inner;
        try {
            inner = gmres_inner(F, X, FX, opts, opts.precondition ? &pre : nullptr, &stats);
        } catch (const std::exception& e) {
            stats.aborted = true;
            stats.abort_reason = e.what();
            return {X, stats};
        }
        stats.f_evals += inner.f_evals;
        stats.krylov_total += inner.k;
        stats.krylov_per_iter.push_back(inner.k);

        prev_fx = FX;
        prev_dx = inner.dx;
        X += inner.dx;
    }
}

} // namespace pss
