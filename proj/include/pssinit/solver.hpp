#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pssinit/options.hpp"

namespace pss {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Dense right preconditioner and its inner-update shadow. M maps residual
// space back to unknown space; both are refined with rank-one Broyden
// secant updates (outer between Newton iterations, inner per Krylov
// direction).
struct Preconditioner {
    Eigen::MatrixXd M;
    Eigen::MatrixXd M0;
    bool frozen_identity = false;

    explicit Preconditioner(int m)
        : M(Eigen::MatrixXd::Identity(m, m)), M0(Eigen::MatrixXd::Identity(m, m)) {}
};

struct SolveStats {
    std::vector<double> residual_norms; // one per Newton iteration, plus iteration 0
    std::vector<int> krylov_per_iter;
    long f_evals = 0;
    long krylov_total = 0;
    bool converged = false;
    bool aborted = false;
    std::string abort_reason;
    int precond_skips = 0;
    // Populated when SolverOptions::check_invariants is set.
    double max_secant_violation = 0.0;
    double max_ortho_violation = 0.0;

    int iterations() const { return int(residual_norms.size()) - 1; }
};

// Applies the stored rotations 0..k-1 to column k of H, forms the new
// rotation c(k), s(k) zeroing H(k+1,k), and rotates g(k:k+1). Indices are
// zero-based; v = 0 degenerates to the identity rotation.
void givens_qr_update(Eigen::MatrixXd& H, int k, Eigen::VectorXd& c, Eigen::VectorXd& s,
                      Eigen::VectorXd& g);

// Solves the leading k x k upper triangle of H against g. Throws on a zero
// diagonal entry.
Eigen::VectorXd back_substitute(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, int k);

// Rank-one secant update M += ((dx - M dF) / (dx^T M dF)) dx^T M, after
// which M dF = dx. Skipped (and counted) when the denominator is within
// roundoff of zero.
void precond_outer_update(Preconditioner& pre, const Eigen::VectorXd& dx,
                          const Eigen::VectorXd& df, SolveStats* stats = nullptr,
                          bool check = false);

// Same update applied to the shadow M0 with the scaled Krylov direction
// eps*zbar in place of dx. Reuses residuals already computed by the Arnoldi
// step, so it costs no extra F evaluations.
void precond_inner_update(Preconditioner& pre, const Eigen::VectorXd& ez,
                          const Eigen::VectorXd& df, SolveStats* stats = nullptr,
                          bool check = false);

struct GmresResult {
    Eigen::VectorXd dx;
    int k = 0;           // Krylov directions used
    long f_evals = 0;    // directional residual evaluations
    bool hit_cap = false;
    double final_rho = 0.0;
};

// One inner finite-difference GMRES solve: builds the Arnoldi basis from
// directional differences (F(X + eps z) - F(X))/eps, applies Givens
// rotations incrementally, and exits at errtol = max(0.5*tolerance,
// reltol*|FX|), happy breakdown, or the Krylov cap. With a preconditioner,
// directions are zbar = M Q(:,k), the inner Broyden update runs after each
// directional evaluation, and the correction is mapped back through M.
GmresResult gmres_inner(const ResidualFn& F, const Eigen::VectorXd& X, const Eigen::VectorXd& FX,
                        const SolverOptions& opts, Preconditioner* pre = nullptr,
                        SolveStats* stats = nullptr);

// Finite-difference Newton-GMRES: full steps, no damping. Non-convergence
// at maxiter returns with stats rather than throwing; an F evaluation
// failure aborts with the reason recorded.
std::pair<Eigen::VectorXd, SolveStats> newton_gmres(const ResidualFn& F, Eigen::VectorXd X,
                                                    const SolverOptions& opts);

} // namespace pss
