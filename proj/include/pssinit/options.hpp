#pragma once

namespace pss {

// Options for the outer Newton loop and the inner finite-difference GMRES.
// The GMRES absolute tolerance is derived as 0.5 * tolerance and is not a
// separate knob.
struct SolverOptions {
    double tolerance = 1e-6;  // Newton 2-norm stopping tolerance
    int maxiter = 20;         // Newton iteration cap
    double reltol = 1e-3;     // GMRES relative tolerance
    double eps = 1e-4;        // finite-difference perturbation
    bool eps_relative = false; // scale eps by (1 + |X|_inf); off by default
    bool precondition = true; // Broyden-updated right preconditioner
    int m_max = 0;            // Krylov cap; 0 means problem dimension

    // Test/diagnostic knobs, not exposed on the CLI.
    bool precond_frozen_identity = false; // keep M = M0 = I, skip updates
    bool check_invariants = false;        // track secant/orthogonality violations
};

} // namespace pss
