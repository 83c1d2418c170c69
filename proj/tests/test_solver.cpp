#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "pssinit/solver.hpp"

using namespace pss;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_well_conditioned(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            a(i, j) = u(rng) + (i == j ? double(n) : 0.0); // diagonally dominant
    return a;
}

ResidualFn linear_oracle(const MatrixXd& j, const VectorXd& xstar) {
    return [j, xstar](const VectorXd& x) -> VectorXd { return j * (x - xstar); };
}

} // namespace

TEST_CASE("givens_qr_update reference columns") {
    // column tail (3, 4): v = 5, c = 3/5, s = -4/5, H(k,k) = 5
    MatrixXd h = MatrixXd::Zero(2, 1);
    h(0, 0) = 3.0;
    h(1, 0) = 4.0;
    VectorXd c(2), s(2), g(2);
    g << 7.0, 0.0;
    givens_qr_update(h, 0, c, s, g);
    CHECK(c(0) == doctest::Approx(0.6));
    CHECK(s(0) == doctest::Approx(-0.8));
    CHECK(h(0, 0) == doctest::Approx(5.0));
    CHECK(h(1, 0) == 0.0);

    // already-triangular tail (a, 0): identity rotation, g unchanged
    MatrixXd h2 = MatrixXd::Zero(2, 1);
    h2(0, 0) = 2.5;
    VectorXd g2(2);
    g2 << 1.0, 0.0;
    givens_qr_update(h2, 0, c, s, g2);
    CHECK(c(0) == doctest::Approx(1.0));
    CHECK(s(0) == doctest::Approx(0.0));
    CHECK(g2(0) == doctest::Approx(1.0));
    CHECK(g2(1) == doctest::Approx(0.0));

    // no-progress rotation (c,s) = (0,-1) maps g = (rho, 0) to (0, -rho)
    MatrixXd h3 = MatrixXd::Zero(2, 1);
    h3(0, 0) = 0.0;
    h3(1, 0) = 4.0;
    VectorXd g3(2);
    g3 << 9.0, 0.0;
    givens_qr_update(h3, 0, c, s, g3);
    CHECK(c(0) == doctest::Approx(0.0));
    CHECK(s(0) == doctest::Approx(-1.0));
    CHECK(g3(0) == doctest::Approx(0.0));
    CHECK(g3(1) == doctest::Approx(-9.0));
}

TEST_CASE("back_substitute") {
    MatrixXd id = MatrixXd::Identity(3, 3);
    VectorXd g(3);
    g << 1.0, -2.0, 0.5;
    CHECK((back_substitute(id, g, 3) - g).norm() == 0.0);

    MatrixXd h(2, 2);
    h << 2.0, 1.0, 0.0, 1.0;
    VectorXd g2(2);
    g2 << 3.0, 1.0;
    const VectorXd y = back_substitute(h, g2, 2);
    CHECK(y(0) == doctest::Approx(1.0));
    CHECK(y(1) == doctest::Approx(1.0));

    MatrixXd h1(1, 1);
    h1 << 4.0;
    VectorXd g1(1);
    g1 << 2.0;
    CHECK(back_substitute(h1, g1, 1)(0) == doctest::Approx(0.5));

    MatrixXd sing = MatrixXd::Zero(2, 2);
    CHECK_THROWS(back_substitute(sing, g2, 2));
}

TEST_CASE("broyden updates enforce the secant condition") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        Preconditioner pre(5);
        pre.M = random_well_conditioned(5, 100 + unsigned(rep));
        VectorXd dx(5), df(5);
        for (int i = 0; i < 5; ++i) {
            dx(i) = u(rng);
            df(i) = u(rng);
        }
        precond_outer_update(pre, dx, df);
        CHECK((pre.M * df - dx).norm() <= 1e-10 * dx.norm());

        pre.M0 = random_well_conditioned(5, 200 + unsigned(rep));
        precond_inner_update(pre, dx, df);
        CHECK((pre.M0 * df - dx).norm() <= 1e-10 * dx.norm());
    }
}

TEST_CASE("broyden update no-ops and guards") {
    Preconditioner pre(3);
    VectorXd dx(3), df(3);
    dx << 1.0, 2.0, 3.0;
    df = dx; // already secant with M = I
    const MatrixXd before = pre.M;
    precond_outer_update(pre, dx, df);
    CHECK((pre.M - before).norm() == 0.0);

    // dx orthogonal to M*df -> skipped, counted
    SolveStats stats;
    VectorXd dx2(3), df2(3);
    dx2 << 1.0, 0.0, 0.0;
    df2 << 0.0, 1.0, 0.0;
    precond_outer_update(pre, dx2, df2, &stats);
    CHECK(stats.precond_skips == 1);
}

TEST_CASE("gmres_inner identity Jacobian finishes in one direction") {
    const int n = 6;
    const VectorXd xstar = VectorXd::LinSpaced(n, -1.0, 1.0);
    auto f = linear_oracle(MatrixXd::Identity(n, n), xstar);
    const VectorXd x0 = VectorXd::Zero(n);
    const VectorXd fx = f(x0);
    SolverOptions opts;
    opts.tolerance = 1e-12;
    opts.reltol = 1e-10;
    const auto res = gmres_inner(f, x0, fx, opts);
    CHECK(res.k == 1);
    CHECK((res.dx + fx).norm() < 1e-9);
}

TEST_CASE("gmres_inner 90-degree rotation needs exactly two directions") {
    MatrixXd rot(2, 2);
    rot << 0.0, -1.0, 1.0, 0.0;
    VectorXd xstar(2);
    xstar << 0.4, -0.7;
    auto f = linear_oracle(rot, xstar);
    const VectorXd x0 = VectorXd::Zero(2);
    const VectorXd fx = f(x0);
    SolverOptions opts;
    opts.tolerance = 1e-12;
    opts.reltol = 1e-10;
    const auto res = gmres_inner(f, x0, fx, opts);
    CHECK(res.k == 2);
    const VectorXd expect = -rot.lu().solve(fx);
    CHECK((res.dx - expect).norm() < 1e-8);
}

TEST_CASE("gmres_inner matches a dense direct solve on random systems") {
    for (const int n : {20, 50}) {
        const MatrixXd j = random_well_conditioned(n, unsigned(n));
        VectorXd xstar(n);
        std::mt19937 rng(unsigned(2 * n));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int i = 0; i < n; ++i)
            xstar(i) = u(rng);
        auto f = linear_oracle(j, xstar);
        const VectorXd x0 = VectorXd::Zero(n);
        const VectorXd fx = f(x0);
        SolverOptions opts;
        opts.tolerance = 2e-12;
        opts.reltol = 1e-10;
        const auto res = gmres_inner(f, x0, fx, opts);
        const VectorXd expect = j.partialPivLu().solve(-fx);
        CHECK((res.dx - expect).norm() < 1e-8 * expect.norm());
    }
}

TEST_CASE("inner residual is non-increasing on a linear oracle") {
    const int n = 30;
    const MatrixXd j = random_well_conditioned(n, 77);
    auto f = linear_oracle(j, VectorXd::Ones(n));
    const VectorXd x0 = VectorXd::Zero(n);
    const VectorXd fx = f(x0);

    // track rho by running with increasing caps
    SolverOptions opts;
    opts.tolerance = 1e-14;
    opts.reltol = 1e-13;
    double prev = fx.norm();
    for (int cap = 1; cap <= 12; ++cap) {
        opts.m_max = cap;
        const auto res = gmres_inner(f, x0, fx, opts);
        CHECK(res.final_rho <= prev * (1.0 + 1e-12));
        prev = res.final_rho;
    }
}

TEST_CASE("newton_gmres on a linear scalar problem converges in one iteration") {
    auto f = [](const VectorXd& x) -> VectorXd {
        VectorXd r(1);
        r(0) = x(0) - 3.0;
        return r;
    };
    SolverOptions opts;
    opts.precondition = false;
    VectorXd x0(1);
    x0 << 0.0;
    const auto [x, stats] = newton_gmres(f, x0, opts);
    CHECK(stats.converged);
    CHECK(stats.iterations() == 1);
    CHECK(x(0) == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("newton_gmres on x^2 - 4 converges quadratically to 2") {
    auto f = [](const VectorXd& x) -> VectorXd {
        VectorXd r(1);
        r(0) = x(0) * x(0) - 4.0;
        return r;
    };
    SolverOptions opts;
    opts.precondition = false;
    opts.tolerance = 1e-10;
    VectorXd x0(1);
    x0 << 3.0;
    const auto [x, stats] = newton_gmres(f, x0, opts);
    CHECK(stats.converged);
    CHECK(x(0) == doctest::Approx(2.0).epsilon(1e-9));
    for (std::size_t i = 1; i < stats.residual_norms.size(); ++i)
        CHECK(stats.residual_norms[i] < stats.residual_norms[i - 1]);
    CHECK(stats.residual_norms.back() < 1e-10);
}

TEST_CASE("F-evaluation accounting") {
    const int n = 12;
    const MatrixXd j = random_well_conditioned(n, 9);
    auto base = linear_oracle(j, VectorXd::Ones(n));
    long calls = 0;
    ResidualFn counted = [&](const VectorXd& x) {
        ++calls;
        return base(x);
    };
    SolverOptions opts;
    opts.precondition = true;
    const auto [x, stats] = newton_gmres(counted, VectorXd::Zero(n), opts);
    CHECK(stats.converged);
    CHECK(stats.f_evals == calls);
    CHECK(stats.f_evals == stats.iterations() + 1 + stats.krylov_total);
    CHECK(int(stats.residual_norms.size()) == stats.iterations() + 1);
}

TEST_CASE("preconditioning off equals preconditioning frozen to identity") {
    // mildly nonlinear system so several Newton iterations run
    const int n = 8;
    const MatrixXd j = random_well_conditioned(n, 13);
    auto f = [&](const VectorXd& x) -> VectorXd {
        VectorXd r = j * x;
        for (int i = 0; i < n; ++i)
            r(i) += 0.3 * x(i) * x(i) - 1.0;
        return r;
    };
    SolverOptions off;
    off.precondition = false;
    off.tolerance = 1e-11;
    SolverOptions frozen = off;
    frozen.precondition = true;
    frozen.precond_frozen_identity = true;

    const auto [x1, s1] = newton_gmres(f, VectorXd::Zero(n), off);
    const auto [x2, s2] = newton_gmres(f, VectorXd::Zero(n), frozen);
    CHECK(s1.converged);
    CHECK(s2.converged);
    CHECK(s1.iterations() == s2.iterations());
    CHECK((x1 - x2).lpNorm<Eigen::Infinity>() < 1e-12);
    for (std::size_t i = 0; i < s1.residual_norms.size(); ++i)
        CHECK(s1.residual_norms[i] == doctest::Approx(s2.residual_norms[i]).epsilon(1e-12));
}

TEST_CASE("maxiter exhaustion reports non-convergence with stats") {
    auto f = [](const VectorXd& x) -> VectorXd {
        VectorXd r(1);
        r(0) = x(0) * x(0) + 1.0; // no real root
        return r;
    };
    SolverOptions opts;
    opts.precondition = false;
    opts.maxiter = 4;
    VectorXd x0(1);
    x0 << 2.0;
    const auto [x, stats] = newton_gmres(f, x0, opts);
    CHECK(!stats.converged);
    CHECK(!stats.aborted);
    CHECK(stats.iterations() == 4);
}

TEST_CASE("F evaluation failure aborts with stats") {
    int count = 0;
    ResidualFn f = [&](const VectorXd& x) -> VectorXd {
        if (++count > 1)
            throw std::runtime_error("simulated failure");
        VectorXd r(2);
        r << x(0) - 1.0, x(1) + 2.0;
        return r;
    };
    SolverOptions opts;
    opts.precondition = false;
    const auto [x, stats] = newton_gmres(f, VectorXd::Zero(2), opts);
    CHECK(stats.aborted);
    CHECK(stats.abort_reason.find("simulated failure") != std::string::npos);
}

TEST_CASE("relative eps mode scales the perturbation") {
    // with huge |X|, an absolute eps of 1e-4 underflows the FD signal in
    // float terms; the relative mode stays well-scaled
    auto f = [](const VectorXd& x) -> VectorXd {
        VectorXd r(1);
        r(0) = (x(0) - 2e8) / 1e8;
        return r;
    };
    SolverOptions opts;
    opts.precondition = false;
    opts.eps_relative = true;
    opts.tolerance = 1e-8;
    VectorXd x0(1);
    x0 << 1e8;
    const auto [x, stats] = newton_gmres(f, x0, opts);
    CHECK(stats.converged);
    CHECK(x(0) == doctest::Approx(2e8).epsilon(1e-6));
}
