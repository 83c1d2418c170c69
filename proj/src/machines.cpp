#include "pssinit/machines.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pss {

namespace {

constexpr double kTwoPiOver3 = 2.0 * std::numbers::pi / 3.0;

std::array<double, 9> invert3(const Eigen::Matrix3d& m) {
    const Eigen::Matrix3d inv = m.inverse();
    std::array<double, 9> out{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            out[std::size_t(3 * r + c)] = inv(r, c);
    return out;
}

} // namespace

SyncMachinePars derive_sync_pars(const GenSpec& g, double omega_b) {
    SyncMachinePars p;
    p.ra = g.ra;
    p.ll = g.xl;
    p.lad = g.xd - g.xl;
    p.laq = g.xq - g.xl;

    // Transient/subtransient reactances peel off the rotor branches one at a
    // time; open-circuit time constants size the rotor resistances.
    const double ld1 = g.xd1 - g.xl;
    p.lfd = 1.0 / (1.0 / ld1 - 1.0 / p.lad);
    const double ld2 = g.xd2 - g.xl;
    p.l1d = 1.0 / (1.0 / ld2 - 1.0 / p.lad - 1.0 / p.lfd);
    p.rfd = (p.lad + p.lfd) / (omega_b * g.td01);
    p.r1d = (p.l1d + p.lad * p.lfd / (p.lad + p.lfd)) / (omega_b * g.td02);

    const double lq1 = g.xq1 - g.xl;
    p.l1q = 1.0 / (1.0 / lq1 - 1.0 / p.laq);
    const double lq2 = g.xq2 - g.xl;
    p.l2q = 1.0 / (1.0 / lq2 - 1.0 / p.laq - 1.0 / p.l1q);
    p.r1q = (p.laq + p.l1q) / (omega_b * g.tq01);
    p.r2q = (p.l2q + p.laq * p.l1q / (p.laq + p.l1q)) / (omega_b * g.tq02);

    p.two_h = 2.0 * g.h;
    p.damping = g.d;

    Eigen::Matrix3d d;
    d << -(p.ll + p.lad), p.lad, p.lad, //
        -p.lad, p.lad + p.lfd, p.lad,   //
        -p.lad, p.lad, p.lad + p.l1d;
    p.dinv = invert3(d);
    Eigen::Matrix3d q;
    q << -(p.ll + p.laq), p.laq, p.laq, //
        -p.laq, p.laq + p.l1q, p.laq,   //
        -p.laq, p.laq, p.laq + p.l2q;
    p.qinv = invert3(q);
    return p;
}

SyncSteadyState sync_steady_state(const SyncMachinePars& p, const Phasor& v,
                                  const std::complex<double>& s) {
    using C = std::complex<double>;
    if (std::abs(v) <= 0.0)
        throw std::invalid_argument("sync_steady_state: zero terminal voltage");
    const C i = std::abs(s) > 0.0 ? std::conj(s / v) : C(0.0, 0.0);

    // q-axis direction from the quadrature-reactance internal voltage.
    const C eq = v + C(p.ra, p.xq()) * i;
    const double delta = std::arg(eq);
    const double theta0 = delta - std::numbers::pi / 2.0;
    const C vdq = phasor_to_dq(v, theta0);
    const C idq = phasor_to_dq(i, theta0);
    const double vq = vdq.imag();
    const double id = idq.real(), iq = idq.imag();

    const double ifd = (vq + p.ra * iq + p.xd() * id) / p.lad;
    const double psi_d = -p.xd() * id + p.lad * ifd;
    const double psi_q = -p.xq() * iq;

    SyncSteadyState out;
    out.state = {psi_d,
                 psi_q,
                 -p.lad * id + (p.lad + p.lfd) * ifd,
                 p.lad * (ifd - id),
                 -p.laq * iq,
                 -p.laq * iq,
                 delta,
                 1.0};
    out.efd = p.lad * ifd;
    out.tm = psi_d * iq - psi_q * id; // speed is 1, damping torque vanishes
    return out;
}

MotorPars derive_motor_pars(const MotorSpec& m) {
    MotorPars p;
    p.rs = m.rs;
    p.lls = m.xls;
    p.rr = m.rr;
    p.llr = m.xlr;
    p.lm = m.xm;
    p.two_h = 2.0 * m.h;
    p.damping = m.d;
    const double det = p.lss() * p.lrr() - p.lm * p.lm;
    p.minv = {p.lrr() / det, -p.lm / det, -p.lm / det, p.lss() / det};
    return p;
}

namespace {

struct MotorCircuit {
    std::complex<double> is, ir; // stator current in, rotor current
};

// Phasor ladder at slip s: v = (rs + j lss) is + j lm ir,
//                          0 = (rr/s + j lrr) ir + j lm is.
MotorCircuit motor_circuit(const MotorPars& p, const Phasor& v, double slip) {
    using C = std::complex<double>;
    MotorCircuit out;
    if (slip <= 0.0) {
        out.is = v / C(p.rs, p.lss());
        out.ir = C(0.0, 0.0);
        return out;
    }
    const C zs(p.rs, p.lss());
    const C zr(p.rr / slip, p.lrr());
    const C zm(0.0, p.lm);
    const C det = zs * zr - zm * zm;
    out.is = zr * v / det;
    out.ir = -zm * v / det;
    return out;
}

} // namespace

double motor_input_power(const MotorPars& p, const Phasor& v, double slip) {
    const auto c = motor_circuit(p, v, slip);
    return (v * std::conj(c.is)).real();
}

double motor_input_reactive(const MotorPars& p, const Phasor& v, double slip) {
    const auto c = motor_circuit(p, v, slip);
    return (v * std::conj(c.is)).imag();
}

MotorSteadyState motor_steady_state(const MotorPars& p, const Phasor& v, double p_target) {
    using C = std::complex<double>;

    // Locate the pull-out slip (input power peaks there) by golden-section
    // search, then bisect on the stable branch.
    const double gold = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 1e-9, hi = 0.9;
    double x1 = hi - gold * (hi - lo), x2 = lo + gold * (hi - lo);
    double f1 = motor_input_power(p, v, x1), f2 = motor_input_power(p, v, x2);
    for (int it = 0; it < 200; ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gold * (hi - lo);
            f2 = motor_input_power(p, v, x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gold * (hi - lo);
            f1 = motor_input_power(p, v, x1);
        }
    }
    const double s_peak = 0.5 * (lo + hi);
    const double p_peak = motor_input_power(p, v, s_peak);
    const double p_noload = motor_input_power(p, v, 0.0);

    double slip = 0.0;
    if (p_target > p_peak)
        throw std::runtime_error("motor_steady_state: requested power " + std::to_string(p_target) +
                                 " exceeds pull-out; feasible range (" + std::to_string(p_noload) +
                                 ", " + std::to_string(p_peak) + ")");
    if (p_target > p_noload) {
        double a = 1e-12, b = s_peak;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (a + b);
            if (motor_input_power(p, v, mid) < p_target)
                a = mid;
            else
                b = mid;
            if (b - a < 1e-16)
                break;
        }
        slip = 0.5 * (a + b);
    }

    const auto c = motor_circuit(p, v, slip);
    const C psi_s = p.lss() * c.is + p.lm * c.ir;
    const C psi_r = p.lm * c.is + p.lrr() * c.ir;

    MotorSteadyState out;
    out.slip = slip;
    out.state = {psi_s.real(), psi_s.imag(), psi_r.real(), psi_r.imag(), 1.0 - slip, 0.0};
    const double te = psi_s.real() * c.is.imag() - psi_s.imag() * c.is.real();
    out.tl = te - p.damping * (out.state[4] - 1.0);
    return out;
}

void park(double theta, const double* vabc, double& vd, double& vq) {
    static const double k = std::sqrt(2.0) / 3.0;
    const double ca = std::cos(theta), sa = std::sin(theta);
    const double cb = std::cos(theta - kTwoPiOver3), sb = std::sin(theta - kTwoPiOver3);
    const double cc = std::cos(theta + kTwoPiOver3), sc = std::sin(theta + kTwoPiOver3);
    vd = k * (vabc[0] * ca + vabc[1] * cb + vabc[2] * cc);
    vq = -k * (vabc[0] * sa + vabc[1] * sb + vabc[2] * sc);
}

void inv_park(double theta, double id, double iq, double* iabc) {
    static const double k = std::sqrt(2.0);
    const double ca = std::cos(theta), sa = std::sin(theta);
    const double cb = std::cos(theta - kTwoPiOver3), sb = std::sin(theta - kTwoPiOver3);
    const double cc = std::cos(theta + kTwoPiOver3), sc = std::sin(theta + kTwoPiOver3);
    iabc[0] = k * (id * ca - iq * sa);
    iabc[1] = k * (id * cb - iq * sb);
    iabc[2] = k * (id * cc - iq * sc);
}

std::complex<double> phasor_to_dq(const Phasor& v, double theta0) {
    return v * std::polar(1.0, -theta0);
}

} // namespace pss
