#include "pssinit/phasor.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pss {

namespace {

// Window covering the final full period: first index and sample count.
std::pair<std::size_t, std::size_t> fit_window(const WaveRecord& w, double omega) {
    if (w.dt <= 0.0)
        throw std::invalid_argument("fit_phasor: non-positive sample spacing");
    const double period = 2.0 * std::numbers::pi / omega;
    const auto n = static_cast<std::size_t>(std::llround(period / w.dt));
    if (n < 5)
        throw std::invalid_argument("fit_phasor: fewer than 5 samples per period");
    if (w.samples.size() < n)
        throw std::invalid_argument("fit_phasor: window shorter than one period");
    return {w.samples.size() - n, n};
}

// 3x3 normal equations for {cos(w t), sin(w t), 1} over the window.
// Returns (A, B, C). A constant signal is not degenerate here; if the
// solve still fails numerically the fit falls back to zero.
Eigen::Vector3d ls_fit(const WaveRecord& w, double omega, std::size_t first, std::size_t n) {
    Eigen::Matrix3d G = Eigen::Matrix3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const double t = w.t_start + double(first + i) * w.dt;
        const double c = std::cos(omega * t);
        const double s = std::sin(omega * t);
        G(0, 0) += c * c;
        G(0, 1) += c * s;
        G(0, 2) += c;
        G(1, 1) += s * s;
        G(1, 2) += s;
        G(2, 2) += 1.0;
        const double x = w.samples[first + i];
        b(0) += x * c;
        b(1) += x * s;
        b(2) += x;
    }
    G(1, 0) = G(0, 1);
    G(2, 0) = G(0, 2);
    G(2, 1) = G(1, 2);
    Eigen::Vector3d coef = G.fullPivLu().solve(b);
    if (!coef.allFinite())
        coef.setZero();
    return coef;
}

} // namespace

Phasor fit_phasor(const WaveRecord& w, double omega0) {
    const auto [first, n] = fit_window(w, omega0);
    const Eigen::Vector3d coef = ls_fit(w, omega0, first, n);
    return Phasor(coef(0), -coef(1)) / std::sqrt(2.0);
}

double harmonic_magnitude(const WaveRecord& w, double omega0, int h) {
    if (h < 0)
        throw std::invalid_argument("harmonic_magnitude: negative harmonic order");
    const auto [first, n] = fit_window(w, omega0);
    if (h == 0) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            sum += w.samples[first + i];
        return std::abs(sum / double(n));
    }
    const Eigen::Vector3d coef = ls_fit(w, double(h) * omega0, first, n);
    return std::hypot(coef(0), coef(1));
}

Phasor positive_sequence(const ThreePhase<Phasor>& x) {
    static const Phasor rot = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
    return (x.a + rot * x.b + std::conj(rot) * x.c) / 3.0;
}

Phasor device_power(const Phasor& v, const Phasor& i, PowerScope scope) {
    const Phasor s = v * std::conj(i);
    return scope == PowerScope::PerPhase ? s / 3.0 : s;
}

std::pair<double, double> zip_target(double v_mag, const ZipCoeffs& z, double p0, double q0) {
    const double p = (z.kps + z.kpi * v_mag + z.kpz * v_mag * v_mag) * p0;
    const double q = (z.kqs + z.kqi * v_mag + z.kqz * v_mag * v_mag) * q0;
    return {p, q};
}

} // namespace pss
