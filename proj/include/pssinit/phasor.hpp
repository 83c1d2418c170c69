#pragma once

#include <complex>
#include <utility>
#include <vector>

namespace pss {

// RMS phasor: x(t) = sqrt(2) * Re(X * exp(j*w*t)). With this convention
// S = V * conj(I) lands directly in per-unit power.
using Phasor = std::complex<double>;

template <typename T>
struct ThreePhase {
    T a{}, b{}, c{};

    T& operator[](int ph) { return ph == 0 ? a : (ph == 1 ? b : c); }
    const T& operator[](int ph) const { return ph == 0 ? a : (ph == 1 ? b : c); }
};

// ZIP load polynomial coefficients. Defaults give a constant-power load.
struct ZipCoeffs {
    double kps = 1.0, kpi = 0.0, kpz = 0.0;
    double kqs = 1.0, kqi = 0.0, kqz = 0.0;
};

// Uniformly sampled instantaneous waveform in per-unit.
struct WaveRecord {
    std::vector<double> samples;
    double dt = 0.0;
    double t_start = 0.0;

    double duration() const { return samples.empty() ? 0.0 : dt * double(samples.size() - 1); }
};

enum class PowerScope { PerPhase, PositiveSequence };

// Least-squares fit of A*cos(w0 t) + B*sin(w0 t) + C over the final full
// period of the record; returns (A - jB)/sqrt(2). The DC term is discarded.
// Throws std::invalid_argument when the record is shorter than one period
// or holds fewer than 5 samples per period.
Phasor fit_phasor(const WaveRecord& w, double omega0);

// Least-squares amplitude of the h*omega0 component over the final full
// period. h = 0 returns |mean|.
double harmonic_magnitude(const WaveRecord& w, double omega0, int h);

// X+ = (Xa + e^{j2pi/3} Xb + e^{-j2pi/3} Xc) / 3
Phasor positive_sequence(const ThreePhase<Phasor>& x);

// Complex power in p.u. on the three-phase base: V*conj(I) for
// positive-sequence quantities, V*conj(I)/3 for a single phase.
Phasor device_power(const Phasor& v, const Phasor& i, PowerScope scope);

// Voltage-dependent (P, Q) target of a ZIP load at |V| = v_mag.
std::pair<double, double> zip_target(double v_mag, const ZipCoeffs& z, double p0, double q0);

} // namespace pss
