#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "pssinit/phasor.hpp"

using namespace pss;

namespace {

constexpr double kF0 = 60.0;
constexpr double kW0 = 2.0 * std::numbers::pi * kF0;

WaveRecord sample(int n, double t_start, const std::function<double(double)>& f) {
    WaveRecord w;
    w.dt = (1.0 / kF0) / n;
    w.t_start = t_start;
    w.samples.resize(std::size_t(n) + 1);
    for (int i = 0; i <= n; ++i)
        w.samples[std::size_t(i)] = f(t_start + i * w.dt);
    return w;
}

// Direct projection onto the fundamental using discrete orthogonality of
// uniform full-period sampling; independent of the 3x3 normal-equation
// route inside fit_phasor.
Phasor projection_oracle(const WaveRecord& w, double omega) {
    const auto n = std::size_t(std::llround(2.0 * std::numbers::pi / omega / w.dt));
    const std::size_t first = w.samples.size() - n;
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = w.t_start + double(first + i) * w.dt;
        a += w.samples[first + i] * std::cos(omega * t);
        b += w.samples[first + i] * std::sin(omega * t);
    }
    a *= 2.0 / double(n);
    b *= 2.0 / double(n);
    return Phasor(a, -b) / std::sqrt(2.0);
}

} // namespace

TEST_CASE("fit_phasor recovers cosine and sine fundamentals") {
    auto w = sample(25, 0.0, [](double t) { return std::sqrt(2.0) * std::cos(kW0 * t); });
    Phasor x = fit_phasor(w, kW0);
    CHECK(std::abs(x - Phasor(1.0, 0.0)) < 1e-12);

    auto ws = sample(25, 0.0, [](double t) { return std::sqrt(2.0) * std::sin(kW0 * t); });
    Phasor xs = fit_phasor(ws, kW0);
    CHECK(std::abs(xs - Phasor(0.0, -1.0)) < 1e-12); // 1 at -90 degrees
}

TEST_CASE("fit_phasor rejects DC and the 2nd harmonic") {
    auto w = sample(25, 0.0, [](double t) {
        return 2.0 + std::sqrt(2.0) * std::cos(kW0 * t) + 0.5 * std::cos(2.0 * kW0 * t);
    });
    const Phasor expect = projection_oracle(w, kW0);
    const Phasor x = fit_phasor(w, kW0);
    CHECK(std::abs(x - expect) < 1e-12);
    CHECK(std::abs(x - Phasor(1.0, 0.0)) < 1e-12);
}

TEST_CASE("fit_phasor recovers the fundamental of DC + harmonics 1..5") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        const double a1 = amp(rng), b1 = amp(rng);
        double coeffs[5][2];
        for (auto& c : coeffs) {
            c[0] = amp(rng);
            c[1] = amp(rng);
        }
        const double dc = amp(rng);
        auto w = sample(25, 0.0, [&](double t) {
            double v = dc + a1 * std::cos(kW0 * t) + b1 * std::sin(kW0 * t);
            for (int h = 2; h <= 5; ++h)
                v += coeffs[h - 1][0] * std::cos(h * kW0 * t) +
                     coeffs[h - 1][1] * std::sin(h * kW0 * t);
            return v;
        });
        const Phasor x = fit_phasor(w, kW0);
        const Phasor expect = Phasor(a1, -b1) / std::sqrt(2.0);
        CHECK(std::abs(x - expect) < 1e-12);
    }
}

TEST_CASE("fit_phasor window and degeneracy rules") {
    WaveRecord shorty;
    shorty.dt = (1.0 / kF0) / 25.0;
    shorty.samples.assign(10, 1.0);
    CHECK_THROWS(fit_phasor(shorty, kW0));

    auto flat = sample(25, 0.0, [](double) { return 4.2; });
    CHECK(std::abs(fit_phasor(flat, kW0)) < 1e-12);
}

TEST_CASE("fit_phasor uses the final period and absolute time") {
    // two periods recorded; fundamental phase referenced to t = 0
    WaveRecord w;
    w.dt = (1.0 / kF0) / 25.0;
    w.t_start = 0.0;
    for (int i = 0; i <= 50; ++i)
        w.samples.push_back(std::sqrt(2.0) * std::cos(kW0 * i * w.dt + 0.3));
    const Phasor x = fit_phasor(w, kW0);
    CHECK(std::abs(x - std::polar(1.0, 0.3)) < 1e-12);
}

TEST_CASE("fit_phasor is linear") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int rep = 0; rep < 20; ++rep) {
        const double al = u(rng), be = u(rng), p1 = u(rng), p2 = u(rng);
        auto x = sample(25, 0.0, [&](double t) { return std::cos(kW0 * t + p1) + 0.2 * t; });
        auto y = sample(25, 0.0, [&](double t) { return std::sin(kW0 * t + p2); });
        WaveRecord z = x;
        for (std::size_t i = 0; i < z.samples.size(); ++i)
            z.samples[i] = al * x.samples[i] + be * y.samples[i];
        const Phasor lhs = fit_phasor(z, kW0);
        const Phasor rhs = al * fit_phasor(x, kW0) + be * fit_phasor(y, kW0);
        CHECK(std::abs(lhs - rhs) < 1e-12);
    }
}

TEST_CASE("positive_sequence on reference sets") {
    const Phasor a1 = std::polar(1.0, 0.0);
    const Phasor b1 = std::polar(1.0, -2.0 * std::numbers::pi / 3.0);
    const Phasor c1 = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
    CHECK(std::abs(positive_sequence({a1, b1, c1}) - a1) < 1e-15);
    CHECK(std::abs(positive_sequence({a1, a1, a1})) < 1e-15);
    CHECK(std::abs(positive_sequence({a1, Phasor(0, 0), Phasor(0, 0)}) - Phasor(1.0 / 3.0, 0.0)) <
          1e-15);
}

TEST_CASE("positive_sequence of a random balanced set equals phase a") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    std::uniform_real_distribution<double> ang(-3.0, 3.0);
    const Phasor rot = std::polar(1.0, -2.0 * std::numbers::pi / 3.0);
    for (int rep = 0; rep < 200; ++rep) {
        const Phasor a = std::polar(u(rng), ang(rng));
        const Phasor p = positive_sequence({a, a * rot, a * rot * rot});
        CHECK(std::abs(p - a) < 1e-14);
    }
}

TEST_CASE("sequence power bookkeeping identity") {
    // sum over phases of Vx Ix* equals 3 (V+I+* + V-I-* + V0I0*)
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    auto neg_seq = [](const ThreePhase<Phasor>& x) {
        const Phasor r = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
        return (x.a + std::conj(r) * x.b + r * x.c) / 3.0;
    };
    auto zero_seq = [](const ThreePhase<Phasor>& x) { return (x.a + x.b + x.c) / 3.0; };
    for (int rep = 0; rep < 1000; ++rep) {
        ThreePhase<Phasor> v{{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
        ThreePhase<Phasor> i{{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
        Phasor lhs(0.0, 0.0);
        for (int p = 0; p < 3; ++p)
            lhs += v[p] * std::conj(i[p]);
        const Phasor rhs = 3.0 * (positive_sequence(v) * std::conj(positive_sequence(i)) +
                                  neg_seq(v) * std::conj(neg_seq(i)) +
                                  zero_seq(v) * std::conj(zero_seq(i)));
        CHECK(std::abs(lhs - rhs) < 1e-12);
    }
}

TEST_CASE("device_power conventions") {
    CHECK(std::abs(device_power({1, 0}, {1, 0}, PowerScope::PositiveSequence) - Phasor(1, 0)) <
          1e-15);
    CHECK(std::abs(device_power({1, 0}, std::polar(1.0, std::numbers::pi / 2.0),
                                PowerScope::PositiveSequence) -
                   Phasor(0, -1)) < 1e-15);
    CHECK(std::abs(device_power({1, 0}, {0.9, -0.3}, PowerScope::PerPhase) - Phasor(0.3, 0.1)) <
          1e-15);
}

TEST_CASE("zip_target") {
    ZipCoeffs constant;
    auto [p, q] = zip_target(0.87, constant, 1.3, 0.4);
    CHECK(p == doctest::Approx(1.3));
    CHECK(q == doctest::Approx(0.4));

    ZipCoeffs mix{0.2, 0.3, 0.5, 1.0, 0.0, 0.0};
    auto [p2, q2] = zip_target(1.0, mix, 2.0, 1.0);
    CHECK(p2 == doctest::Approx(2.0));
    CHECK(q2 == doctest::Approx(1.0));

    ZipCoeffs z{0.0, 0.0, 1.0, 0.0, 0.0, 1.0};
    auto [p3, q3] = zip_target(0.95, z, 1.0, 1.0);
    CHECK(p3 == doctest::Approx(0.9025));
    CHECK(q3 == doctest::Approx(0.9025));
}

TEST_CASE("harmonic_magnitude") {
    auto pure = sample(25, 0.0, [](double t) { return std::sqrt(2.0) * std::cos(kW0 * t); });
    CHECK(harmonic_magnitude(pure, kW0, 2) < 1e-12);

    auto mix = sample(25, 0.0, [](double t) { return 1.0 + 0.2 * std::cos(2.0 * kW0 * t); });
    CHECK(harmonic_magnitude(mix, kW0, 2) == doctest::Approx(0.2).epsilon(1e-10));

    auto flat = sample(25, 0.0, [](double) { return 5.0; });
    CHECK(harmonic_magnitude(flat, kW0, 0) == doctest::Approx(5.0));
}
