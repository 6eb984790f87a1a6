#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "resotune/errors.hpp"
#include "resotune/fitting.hpp"
#include "resotune/transmission.hpp"

using namespace resotune;
using namespace resotune::fitting;
using transmission::SweepTrace;

namespace {

struct Truth {
    double f_r, Q_L, Q_e, phi;
};

// Lineshape trace built from the reference formula, `offset` linewidths off-centre.
SweepTrace make_trace(const Truth& t, std::size_t n = 1601, double span_lw = 10.0, double offset = 0.0) {
    const double lw = t.f_r / t.Q_L;
    const double centre = t.f_r + offset * lw;
    SweepTrace tr;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = centre - 0.5 * span_lw * lw + span_lw * lw * static_cast<double>(i) / static_cast<double>(n - 1);
        tr.frequencies.push_back(f);
        tr.power_ratio.push_back(oracle::s21(f, t.f_r, t.Q_L, t.Q_e, t.phi));
    }
    return tr;
}

void add_noise(SweepTrace& tr, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (double& p : tr.power_ratio) {
        p = std::max(0.0, p * (1.0 + sigma * g(rng)));
    }
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

const Truth kDevice{6.834683e9, oracle::loaded_q(35000.0, 5e5), 5e5, 0.1};

}  // namespace

TEST_CASE("initial guess on a clean dip") {
    const Truth t{6.8278e9, oracle::loaded_q(35000.0, 5e5), 5e5, 0.0};
    const auto tr = make_trace(t, 1601, 10.0, 0.23);
    const auto g = initial_guess(tr);
    const double bin = tr.frequencies[1] - tr.frequencies[0];
    CHECK(std::abs(g.f_r - t.f_r) <= bin);
    CHECK(rel(g.Q_L, t.Q_L) < 0.3);
    CHECK_FALSE(g.low_confidence);
    CHECK(g.warnings.empty());
}

TEST_CASE("initial guess rejects flat and tiny traces") {
    SweepTrace flat;
    for (int i = 0; i < 101; ++i) {
        flat.frequencies.push_back(6e9 + i * 1e3);
        flat.power_ratio.push_back(1.0);
    }
    CHECK_THROWS_AS(initial_guess(flat), NoResonance);
    CHECK_THROWS_AS(fit_resonance(flat), NoResonance);

    auto small = make_trace(kDevice, 15);
    CHECK_THROWS_AS(initial_guess(small), ValidationError);

    auto noisy_flat = flat;
    add_noise(noisy_flat, 0.01, 4);
    CHECK_THROWS_AS(fit_resonance(noisy_flat), NoResonance);
}

TEST_CASE("dip at the sweep edge is flagged") {
    const Truth t{6.8e9, 30000.0, 5e5, 0.0};
    const auto tr = make_trace(t, 801, 10.0, 5.0);  // f_r is the first bin
    const auto g = initial_guess(tr);
    CHECK(g.f_r == tr.frequencies.front());
    CHECK(g.low_confidence);
}

TEST_CASE("noiseless round trip at the device parameters") {
    const auto tr = make_trace(kDevice, 1601, 10.0, -0.37);
    const auto r = fit_resonance(tr);
    CHECK(r.converged);
    CHECK(rel(r.f_r, kDevice.f_r) < 1e-4);
    CHECK(rel(r.Q_L, kDevice.Q_L) < 1e-4);
    CHECK(rel(r.Q_e, kDevice.Q_e) < 1e-4);
    CHECK(rel(r.phi, kDevice.phi) < 1e-4);
    CHECK(rel(r.Q_i, 35000.0) < 1e-4);
    CHECK(r.rms_residual <= r.initial_rms_residual);
    CHECK(std::abs(1.0 / r.Q_L - 1.0 / r.Q_e - 1.0 / r.Q_i) < 1e-12 / r.Q_L);
}

TEST_CASE("randomized noiseless round trips") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int failures = 0;
    for (int k = 0; k < 200; ++k) {
        const double Q_i = std::pow(10.0, 4.0 + 2.0 * u(rng));
        const double Q_e = std::pow(10.0, 5.0 + 2.0 * u(rng));
        const double phi = -0.5 + u(rng);
        const Truth t{4e9 + 4e9 * u(rng), oracle::loaded_q(Q_i, Q_e), Q_e, phi};
        const auto tr = make_trace(t, 801 + 800 * (k % 2), 10.0, u(rng) - 0.5);
        try {
            const auto r = fit_resonance(tr);
            const bool ok = r.converged && rel(r.f_r, t.f_r) < 1e-3 && rel(r.Q_L, t.Q_L) < 1e-3 &&
                            rel(r.Q_e, t.Q_e) < 1e-3 && std::abs(r.phi - t.phi) < 1e-3 * std::abs(t.phi) + 1e-12 &&
                            r.rms_residual <= r.initial_rms_residual;
            if (!ok) {
                ++failures;
                MESSAGE("k=" << k << " Q_i=" << Q_i << " Q_e=" << Q_e << " phi=" << phi << " fit Q_e=" << r.Q_e
                              << " phi=" << r.phi);
            }
            CHECK(std::abs(1.0 / r.Q_L - 1.0 / r.Q_e - 1.0 / r.Q_i) < 1e-12 / r.Q_L);
            CHECK(r.f_r >= tr.frequencies.front());
            CHECK(r.f_r <= tr.frequencies.back());
        } catch (const std::exception& e) {
            ++failures;
            MESSAGE("k=" << k << " threw " << e.what());
        }
    }
    CHECK(failures == 0);
}

TEST_CASE("noisy round trips over 100 seeds") {
    int good = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        auto tr = make_trace(kDevice, 1601);
        add_noise(tr, 0.01, seed);
        try {
            const auto r = fit_resonance(tr);
            const double lw = kDevice.f_r / kDevice.Q_L;
            if (std::abs(r.f_r - kDevice.f_r) < 0.1 * lw && rel(r.Q_i, 35000.0) < 0.05) {
                ++good;
            }
            CHECK(r.rms_residual <= r.initial_rms_residual);
        } catch (const std::exception& e) {
            MESSAGE("seed " << seed << ": " << e.what());
        }
    }
    CHECK(good >= 95);
}

TEST_CASE("scale invariance") {
    const auto base = make_trace(kDevice, 1601, 10.0, 0.21);
    const auto r0 = fit_resonance(base);
    for (double s : {0.5, 1.37, 2.0}) {
        auto tr = base;
        for (double& f : tr.frequencies) {
            f *= s;
        }
        const auto r = fit_resonance(tr);
        CHECK(rel(r.f_r, s * r0.f_r) < 1e-6);
        CHECK(rel(r.Q_L, r0.Q_L) < 1e-6);
        CHECK(rel(r.Q_e, r0.Q_e) < 1e-6);
        CHECK(rel(r.phi, r0.phi) < 1e-6);
    }
}

TEST_CASE("analytic Jacobian agrees with central differences") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int bad = 0;
    for (int k = 0; k < 100; ++k) {
        const double Q_e = std::pow(10.0, 4.0 + 3.0 * u(rng));
        const Truth t{5e9 + 3e9 * u(rng), Q_e * (0.05 + 0.9 * u(rng)), Q_e, -0.6 + 1.2 * u(rng)};
        auto tr = make_trace(t, 301, 8.0, u(rng) - 0.5);
        add_noise(tr, 0.01, 1000 + k);
        const double width = t.f_r / t.Q_L;
        LineshapeProblem problem(tr.frequencies, tr.power_ratio, t.f_r, width);
        // evaluate away from the optimum so every column is non-trivial
        const auto theta = problem.to_internal(t.f_r + (u(rng) - 0.5) * width, t.Q_L * (0.7 + 0.6 * u(rng)),
                                               t.Q_e * (0.7 + 0.6 * u(rng)), t.phi + 0.2 * (u(rng) - 0.5));
        Eigen::VectorXd r;
        LineshapeProblem::Jacobian J;
        problem.evaluate(theta, r, &J);
        for (int c = 0; c < 4; ++c) {
            // fourth-order central stencil
            const double h = 1e-3;
            auto at = [&](double step) {
                auto tt = theta;
                tt[c] += step;
                Eigen::VectorXd out;
                problem.evaluate(tt, out, nullptr);
                return out;
            };
            const Eigen::VectorXd fd = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
            const double err = (fd - J.col(c)).norm() / J.col(c).norm();
            if (!(err < 1e-6)) {
                ++bad;
                MESSAGE("point " << k << " column " << c << " rel err " << err);
            }
        }
    }
    CHECK(bad == 0);
}

TEST_CASE("explicit guess is honoured") {
    const auto tr = make_trace(kDevice, 1601);
    InitialGuess g;
    g.f_r = kDevice.f_r + 20e3;
    g.Q_L = 25000.0;
    g.Q_e = 4e5;
    g.phi = 0.0;
    g.window_end = tr.size();
    const auto r = fit_resonance(tr, g);
    CHECK(rel(r.Q_e, kDevice.Q_e) < 1e-6);
}

TEST_CASE("non-physical optimum is reported with its parameters") {
    // a = Q_L/Q_e with a cos(phi) = 1.2, a sin(phi) = 0.8: both lineshape-equivalent solutions have a > 1
    const double a = std::hypot(1.2, 0.8);
    const Truth t{6.8e9, 30000.0, 30000.0 / a, std::atan2(0.8, 1.2)};
    const auto tr = make_trace(t, 1601);
    try {
        fit_resonance(tr);
        FAIL("expected NonPhysicalFitResult");
    } catch (const NonPhysicalFitResult& e) {
        CHECK(e.best().Q_L >= e.best().Q_e);
        CHECK(rel(e.best().f_r, t.f_r) < 1e-3);
    }

    // symmetric case: a = 1.6 is indistinguishable from a = 0.4, the guess decides
    const Truth sym{6.8e9, 30000.0, 30000.0 / 1.6, 0.0};
    const auto tr2 = make_trace(sym, 1601);
    const auto phys = fit_resonance(tr2);
    CHECK(phys.Q_L / phys.Q_e == doctest::Approx(0.4).epsilon(1e-6));
    InitialGuess g;
    g.f_r = sym.f_r;
    g.Q_L = 30000.0;
    g.Q_e = 30000.0 / 1.5;
    g.window_end = tr2.size();
    CHECK_THROWS_AS(fit_resonance(tr2, g), NonPhysicalFit);
}

TEST_CASE("secondary dip is reported and the deepest one fitted") {
    auto tr = make_trace(kDevice, 2001, 40.0);
    const Truth side{kDevice.f_r + 12.0 * kDevice.f_r / kDevice.Q_L, 40000.0, 1.5e6, 0.0};
    for (std::size_t i = 0; i < tr.size(); ++i) {
        tr.power_ratio[i] *= oracle::s21(tr.frequencies[i], side.f_r, side.Q_L, side.Q_e, side.phi);
    }
    const auto r = fit_resonance(tr);
    CHECK_FALSE(r.warnings.empty());
    CHECK(rel(r.f_r, kDevice.f_r) < 1e-6);
    CHECK(rel(r.Q_i, 35000.0) < 0.02);
}

TEST_CASE("speckle from per-point resonance jitter is not mistaken for extra dips") {
    const Truth t{6.8278e9, oracle::loaded_q(35000.0, 5e5), 5e5, 0.0};
    const double lw = t.f_r / t.Q_L;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        auto tr = make_trace(t, 1601);
        for (std::size_t i = 0; i < tr.size(); ++i) {
            const double shift = 0.5 * lw * std::sin(phase(rng));
            tr.power_ratio[i] = oracle::s21(tr.frequencies[i], t.f_r + shift, t.Q_L, t.Q_e, t.phi);
        }
        const auto g = initial_guess(tr);
        CHECK(g.warnings.empty());
        CHECK(g.window_end - g.window_begin == tr.size());
        const auto r = fit_resonance(tr);
        CHECK(std::abs(r.f_r - t.f_r) < 0.25 * lw);
        CHECK(r.Q_L < 0.85 * t.Q_L);
    }
}

TEST_CASE("power series") {
    CHECK(fit_power_series({}).empty());

    const transmission::TlsLossModel tls;
    std::vector<SweepTrace> traces;
    for (double p : {-100.0, -131.0}) {
        const double Q_i = transmission::power_dependent_qi(p, tls);
        auto tr = make_trace({6.8e9, oracle::loaded_q(Q_i, 5e5), 5e5, 0.0}, 1601);
        tr.P_in_dBm = p;
        traces.push_back(tr);
    }
    SweepTrace flat;
    for (int i = 0; i < 101; ++i) {
        flat.frequencies.push_back(6e9 + i * 1e3);
        flat.power_ratio.push_back(1.0);
    }
    flat.P_in_dBm = -120.0;
    traces.push_back(flat);

    const auto out = fit_power_series(traces);
    REQUIRE(out.size() == 3);
    CHECK(out[0].P_in_dBm == -131.0);
    CHECK(out[1].P_in_dBm == -120.0);
    CHECK(out[2].P_in_dBm == -100.0);
    CHECK(out[1].status == FitStatus::no_resonance);
    REQUIRE(out[0].status == FitStatus::ok);
    REQUIRE(out[2].status == FitStatus::ok);
    CHECK(out[0].fit->Q_i < out[2].fit->Q_i);
    CHECK(out[0].fit->Q_i == doctest::Approx(transmission::power_dependent_qi(-131.0, tls)).epsilon(1e-6));
}
