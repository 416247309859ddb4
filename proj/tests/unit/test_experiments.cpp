#include "ionlock/errors.hpp"
#include "ionlock/experiments.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace ionlock;

namespace {

EnvConfig clean_env()
{
    EnvConfig e = noiseless_env();
    e.detection.dark_rate_cps = 0;
    e.detection.bright_rate_cps = 1e5;
    return e;
}

std::vector<double> phase_grid(int n)
{
    std::vector<double> v;
    for (int i = 0; i < n; ++i)
        v.push_back(2 * std::numbers::pi * i / n);
    return v;
}

} // namespace

TEST_CASE("scan plans and orders")
{
    auto p = ScanPlan::uniform(-20e3, 20e3, 61, 50);
    CHECK(p.detunings_hz.size() == 61);
    CHECK(p.detunings_hz.front() == -20e3);
    CHECK(p.detunings_hz.back() == 20e3);
    CHECK(p.shots() == 61 * 50);
    CHECK(p.order == ScanOrder::Waterfall);
    for (auto o : {ScanOrder::Waterfall, ScanOrder::LeftToRight, ScanOrder::RightToLeft})
        CHECK(parse_scan_order(scan_order_name(o)) == o);
    CHECK_THROWS_AS(parse_scan_order("zigzag"), ConfigError);
    ScanPlan bad = p;
    std::swap(bad.detunings_hz[0], bad.detunings_hz[1]);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = p;
    bad.trials = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    ScanPlan lr = p;
    lr.order = ScanOrder::LeftToRight;
    CHECK_THROWS_AS(waterfall_spectroscopy(lr, clean_env(), 1), ConfigError);
}

TEST_CASE("zero-linewidth laser far off resonance excites nothing")
{
    ScanPlan plan;
    plan.detunings_hz = {-400e3, -300e3, -200e3, 200e3, 300e3, 400e3};
    plan.trials = 20;
    auto r = waterfall_spectroscopy(plan, clean_env(), 3);
    for (const auto& pt : r.points) {
        CHECK(pt.p < 0.05);
        CHECK(pt.n == 20);
    }
}

TEST_CASE("spectroscopy output and fit on a clean line")
{
    auto plan = ScanPlan::uniform(-3000, 3000, 31, 40);
    auto r = waterfall_spectroscopy(plan, clean_env(), 4);
    REQUIRE(r.fit.has_value());
    // 1 ms pi pulse: Fourier-limited line of ~0.8 kHz
    CHECK(r.fit->fwhm_hz == doctest::Approx(800).epsilon(0.25));
    CHECK(std::abs(r.fit->center_hz) < 100);
    CHECK(r.telemetry.experiment_shots == plan.shots());
    CHECK(r.telemetry.detections == plan.shots());
    CHECK(r.points[15].stderr_p >= 0);
}

TEST_CASE("noiseless Rabi flopping follows sin^2")
{
    RabiConfig cfg;
    cfg.trials = 200;
    std::vector<double> d;
    for (int i = 0; i <= 8; ++i)
        d.push_back(i * 10e-6);
    auto r = rabi_scan(d, clean_env(), 5, cfg);
    REQUIRE(r.points.size() == d.size());
    for (const auto& pt : r.points) {
        double expect = std::pow(std::sin(std::numbers::pi * cfg.rabi_hz * pt.duration_s), 2);
        double se = std::sqrt(std::max(expect * (1 - expect), 0.01) / static_cast<double>(pt.n));
        CHECK(std::abs(pt.p - expect) < 4 * se);
    }
}

TEST_CASE("noiseless Ramsey fringe has full contrast at zero delay")
{
    RamseyConfig cfg;
    cfg.trials = 200;
    auto r = ramsey_scan({0.0}, phase_grid(8), clean_env(), 6, cfg);
    REQUIRE(r.points.size() == 1);
    CHECK(r.points[0].contrast == doctest::Approx(1.0).epsilon(0.06));
    CHECK_THROWS_AS(ramsey_scan({0.0}, {0.0, 0.1, 0.2}, clean_env(), 6, cfg), ConfigError);
    CHECK_THROWS_AS(ramsey_scan({0.0}, {0.0, 0.1, 0.2, 0.3}, clean_env(), 6, cfg), ConfigError);
}

TEST_CASE("sinusoid fit")
{
    auto ph = phase_grid(8);
    std::vector<double> p;
    for (double x : ph)
        p.push_back(0.5 + 0.3 * std::cos(x - 0.4));
    auto f = fit_sinusoid(ph, p);
    CHECK(f.offset == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(f.amplitude == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(f.phase_rad == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(f.contrast == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("perfect SPAM configuration gives fidelity 1")
{
    auto r = spam_experiment(400, clean_env(), 7);
    CHECK(r.fidelity == 1.0);
    CHECK(r.overlap == 0.0);
    CHECK(r.shelving_pulses == 3);
    std::size_t total = 0;
    for (auto c : r.histogram_dark)
        total += c;
    for (auto c : r.histogram_bright)
        total += c;
    CHECK(total == 400);
    CHECK_THROWS_AS(spam_experiment(10, clean_env(), 7), ConfigError);
}

TEST_CASE("interleaving does not perturb experiment streams")
{
    // a clock probing far up its flanks never sees an imbalance in a clean env
    InterleaveSchedule is;
    is.enabled = true;
    is.warmup_cycles = 10;
    is.clock.half_width_hz = 1.0;
    is.clock.gain = 50;
    auto plan = ScanPlan::uniform(-2000, 2000, 11, 10);
    auto plain = waterfall_spectroscopy(plan, clean_env(), 8);
    auto inter = waterfall_spectroscopy(plan, clean_env(), 8, {}, is);
    REQUIRE(!inter.telemetry.aborted);
    CHECK(inter.telemetry.clock_cycles == 10 + plan.shots());
    for (std::size_t i = 0; i < plain.points.size(); ++i)
        CHECK(plain.points[i].p == inter.points[i].p);
}

TEST_CASE("an unlocked clock aborts the experiment with a diagnostic")
{
    // the transition runs away at 200 kHz/s; the servo slews at most ~6 kHz/s
    InterleaveSchedule is;
    is.enabled = true;
    is.warmup_cycles = 0;
    EnvConfig env = clean_env();
    env.injection = DriftInjection::linear(2e5);
    auto plan = ScanPlan::uniform(-2000, 2000, 11, 10);
    auto r = waterfall_spectroscopy(plan, env, 9, {}, is);
    CHECK(r.telemetry.aborted);
    CHECK(r.telemetry.diagnostic.find("unlock") != std::string::npos);
    CHECK(!r.fit.has_value());
}

TEST_CASE("interleaved spectroscopy follows a drifting transition")
{
    // 1 kHz/s on the transition moves the open-loop line by several kHz over a scan;
    // the default-gain clock keeps its proportional lag to a few hundred Hz
    EnvConfig env = default_env(StagePreset::SbsCoilLocked);
    env.drift_enabled = false;
    EnvConfig drifting = env;
    drifting.injection = DriftInjection::linear(1000.0);
    auto plan = ScanPlan::uniform(-20e3, 20e3, 41, 40);
    InterleaveSchedule is;
    is.enabled = true;
    is.clock.gain = 0;
    double base = 0, inter = 0, open = 0;
    for (std::uint64_t seed : {10, 11}) {
        auto b = waterfall_spectroscopy(plan, env, seed, {}, is);
        auto i = waterfall_spectroscopy(plan, drifting, seed, {}, is);
        auto o = waterfall_spectroscopy(plan, drifting, seed);
        REQUIRE(b.fit);
        REQUIRE(i.fit);
        REQUIRE(o.fit);
        REQUIRE(!i.telemetry.aborted);
        base += b.fit->center_hz / 2;
        inter += i.fit->center_hz / 2;
        open += o.fit->center_hz / 2;
    }
    MESSAGE("line centre base " << base << " interleaved " << inter << " open " << open);
    CHECK(std::abs(inter - base) < 1000);
    CHECK(std::abs(open - base) > 3000);
}
