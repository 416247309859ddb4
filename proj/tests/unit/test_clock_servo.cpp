#include "ionlock/clock_servo.hpp"
#include "ionlock/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace ionlock;

namespace {

double step_of_one_cycle(const EnvConfig& env, double start_correction, std::uint64_t seed)
{
    ClockServoConfig cfg;
    Timeline tl(env, seed, 0.01);
    auto s = ClockServoState::make(cfg, seed);
    s.correction_hz = start_correction;
    clock_cycle(s, cfg, tl);
    return s.correction_hz - start_correction;
}

std::vector<double> moving_average(const std::vector<double>& x, std::size_t k)
{
    std::vector<double> out;
    for (std::size_t i = 0; i + k <= x.size(); i += k) {
        double s = 0;
        for (std::size_t j = i; j < i + k; ++j)
            s += x[j];
        out.push_back(s / static_cast<double>(k));
    }
    return out;
}

} // namespace

TEST_CASE("servo configuration")
{
    ClockServoConfig cfg;
    CHECK(cfg.resolved_gain() == doctest::Approx(750));
    CHECK(cfg.resolved_rabi() == doctest::Approx(1 / (2 * 60e-6)));
    // 2 x (2 ms cool + 60 us probe + 2 ms detect)
    CHECK(cfg.cycle_duration() == doctest::Approx(8.12e-3));
    CHECK(default_half_width(StagePreset::SbsCoilLocked) == 3000);
    CHECK(default_half_width(StagePreset::PumpCoilLocked) == 6000);
    ClockServoConfig bad;
    bad.half_width_hz = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ClockServoConfig{};
    bad.two_md = 5;
    CHECK_THROWS_AS(bad.validate(), SelectionRuleError);
    ClockServoState st;
    st.gain = 0;
    CHECK_THROWS_AS(st.validate(), ConfigError);
}

TEST_CASE("one cycle: timing, history and bounded slew")
{
    ClockServoConfig cfg;
    Timeline tl(default_env(StagePreset::SbsCoilLocked), 4, 1.0);
    auto s = ClockServoState::make(cfg, 4);
    double before = tl.now();
    clock_cycle(s, cfg, tl);
    CHECK(tl.now() - before == doctest::Approx(8.12e-3).epsilon(1e-9));
    REQUIRE(s.history.size() == 2);
    CHECK(s.history[0].side == -1);
    CHECK(s.history[1].side == 1);
    CHECK(s.history[1].t_s - s.history[0].t_s == doctest::Approx(4.06e-3));
    double prev = 0;
    for (int i = 0; i < 100; ++i) {
        clock_cycle(s, cfg, tl);
        CHECK(std::abs(s.correction_hz - prev) <= cfg.resolved_gain() + 1e-9);
        prev = s.correction_hz;
    }
    CHECK(s.history.size() == 202);
    CHECK(s.cycles == 101);
}

TEST_CASE("expected correction from the lineshape")
{
    const double rabi = 1 / (2 * 60e-6), hw = 3000;
    SUBCASE("on resonance the two sides are equal")
    {
        CHECK(rabi_probability(rabi, hw, 60e-6) == doctest::Approx(rabi_probability(rabi, -hw, 60e-6)).epsilon(1e-15));
        EnvConfig env = noiseless_env();
        double sum = 0, sum2 = 0;
        const int n = 3000;
        for (int i = 0; i < n; ++i) {
            double st = step_of_one_cycle(env, 0.0, 1000 + i);
            sum += st;
            sum2 += st * st;
        }
        double mean = sum / n, se = std::sqrt((sum2 / n - mean * mean) / n);
        CHECK(std::abs(mean) < 3 * se + 1e-9);
    }
    SUBCASE("laser above the atom by half_width: restoring (negative) correction")
    {
        // left probe on the line centre, right probe two half widths out
        double p_left = rabi_probability(rabi, 0.0, 60e-6);
        double p_right = rabi_probability(rabi, 2 * hw, 60e-6);
        const double expected = 750 * (p_right - p_left);
        CHECK(expected < 0);
        EnvConfig env = noiseless_env();
        double sum = 0;
        const int n = 3000;
        for (int i = 0; i < n; ++i)
            sum += step_of_one_cycle(env, hw, 5000 + i);
        CHECK(sum / n == doctest::Approx(expected).epsilon(0.25));
    }
}

TEST_CASE("noiseless clock stays near zero and is unbiased")
{
    EnvConfig env = noiseless_env();
    auto s = run_clock(2000, env, {}, 9);
    double m = 0;
    for (double c : s.correction_hz)
        m += c;
    m /= static_cast<double>(s.correction_hz.size());
    // loop keeps the correction within a few steps of the line centre
    double worst = 0;
    for (double c : s.correction_hz)
        worst = std::max(worst, std::abs(c));
    CHECK(worst < 10 * 750);
    CHECK(std::abs(m) < 750);
}

TEST_CASE("determinism")
{
    auto env = default_env(StagePreset::SbsCoilLocked);
    auto a = run_clock(200, env, {}, 12);
    auto b = run_clock(200, env, {}, 12);
    auto c = run_clock(200, env, {}, 13);
    CHECK(a.correction_hz == b.correction_hz);
    CHECK(a.t_s == b.t_s);
    CHECK(a.correction_hz != c.correction_hz);
}

TEST_CASE("dual clocks with identical seeds and no noise agree exactly")
{
    EnvConfig env = noiseless_env();
    env.detection.dark_rate_cps = 0;
    auto r = dual_clock_run(400, env, 3, 8, 8);
    for (double d : r.difference_hz)
        CHECK(d == 0.0);
    CHECK(r.cycle_pair_s == doctest::Approx(2 * 8.12e-3));
    CHECK_THROWS_AS(dual_clock_run(10, env, 3, 8, 8, {}, {}, {}, 10), ConfigError);
}

TEST_CASE("coil drift shows up as a few kHz wander over a minute")
{
    auto env = default_env(StagePreset::SbsCoilLocked);
    auto s = run_clock(7400, env, {}, 21);
    auto avg = moving_average(s.correction_hz, 123);
    auto [lo, hi] = std::minmax_element(avg.begin(), avg.end());
    double span = *hi - *lo;
    MESSAGE("60 s peak-to-peak of 1 s averages: " << span << " Hz");
    CHECK(span > 1e3);
    CHECK(span < 16e3);
}

TEST_CASE("unlock bookkeeping")
{
    ClockServoState s;
    s.saturated_run = 30;
    CHECK(s.unlocked(30));
    s.saturated_run = 29;
    CHECK(!s.unlocked(30));
    s.dark_run = 31;
    CHECK(s.unlocked(30));
}
