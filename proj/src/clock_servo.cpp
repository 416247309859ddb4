#include "ionlock/clock_servo.hpp"

#include "ionlock/errors.hpp"

#include <cmath>

namespace ionlock {

void ClockServoConfig::validate() const
{
    if (!(half_width_hz > 0))
        throw ConfigError("clock: half_width must be > 0");
    if (gain < 0 || !std::isfinite(gain))
        throw ConfigError("clock: gain must be finite and >= 0 (0 = half_width/4)");
    if (!(probe_s > 0) || cool_s < 0 || detect_s < 0)
        throw ConfigError("clock: probe must be > 0, cool/detect >= 0");
    if (samples_per_side < 1)
        throw ConfigError("clock: samples_per_side must be >= 1");
    if (unlock_cycles < 1)
        throw ConfigError("clock: unlock_cycles must be >= 1");
    if (!quadrupole_allowed(two_ms, two_md))
        throw SelectionRuleError("clock: transition violates |dm| <= 2");
}

double default_half_width(StagePreset chain)
{
    return (chain == StagePreset::SbsCoilLocked || chain == StagePreset::SbsFree) ? 3000.0 : 6000.0;
}

ClockServoConfig stability_servo(StagePreset chain)
{
    ClockServoConfig c;
    c.half_width_hz = default_half_width(chain);
    c.gain = kStabilityGainHz;
    return c;
}

ClockServoConfig interleave_servo(StagePreset chain)
{
    ClockServoConfig c;
    c.half_width_hz = default_half_width(chain);
    c.gain = kInterleaveGainHz;
    return c;
}

ClockServoState ClockServoState::make(const ClockServoConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    ClockServoState s;
    s.half_width_hz = cfg.half_width_hz;
    s.gain = cfg.resolved_gain();
    s.seed = seed;
    return s;
}

void ClockServoState::validate() const
{
    if (!(half_width_hz > 0) || !(gain > 0))
        throw ConfigError("clock state: half_width and gain must be > 0");
}

void clock_cycle(ClockServoState& servo, const ClockServoConfig& cfg, Timeline& tl)
{
    servo.validate();
    const Transition& tr = tl.table().find(cfg.two_ms, cfg.two_md);
    const double rabi = cfg.resolved_rabi();
    double t = tl.now();
    double excited[2] = {0, 0};
    std::vector<ClockHistoryEntry> entries;
    for (int si = 0; si < 2; ++si) {
        const int side = si == 0 ? -1 : 1;
        for (int k = 0; k < cfg.samples_per_side; ++k) {
            std::string stream = "clock_servo:shot:" + std::to_string(servo.seed) + "-"
                                 + std::to_string(servo.cycles) + "-" + std::to_string(si) + "-"
                                 + std::to_string(k);
            t += cfg.cool_s;
            auto seg = tl.segment(t, cfg.probe_s, stream);
            double offset = servo.correction_hz + side * servo.half_width_hz - servo.injection.at(t);
            double scale = tl.rabi_scale(stream);
            IonState st = evolve_pulse(IonState::ground(cfg.two_ms), tr, rabi * scale, cfg.probe_s, 0.0, &seg,
                                       offset, t);
            Rng rng = make_stream(tl.seed(), stream + ":detect");
            ShotRecord rec = detect(st, tl.env().detection, rng);
            bool ex = !rec.bright;
            excited[si] += ex ? 1.0 : 0.0;
            entries.push_back(ClockHistoryEntry{servo.cycles, side, ex, 0.0, t});
            t += cfg.probe_s + cfg.detect_s;
        }
    }
    const double n = cfg.samples_per_side;
    double imbalance = (excited[1] - excited[0]) / n;
    double step = servo.gain * imbalance;
    servo.correction_hz += step;
    for (auto& e : entries) {
        e.correction_hz = servo.correction_hz;
        servo.history.push_back(e);
    }

    int sign = step > 0 ? 1 : (step < 0 ? -1 : 0);
    if (std::abs(imbalance) == 1.0 && sign == servo.last_step_sign)
        ++servo.saturated_run;
    else
        servo.saturated_run = std::abs(imbalance) == 1.0 ? 1 : 0;
    servo.last_step_sign = sign;
    servo.dark_run = (excited[0] + excited[1] == 0) ? servo.dark_run + 1 : 0;

    ++servo.cycles;
    tl.advance(t - tl.now());
}

ClockSeries cycle_series(const ClockServoState& servo, std::size_t per_cycle)
{
    ClockSeries s;
    const auto& h = servo.history;
    for (std::size_t i = 0; i + per_cycle <= h.size(); i += per_cycle) {
        double tm = 0.5 * (h[i].t_s + h[i + per_cycle - 1].t_s);
        s.t_s.push_back(tm);
        s.correction_hz.push_back(h[i + per_cycle - 1].correction_hz);
        s.truth_hz.push_back(servo.injection.at(tm));
    }
    return s;
}

ClockSeries run_clock(std::size_t n_cycles, const EnvConfig& env, const DriftInjection& drift, std::uint64_t seed,
                      const ClockServoConfig& cfg)
{
    if (n_cycles < 1)
        throw ConfigError("run_clock: n_cycles must be >= 1");
    cfg.validate();
    drift.validate();
    double horizon = static_cast<double>(n_cycles) * cfg.cycle_duration() + 1e-3;
    Timeline tl(env, seed, horizon);
    auto servo = ClockServoState::make(cfg, seed);
    servo.injection = drift;
    for (std::size_t c = 0; c < n_cycles; ++c)
        clock_cycle(servo, cfg, tl);
    return cycle_series(servo, 2 * static_cast<std::size_t>(cfg.samples_per_side));
}

DualClockResult dual_clock_run(std::size_t n_cycles, const EnvConfig& env, std::uint64_t env_seed,
                               std::uint64_t seed_a, std::uint64_t seed_b, const ClockServoConfig& cfg,
                               const DriftInjection& inj_a, const DriftInjection& inj_b, std::size_t warmup_cycles)
{
    if (n_cycles < 1)
        throw ConfigError("dual_clock_run: n_cycles must be >= 1");
    if (warmup_cycles >= n_cycles)
        throw ConfigError("dual_clock_run: warm-up must be shorter than the run");
    cfg.validate();
    double horizon = 2.0 * static_cast<double>(n_cycles) * cfg.cycle_duration() + 1e-3;
    Timeline tl(env, env_seed, horizon);
    auto a = ClockServoState::make(cfg, seed_a);
    auto b = ClockServoState::make(cfg, seed_b);
    a.injection = inj_a;
    b.injection = inj_b;
    for (std::size_t c = 0; c < n_cycles; ++c) {
        clock_cycle(a, cfg, tl);
        clock_cycle(b, cfg, tl);
    }
    std::size_t per = 2 * static_cast<std::size_t>(cfg.samples_per_side);
    DualClockResult r;
    r.a = cycle_series(a, per);
    r.b = cycle_series(b, per);
    r.cycle_pair_s = 2 * cfg.cycle_duration();
    r.difference_hz.resize(n_cycles);
    for (std::size_t i = 0; i < n_cycles; ++i)
        r.difference_hz[i] = r.a.correction_hz[i] - r.b.correction_hz[i];
    double m = 0;
    std::size_t cnt = n_cycles - warmup_cycles;
    for (std::size_t i = warmup_cycles; i < n_cycles; ++i)
        m += r.difference_hz[i];
    m /= static_cast<double>(cnt);
    double v = 0;
    for (std::size_t i = warmup_cycles; i < n_cycles; ++i)
        v += (r.difference_hz[i] - m) * (r.difference_hz[i] - m);
    r.rms_difference_hz = std::sqrt(v / static_cast<double>(cnt));
    return r;
}

} // namespace ionlock
