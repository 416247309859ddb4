#include "ionlock/laser_chain.hpp"

#include "ionlock/errors.hpp"
#include "ionlock/rng.hpp"

#include <cmath>
#include <numbers>

namespace ionlock {

std::string lock_target_name(LockTarget t)
{
    return t == LockTarget::SbsToCoil ? "sbs_to_coil" : "pump_to_coil";
}

ServoConfig default_servo(LockTarget t)
{
    ServoConfig s;
    s.lock_target = t;
    s.low_freq_gain_db = 100;
    if (t == LockTarget::SbsToCoil) {
        s.bandwidth_hz = 100e3;
        s.bump_height_factor = 0;
    } else {
        s.bandwidth_hz = 250e3;
        s.bump_height_factor = 0.12669;
    }
    return s;
}

NoiseModel apply_sbs_stage(const NoiseModel& pump, const SbsStageConfig& cfg)
{
    NoiseModel out = pump;
    out.h_alpha(0) = pump.h_alpha(0) / cfg.white_reduction;
    out.h_alpha(-1) = pump.h_alpha(-1) / cfg.flicker_reduction;
    out.h_alpha(-2) = pump.h_alpha(-2) / cfg.random_walk_reduction
                      + cfg.flicker_to_random_walk_hz * pump.h_alpha(-1);
    out.h_alpha(1) = pump.h_alpha(1) / cfg.white_reduction;
    out.h_alpha(2) = pump.h_alpha(2) / cfg.white_reduction;
    for (auto& b : out.bumps)
        b.height /= cfg.bump_reduction;
    out.floor_hz2_per_hz = pump.floor_hz2_per_hz / cfg.white_reduction;
    out.id = pump.id.empty() ? "sbs" : pump.id + "+sbs";
    return out;
}

NoiseModel apply_cavity_lock(const NoiseModel& laser, const ServoConfig& servo,
                             const NoiseModel& cavity)
{
    if (!(servo.bandwidth_hz > 0))
        throw ConfigError("servo: bandwidth must be > 0");
    if (std::isnan(servo.low_freq_gain_db))
        throw ConfigError("servo: gain must be finite or +inf");
    if (!cavity.locks.empty())
        throw ConfigError("servo: the cavity reference must be an unlocked model");
    LockStage l;
    l.target = lock_target_name(servo.lock_target);
    l.bandwidth_hz = servo.bandwidth_hz;
    l.low_freq_gain = std::pow(10.0, servo.low_freq_gain_db / 20.0);
    l.ref_h = cavity.h;
    l.ref_bumps = cavity.bumps;
    l.ref_floor = cavity.floor_hz2_per_hz;
    l.bump.center_hz = servo.bandwidth_hz;
    l.bump.width_hz = servo.bump_width_fraction * servo.bandwidth_hz;
    l.bump.height = servo.bump_height_factor * evaluate_psd(laser, servo.bandwidth_hz);
    NoiseModel out = laser;
    out.locks.push_back(l);
    out.id = laser.id + "+lock(" + l.target + ")";
    return out;
}

NoiseModel pump_free_model()
{
    NoiseModel m;
    m.id = "pump";
    m.h_alpha(0) = 47e3 / std::numbers::pi;
    m.h_alpha(-1) = 2.553e9;
    m.bumps.push_back(Bump{450e3, 600e3, 5.914e4});
    return m;
}

NoiseModel coil_trn_model()
{
    NoiseModel m;
    m.id = "coil_trn";
    m.h_alpha(-1) = 2.0;
    m.h_alpha(0) = 1e-3;
    return m;
}

NoiseModel coil_reference_model()
{
    NoiseModel m;
    m.id = "coil";
    m.h_alpha(-1) = 1.9884e5;
    m.h_alpha(0) = 1e-3;
    return m;
}

NoiseModel preset_model(StagePreset p)
{
    NoiseModel m;
    switch (p) {
    case StagePreset::PumpFree:
        m = pump_free_model();
        break;
    case StagePreset::SbsFree:
        m = apply_sbs_stage(pump_free_model());
        break;
    case StagePreset::SbsCoilLocked:
        m = apply_cavity_lock(apply_sbs_stage(pump_free_model()), default_servo(LockTarget::SbsToCoil),
                              coil_reference_model());
        break;
    case StagePreset::PumpCoilLocked:
        m = apply_cavity_lock(pump_free_model(), default_servo(LockTarget::PumpToCoil),
                              coil_reference_model());
        break;
    }
    m.id = preset_name(p);
    return m;
}

DriftProcess default_coil_drift()
{
    DriftProcess d;
    d.temp_sine_amplitude_k = 20e-6;
    d.temp_sine_period_s = 3600;
    d.residual_random_walk_hz2_per_s = 1.6e5;
    return d;
}

FrequencyTrace coil_drift(const DriftProcess& drift, double duration_s, double dt_s, std::uint64_t seed)
{
    drift.validate();
    if (!(dt_s > 0) || dt_s > drift.settle_tau_s / 10)
        throw ConfigError("coil_drift: dt must be in (0, settle_tau/10]");
    if (!(duration_s > 0))
        throw ConfigError("coil_drift: duration must be > 0");
    auto n = static_cast<std::size_t>(std::floor(duration_s / dt_s + 1e-9)) + 1;
    n = std::max<std::size_t>(n, 2);

    FrequencyTrace tr;
    tr.rate_hz = 1.0 / dt_s;
    tr.seed = seed;
    tr.model_id = "coil_drift";
    tr.samples.resize(n);

    Rng rng = make_stream(seed, stream_name("laser_chain", "drift_walk", 0));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double decay = std::exp(-dt_s / drift.settle_tau_s);
    const double step = std::sqrt(drift.residual_random_walk_hz2_per_s * dt_s);
    double f = 0, w = 0;
    tr.samples[0] = 0;
    for (std::size_t i = 1; i < n; ++i) {
        double tm = (static_cast<double>(i) - 0.5) * dt_s;
        double target = drift.temp_sensitivity_hz_per_k * drift.temp_error_k(tm);
        f = f * decay + target * (1 - decay);
        double g = gauss(rng);
        w += step * g;
        tr.samples[i] = f + w;
    }
    return tr;
}

} // namespace ionlock
