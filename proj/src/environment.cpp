#include "ionlock/environment.hpp"

#include "ionlock/errors.hpp"
#include "fft.hpp"

#include <algorithm>
#include <cmath>

namespace ionlock {

DriftInjection DriftInjection::triangle(double amplitude_hz, double rate_hz_per_s)
{
    DriftInjection d;
    d.kind = Kind::Triangle;
    d.amplitude_hz = amplitude_hz;
    d.rate_hz_per_s = rate_hz_per_s;
    d.validate();
    return d;
}

DriftInjection DriftInjection::linear(double rate_hz_per_s)
{
    DriftInjection d;
    d.kind = Kind::Linear;
    d.rate_hz_per_s = rate_hz_per_s;
    return d;
}

void DriftInjection::validate() const
{
    if (kind == Kind::Triangle) {
        if (!(rate_hz_per_s >= 0) || !(amplitude_hz >= 0))
            throw ConfigError("triangle injection: amplitude and rate must be >= 0");
    }
    if (!std::isfinite(rate_hz_per_s) || !std::isfinite(amplitude_hz) || !std::isfinite(start_s))
        throw ConfigError("injection: non-finite parameter");
}

// Triangle starts at 0 and rises; period 4A/r.
double DriftInjection::at(double t) const
{
    double u = t - start_s;
    if (u <= 0)
        return 0;
    switch (kind) {
    case Kind::None:
        return 0;
    case Kind::Linear:
        return rate_hz_per_s * u;
    case Kind::Triangle: {
        if (amplitude_hz == 0 || rate_hz_per_s == 0)
            return 0;
        double period = 4 * amplitude_hz / rate_hz_per_s;
        double x = std::fmod(u, period) / period; // [0,1)
        if (x < 0.25)
            return 4 * amplitude_hz * x;
        if (x < 0.75)
            return amplitude_hz * (2 - 4 * x);
        return amplitude_hz * (4 * x - 4);
    }
    }
    return 0;
}

std::string injection_kind_name(DriftInjection::Kind k)
{
    switch (k) {
    case DriftInjection::Kind::None:
        return "none";
    case DriftInjection::Kind::Triangle:
        return "triangle";
    case DriftInjection::Kind::Linear:
        return "linear";
    }
    return "none";
}

double EnvConfig::total_psd(double f) const
{
    return evaluate_psd(laser, f) + excess_white_hz2_per_hz;
}

void EnvConfig::validate() const
{
    laser.validate();
    if (laser.drift)
        throw ConfigError("env: put the coil drift in env.drift, not in the laser model");
    if (!(excess_white_hz2_per_hz >= 0))
        throw ConfigError("env: excess white noise must be >= 0");
    if (!(slow_rate_hz > 0) || !(fast_rate_hz > slow_rate_hz))
        throw ConfigError("env: need fast_rate > slow_rate > 0");
    if (!(split_hz > 0) || split_hz > slow_rate_hz / 2)
        throw ConfigError("env: split frequency must lie in (0, slow_rate/2]");
    double top = laser.highest_feature_hz();
    if (top > 0 && fast_rate_hz / 2 <= top)
        throw ConfigError("env: fast rate does not resolve the highest PSD feature");
    if (drift_enabled) {
        drift.validate();
        if (!(drift_dt_s > 0) || drift_dt_s > drift.settle_tau_s / 10)
            throw ConfigError("env: drift_dt must be in (0, settle_tau/10]");
    }
    injection.validate();
    if (!(b_field_gauss >= 0))
        throw ConfigError("env: B field must be >= 0");
    if (!(rabi_spread >= 0) || rabi_spread > 0.5)
        throw ConfigError("env: rabi_spread must lie in [0, 0.5]");
    detection.validate();
}

double default_excess_white(StagePreset chain)
{
    switch (chain) {
    case StagePreset::SbsFree:
    case StagePreset::SbsCoilLocked:
        return kExcessWhiteSbs;
    case StagePreset::PumpFree:
    case StagePreset::PumpCoilLocked:
        return kExcessWhitePump;
    }
    return kExcessWhiteSbs;
}

EnvConfig default_env(StagePreset chain)
{
    EnvConfig e;
    e.laser = preset_model(chain);
    e.excess_white_hz2_per_hz = default_excess_white(chain);
    e.rabi_spread = kDefaultRabiSpread;
    e.drift = default_coil_drift();
    return e;
}

EnvConfig noiseless_env()
{
    EnvConfig e;
    e.laser = NoiseModel{};
    e.laser.id = "noiseless";
    e.drift_enabled = false;
    e.detection.dark_rate_cps = 0;
    return e;
}

namespace {

double interp(const std::vector<double>& v, double x)
{
    if (v.empty())
        return 0;
    if (x <= 0)
        return v.front();
    auto k = static_cast<std::size_t>(x);
    if (k + 1 >= v.size())
        return v.back();
    double w = x - static_cast<double>(k);
    return (1 - w) * v[k] + w * v[k + 1];
}

} // namespace

Timeline::Timeline(EnvConfig env, std::uint64_t seed, double horizon_s)
    : env_(std::move(env)), seed_(seed), horizon_(horizon_s)
{
    env_.validate();
    if (!(horizon_s > 0))
        throw ConfigError("timeline: horizon must be > 0");
    table_ = zeeman_table(env_.b_field_gauss, env_.ion);
    bool laser_noise = !env_.laser.is_zero();
    noisy_fast_ = laser_noise || env_.excess_white_hz2_per_hz > 0;

    if (noisy_fast_) {
        auto n = static_cast<std::size_t>(std::ceil(horizon_ * env_.slow_rate_hz)) + 2;
        n = std::max<std::size_t>(n, 64);
        const double split = env_.split_hz;
        slow_ = shaped_noise([&](double f) { return f <= split ? env_.total_psd(f) : 0.0; }, n,
                             env_.slow_rate_hz, seed_, stream_name("timeline", "slow", 0));
    }
    if (env_.drift_enabled)
        drift_ = coil_drift(env_.drift, horizon_ + 2 * env_.drift_dt_s, env_.drift_dt_s, seed_);
}

void Timeline::advance(double dt)
{
    if (!(dt >= 0))
        throw ConfigError("timeline: cannot advance by a negative time");
    now_ += dt;
}

double Timeline::slow_offset(double t) const
{
    double v = interp(slow_, t * env_.slow_rate_hz);
    if (!drift_.samples.empty())
        v += interp(drift_.samples, t * drift_.rate_hz);
    return v - env_.injection.at(t);
}

const std::vector<double>& Timeline::fast_psd(std::size_t n) const
{
    auto it = fast_psd_cache_.find(n);
    if (it != fast_psd_cache_.end())
        return it->second;
    std::vector<double> bins(n / 2 + 1, 0.0);
    for (std::size_t k = 1; k < n / 2; ++k) {
        double f = static_cast<double>(k) * env_.fast_rate_hz / static_cast<double>(n);
        if (f > env_.split_hz)
            bins[k] = env_.total_psd(f);
    }
    return fast_psd_cache_.emplace(n, std::move(bins)).first->second;
}

FrequencyTrace Timeline::segment(double t0, double dur, std::string_view stream) const
{
    if (t0 < 0 || dur < 0)
        throw ConfigError("timeline: segment start and duration must be >= 0");
    if (t0 + dur > horizon_ * (1 + 1e-12))
        throw CoverageError("timeline: segment runs past the simulated horizon");
    const double rate = env_.fast_rate_hz;
    auto n = static_cast<std::size_t>(std::ceil(dur * rate)) + 1;
    FrequencyTrace tr;
    tr.rate_hz = rate;
    tr.seed = seed_;
    tr.model_id = env_.laser.id;
    tr.t0_s = t0;
    if (noisy_fast_) {
        std::size_t L = std::max<std::size_t>(4096, detail::next_pow2(n));
        tr.samples = shaped_noise_bins(fast_psd(L), L, n, rate, seed_, stream);
    } else {
        tr.samples.assign(n, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i)
        tr.samples[i] += slow_offset(t0 + static_cast<double>(i) / rate);
    return tr;
}

double Timeline::rabi_scale(std::string_view stream) const
{
    if (env_.rabi_spread == 0)
        return 1.0;
    Rng rng = make_stream(seed_, std::string(stream) + ":rabi");
    std::normal_distribution<double> g(0.0, 1.0);
    return std::max(0.0, 1.0 + env_.rabi_spread * g(rng));
}

} // namespace ionlock
