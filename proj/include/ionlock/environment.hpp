#pragma once

#include "ionlock/ion_physics.hpp"
#include "ionlock/laser_chain.hpp"
#include "ionlock/noise_synthesis.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace ionlock {

// Frequency shift applied to the transition (or, per clock, to the laser).
struct DriftInjection {
    enum class Kind { None, Triangle, Linear };
    Kind kind = Kind::None;
    double amplitude_hz = 0;   // triangle peak
    double rate_hz_per_s = 0;  // slope magnitude
    double start_s = 0;

    static DriftInjection none() { return {}; }
    static DriftInjection triangle(double amplitude_hz, double rate_hz_per_s);
    static DriftInjection linear(double rate_hz_per_s);
    double at(double t) const;
    void validate() const;
};

std::string injection_kind_name(DriftInjection::Kind k);

// Everything about the laser and ion that experiments and clocks see.
struct EnvConfig {
    NoiseModel laser;                      // chain PSD delivered to the ion
    double excess_white_hz2_per_hz = 0;    // ion-side excess white frequency noise
    bool drift_enabled = true;
    DriftProcess drift;
    DriftInjection injection;              // shift of the atomic transition
    double fast_rate_hz = 2e6;
    double split_hz = 2e3;
    double slow_rate_hz = 8e3;
    double drift_dt_s = 0.01;
    IonConstants ion;
    double b_field_gauss = 5.9;
    double rabi_spread = 0;                // relative rms of the per-shot Rabi amplitude
    DetectionConfig detection;
    PumpConfig pump;

    double total_psd(double f) const;
    void validate() const;
};

EnvConfig default_env(StagePreset chain);
EnvConfig noiseless_env();

// Calibrated ion-side constants. The excess white noise is set per delivery path
// (SBS-filtered or direct pump); the Rabi spread is shared.
constexpr double kExcessWhiteSbs = 1400.0;
constexpr double kExcessWhitePump = 2100.0;
constexpr double kDefaultRabiSpread = 0.07;
double default_excess_white(StagePreset chain);

// A realisation of the environment over [0, horizon].
class Timeline {
public:
    Timeline(EnvConfig env, std::uint64_t seed, double horizon_s);

    const EnvConfig& env() const { return env_; }
    const TransitionTable& table() const { return table_; }
    std::uint64_t seed() const { return seed_; }
    double horizon() const { return horizon_; }

    double now() const { return now_; }
    void advance(double dt);

    // Laser-minus-atom frequency offset (Hz) over [t0, t0 + dur] at the fast rate.
    // Fast noise and the per-shot Rabi factor are keyed by `stream`.
    FrequencyTrace segment(double t0, double dur, std::string_view stream) const;
    double slow_offset(double t) const;
    double rabi_scale(std::string_view stream) const;

private:
    const std::vector<double>& fast_psd(std::size_t n) const;

    EnvConfig env_;
    std::uint64_t seed_;
    double horizon_;
    double now_ = 0;
    TransitionTable table_;
    bool noisy_fast_ = false;
    std::vector<double> slow_;
    FrequencyTrace drift_;
    mutable std::map<std::size_t, std::vector<double>> fast_psd_cache_;
};

} // namespace ionlock
