#pragma once

#include "ionlock/environment.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ionlock {

struct ClockServoConfig {
    double half_width_hz = 3000;
    double gain = 0;          // Hz per unit imbalance; <= 0 means half_width/4
    double probe_s = 60e-6;
    double rabi_hz = 0;       // <= 0 means a pi pulse: 1/(2 probe)
    double cool_s = 2e-3;
    double detect_s = 2e-3;
    int samples_per_side = 1;
    int two_ms = -1;          // clock transition
    int two_md = -5;
    int unlock_cycles = 30;   // saturated / dark cycles in a row before declaring unlock

    double resolved_gain() const { return gain > 0 ? gain : half_width_hz / 4; }
    double resolved_rabi() const { return rabi_hz > 0 ? rabi_hz : 1.0 / (2 * probe_s); }
    double side_duration() const { return cool_s + probe_s + detect_s; }
    double cycle_duration() const { return 2.0 * samples_per_side * side_duration(); }
    void validate() const;
};

// Low gains for the dual-clock comparison and for clocks interleaved with experiments (see README).
constexpr double kStabilityGainHz = 25.0;
constexpr double kInterleaveGainHz = 50.0;

// Half width = half the laser-limited FWHM of the chain (3 kHz SBS, 6 kHz direct).
double default_half_width(StagePreset chain);
ClockServoConfig stability_servo(StagePreset chain);
ClockServoConfig interleave_servo(StagePreset chain);

struct ClockHistoryEntry {
    std::uint64_t cycle = 0;
    int side = -1;         // -1 left, +1 right
    bool excited = false;  // dark verdict
    double correction_hz = 0; // after this cycle's update
    double t_s = 0;        // start of the probe pulse
};

struct ClockServoState {
    double correction_hz = 0;
    double half_width_hz = 3000;
    double gain = 750;
    std::uint64_t seed = 0;          // keys this clock's shot streams
    DriftInjection injection;        // extra shift of the transition seen by this clock only
    std::vector<ClockHistoryEntry> history;
    std::uint64_t cycles = 0;
    int saturated_run = 0;
    int dark_run = 0;
    int last_step_sign = 0;

    static ClockServoState make(const ClockServoConfig& cfg, std::uint64_t seed);
    void validate() const;
    bool unlocked(int limit) const { return saturated_run >= limit || dark_run >= limit; }
};

// One left/right cycle starting at tl.now(); advances the timeline.
void clock_cycle(ClockServoState& servo, const ClockServoConfig& cfg, Timeline& tl);

struct ClockSeries {
    std::vector<double> t_s;
    std::vector<double> correction_hz;
    std::vector<double> truth_hz; // injected shift at each point
};

// One point per cycle, stamped at the cycle midpoint.
ClockSeries cycle_series(const ClockServoState& servo, std::size_t shots_per_cycle);

ClockSeries run_clock(std::size_t n_cycles, const EnvConfig& env, const DriftInjection& drift, std::uint64_t seed,
                      const ClockServoConfig& cfg = {});

struct DualClockResult {
    ClockSeries a, b;
    std::vector<double> difference_hz; // a - b, per cycle pair
    double cycle_pair_s = 0;
    double rms_difference_hz = 0;      // after warm-up, mean removed
};

// Two servos alternate cycles on one timeline (env_seed). Each clock's shots are
// keyed by its own seed.
DualClockResult dual_clock_run(std::size_t n_cycles, const EnvConfig& env, std::uint64_t env_seed,
                               std::uint64_t seed_a, std::uint64_t seed_b, const ClockServoConfig& cfg = {},
                               const DriftInjection& inj_a = {}, const DriftInjection& inj_b = {},
                               std::size_t warmup_cycles = 0);

} // namespace ionlock
