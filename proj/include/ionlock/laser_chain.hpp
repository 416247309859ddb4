#pragma once

#include "ionlock/noise_synthesis.hpp"

#include <cstdint>
#include <string>

namespace ionlock {

enum class LockTarget { SbsToCoil, PumpToCoil };

std::string lock_target_name(LockTarget t);

struct ServoConfig {
    double bandwidth_hz = 1e5;
    double low_freq_gain_db = 100;
    double bump_height_factor = 0; // relative to the unlocked laser PSD at the bandwidth
    LockTarget lock_target = LockTarget::SbsToCoil;
    double bump_width_fraction = 0.3; // bump FWHM / bandwidth
};

ServoConfig default_servo(LockTarget t);

struct SbsStageConfig {
    double white_reduction = 47000.0 / 12.0;
    double flicker_reduction = 98.821;
    double random_walk_reduction = 1.0;
    // pump flicker h(-1) re-appears as SBS random walk h(-2) = k * h(-1)
    double flicker_to_random_walk_hz = 21.516;
    double bump_reduction = 47000.0 / 12.0;
};

NoiseModel apply_sbs_stage(const NoiseModel& pump, const SbsStageConfig& cfg = {});
NoiseModel apply_cavity_lock(const NoiseModel& laser, const ServoConfig& servo,
                             const NoiseModel& cavity_floor);

NoiseModel pump_free_model();
// Thermorefractive floor of the coil resonator alone.
NoiseModel coil_trn_model();
// TRN plus environmental flicker of the coil, as seen by the lock.
NoiseModel coil_reference_model();

DriftProcess default_coil_drift();

// First-order thermal response plus residual random walk, sampled every dt_s.
FrequencyTrace coil_drift(const DriftProcess& drift, double duration_s, double dt_s, std::uint64_t seed);

} // namespace ionlock
