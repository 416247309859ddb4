#pragma once

#include "ionlock/noise_synthesis.hpp"
#include "ionlock/rng.hpp"

#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace ionlock {

// Sublevels are addressed by twice their m quantum number.
// Index order: S(-1/2), S(+1/2), D(-5/2) .. D(+5/2).
constexpr int kLevels = 8;
int s_index(int two_ms);
int d_index(int two_md);

struct IonConstants {
    double mu_b_hz_per_gauss = 1.39962449361e6;
    double g_s = 2.0025;
    double g_d = 1.2003;
    double sideband_hz = 900e3;
    double sideband_weight = 0.1;
};

struct Transition {
    int two_ms = -1;
    int two_md = -5;
    int sideband = 0; // -1 red, 0 carrier, +1 blue
    double detuning_hz = 0; // relative to the reference S(-1/2)->D(-5/2) carrier
    double rabi_weight = 1;

    std::string label() const;
};

struct TransitionTable {
    double b_field_gauss = 0;
    double sideband_offset_hz = 900e3;
    std::vector<Transition> entries; // sorted by detuning

    const Transition& find(int two_ms, int two_md, int sideband = 0) const;
};

TransitionTable zeeman_table(double b_gauss, const IonConstants& c = {});
// Carrier detuning from the g-factor formula; throws if the pair is forbidden.
double zeeman_detuning(double b_gauss, int two_ms, int two_md, const IonConstants& c = {});
bool quadrupole_allowed(int two_ms, int two_md);

struct IonState {
    std::array<std::complex<double>, kLevels> amp{};

    static IonState ground(int two_ms);
    static IonState superposition_s(double p_minus);
    double population(int index) const { return std::norm(amp[static_cast<std::size_t>(index)]); }
    double p_bright() const; // S manifold
    double p_dark() const;   // D manifold
    double norm() const;
};

// Two-level evolution on the addressed pair. Detuning (laser - transition) is
// static_detuning_hz + trace(t), with trace held constant over each sample.
// The pulse starts at absolute time start_s; trace may be null for a noiseless pulse.
IonState evolve_pulse(const IonState& state, const Transition& tr, double rabi_hz, double duration_s,
                      double phase_rad, const FrequencyTrace* trace, double static_detuning_hz,
                      double start_s = 0);

// Analytic resonant-frame excitation for a noiseless square pulse from the S level.
double rabi_probability(double rabi_hz, double detuning_hz, double duration_s);

// Laser environment handed to multi-pulse sequences.
struct PulseContext {
    const FrequencyTrace* trace = nullptr;
    double t_s = 0;              // advanced by each pulse
    double laser_offset_hz = 0;  // added to every pulse's detuning (clock correction etc.)
    double rabi_scale = 1.0;     // per-shot Rabi amplitude factor
};

struct PumpConfig {
    int n_cycles = 10;
    double pulse674_s = 15e-6;
    double pulse1033_s = 50e-6;
    double rabi_hz = 1.0 / (2 * 15e-6);
    double branching_to_s_minus = 1.0;
};

// Each cycle: 674 pulse on S(+1/2)->D(-3/2), then the quench resolves D(-3/2)
// by a quantum jump into S(-1/2) or S(+1/2) per the branching ratio.
IonState optical_pump(IonState state, const PumpConfig& cfg, const TransitionTable& table,
                      PulseContext& ctx, Rng& rng);

struct ShelvePulse {
    int two_md = -5;
    double duration_s = 15e-6;
    double rabi_hz = 1.0 / (2 * 15e-6);
};

// Default order of D targets for multi-pulse shelving from S(-1/2).
std::vector<ShelvePulse> default_shelving(int n_pulses, double duration_s = 15e-6);

IonState shelve_multi(IonState state, const std::vector<ShelvePulse>& pulses, const TransitionTable& table,
                      PulseContext& ctx);

struct DetectionConfig {
    double bright_rate_cps = 15000;
    double dark_rate_cps = 500;
    double window_s = 2e-3;
    int threshold_counts = -1; // < 0: choose the Poisson-optimal threshold

    void validate() const;
    int resolved_threshold() const;
};

// P(counts >= thr) and P(counts < thr) for Poisson means; used for the optimal threshold.
double poisson_tail_ge(double mean, int thr);
int optimal_threshold(double bright_mean, double dark_mean);
double misclassification(double bright_mean, double dark_mean, int thr);

struct ShotRecord {
    std::uint64_t shot_id = 0;
    std::string sequence_tag;
    int counts = 0;
    bool bright = false;      // verdict: counts >= threshold
    bool true_bright = false; // collapsed state before counting
    double detuning_hz = 0;
    double phase_rad = 0;
    double t_wall = 0;
};

ShotRecord detect(const IonState& state, const DetectionConfig& cfg, Rng& rng);
// Number of detect() calls made on this thread so far.
std::uint64_t detection_count();

} // namespace ionlock
