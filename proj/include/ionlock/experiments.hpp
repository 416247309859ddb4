#pragma once

#include "ionlock/clock_servo.hpp"
#include "ionlock/environment.hpp"
#include "ionlock/metrology.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ionlock {

enum class ScanOrder { Waterfall, LeftToRight, RightToLeft };

std::string scan_order_name(ScanOrder o);
ScanOrder parse_scan_order(std::string_view s);

struct ScanPlan {
    std::vector<double> detunings_hz; // ascending
    int trials = 50;
    ScanOrder order = ScanOrder::Waterfall;
    int shots_per_point_per_trial = 1;

    static ScanPlan uniform(double lo_hz, double hi_hz, int points, int trials, ScanOrder order = ScanOrder::Waterfall);
    std::size_t shots() const { return detunings_hz.size() * static_cast<std::size_t>(trials * shots_per_point_per_trial); }
    void validate() const;
};

struct InterleaveSchedule {
    bool enabled = false;
    int clock_cycles_per_experiment_shot = 1;
    int warmup_cycles = 300;
    ClockServoConfig clock = interleave_servo(StagePreset::SbsCoilLocked);

    void validate() const;
};

// One coherent pulse of a shot. Detuning is laser - transition.
struct ProbePulse {
    int two_ms = -1;
    int two_md = -5;
    int sideband = 0;
    double rabi_hz = 1.0 / (2 * 15e-6);
    double duration_s = 15e-6;
    double phase_rad = 0;
    double detuning_hz = 0;
    double wait_before_s = 0; // free evolution before this pulse
};

struct ShotSpec {
    bool pump = true;                  // else the ion starts in S(-1/2)
    std::vector<ProbePulse> pulses;
    std::vector<ShelvePulse> shelving;
    double cool_s = 2e-3;

    double duration(const PumpConfig& pump_cfg, double detect_window_s) const;
};

struct ExperimentTelemetry {
    std::vector<double> shot_t_s;
    std::vector<double> shot_correction_hz; // clock correction applied to each experiment shot
    std::size_t experiment_shots = 0;
    std::size_t clock_cycles = 0;
    std::uint64_t detections = 0;
    bool aborted = false;
    std::string diagnostic;
};

// Owns the timeline and, when interleaving, the clock servo.
class ShotRunner {
public:
    ShotRunner(const EnvConfig& env, std::uint64_t seed, double horizon_s, const InterleaveSchedule& schedule);

    // Runs the clock cycles due before a shot, then the shot itself.
    ShotRecord shot(const ShotSpec& spec, const std::string& stream);

    Timeline& timeline() { return tl_; }
    const ExperimentTelemetry& telemetry() const { return tel_; }
    ExperimentTelemetry& telemetry() { return tel_; }
    const ClockServoState* clock() const { return clock_ ? &*clock_ : nullptr; }
    void finish();

private:
    void run_clock_cycle();

    Timeline tl_;
    InterleaveSchedule sched_;
    std::optional<ClockServoState> clock_;
    ExperimentTelemetry tel_;
    std::uint64_t det_start_;
};

struct SpectroscopyConfig {
    double probe_s = 1e-3;
    double pulse_area_rad = 3.141592653589793; // pi
    int two_ms = -1;
    int two_md = -5;
    int sideband = 0;
    bool pump = true;
    double cool_s = 2e-3;
    LineModel fit_model = LineModel::Gaussian;

    double rabi_hz() const;
    void validate() const;
};

struct SpectrumPoint {
    double detuning_hz = 0;
    double p = 0;
    double stderr_p = 0;
    std::size_t n = 0;
};

struct SpectroscopyResult {
    std::vector<SpectrumPoint> points;
    std::optional<LineFit> fit; // empty if the fit failed
    std::string fit_error;
    ExperimentTelemetry telemetry;
};

SpectroscopyResult waterfall_spectroscopy(const ScanPlan& plan, const EnvConfig& env, std::uint64_t seed,
                                          const SpectroscopyConfig& cfg = {}, const InterleaveSchedule& sched = {});
// Any scan order.
SpectroscopyResult run_spectroscopy(const ScanPlan& plan, const EnvConfig& env, std::uint64_t seed,
                                    const SpectroscopyConfig& cfg = {}, const InterleaveSchedule& sched = {});

struct RabiConfig {
    double rabi_hz = 1.0 / (2 * 20e-6);
    double detuning_hz = 0;
    int trials = 200;
    int two_ms = -1;
    int two_md = -5;
    bool pump = true;
    double cool_s = 2e-3;
};

struct RabiPoint {
    double duration_s = 0;
    double p = 0;
    double stderr_p = 0;
    std::size_t n = 0;
};

struct RabiResult {
    std::vector<RabiPoint> points;
    ExperimentTelemetry telemetry;
};

RabiResult rabi_scan(const std::vector<double>& durations_s, const EnvConfig& env, std::uint64_t seed,
                     const RabiConfig& cfg = {}, const InterleaveSchedule& sched = {});

struct RamseyConfig {
    double half_pi_s = 7.5e-6;
    int trials = 100; // per (delay, phase)
    int two_ms = -1;
    int two_md = -5;
    bool pump = true;
    double cool_s = 2e-3;
    DecayModel decay = DecayModel::Exponential;
};

struct RamseyPoint {
    double delay_s = 0;
    std::vector<double> phases_rad;
    std::vector<double> p;
    double offset = 0;
    double amplitude = 0;
    double contrast = 0;
    bool flagged = false; // sinusoid fit failed
};

struct RamseyResult {
    std::vector<RamseyPoint> points;
    std::optional<CoherenceFit> decay;
    std::string decay_error;
    ExperimentTelemetry telemetry;
};

// Phases must be >= 4 values spanning 2 pi (e.g. k 2pi/n).
RamseyResult ramsey_scan(const std::vector<double>& delays_s, const std::vector<double>& phases_rad,
                         const EnvConfig& env, std::uint64_t seed, const RamseyConfig& cfg = {},
                         const InterleaveSchedule& sched = {});

// Sinusoid p = o + a cos(phi) + b sin(phi) by linear least squares.
struct SinusoidFit {
    double offset = 0;
    double amplitude = 0;
    double phase_rad = 0;
    double contrast = 0; // amplitude/offset, clamped to [0, 1]
};
SinusoidFit fit_sinusoid(const std::vector<double>& phases_rad, const std::vector<double>& p);

struct SpamConfig {
    int shelving_pulses = 3;
    double shelve_pulse_s = 15e-6;
    double cool_s = 2e-3;
};

struct SpamResult {
    double fidelity = 0;         // mean of the two prepared-state fidelities
    double fidelity_dark = 0;    // shelved
    double fidelity_bright = 0;
    double overlap = 0;          // fraction of verdicts disagreeing with the collapsed state
    int threshold = 0;
    int shelving_pulses = 0;
    std::vector<std::size_t> histogram_dark;   // index = counts
    std::vector<std::size_t> histogram_bright;
    ExperimentTelemetry telemetry;
};

// Half the shots are prepared dark (pump + shelve), half bright (pump only).
SpamResult spam_experiment(int n_shots, const EnvConfig& env, std::uint64_t seed, const SpamConfig& cfg = {},
                           const InterleaveSchedule& sched = {});

// Smallest shelving pulse count (1..5) reaching the target fidelity, or 0 if none does.
int minimum_shelving_pulses(const EnvConfig& env, std::uint64_t seed, double target = 0.99, int n_shots = 1000,
                            const SpamConfig& base = {});

// Runs a closure against a runner with the clock warmed up. An unlocked clock
// aborts the run: telemetry.aborted is set and the diagnostic filled in.
ExperimentTelemetry run_interleaved(const InterleaveSchedule& schedule, const EnvConfig& env, std::uint64_t seed,
                                    double horizon_s, const std::function<void(ShotRunner&)>& experiment);

} // namespace ionlock
