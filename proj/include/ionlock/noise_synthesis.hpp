#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ionlock {

// Lorentzian term in the frequency-noise PSD. width_hz is the FWHM.
struct Bump {
    double center_hz = 0;
    double width_hz = 1;
    double height = 0; // Hz^2/Hz at the centre

    double operator()(double f) const;
};

// Slow thermal drift of the reference cavity.
struct DriftProcess {
    double temp_sensitivity_hz_per_k = 2.5e9;
    double settle_tau_s = 420.0;
    // temperature setpoint error = offset + sine + step (+ sampled series if given)
    double temp_offset_k = 0;
    double temp_sine_amplitude_k = 0;
    double temp_sine_period_s = 3600;
    double temp_step_k = 0;
    double temp_step_time_s = 0;
    std::vector<double> temp_series_k;
    double temp_series_dt_s = 0;
    double residual_random_walk_hz2_per_s = 0;

    double temp_error_k(double t) const;
    void validate() const;
};

// One feedback lock applied on top of the laser noise below it.
// Loop gain G(f) = G0 / (1 + i f/fp), fp = bandwidth / G0.
struct LockStage {
    std::string target;
    double bandwidth_hz = 1e5;
    double low_freq_gain = 1e5; // linear, may be +inf
    std::array<double, 5> ref_h{};
    std::vector<Bump> ref_bumps;
    double ref_floor = 0;
    Bump bump{}; // servo bump, frozen when the lock is applied

    double suppression(double f) const;   // |1/(1+G)|^2
    double transmission(double f) const;  // |G/(1+G)|^2
    double reference_psd(double f) const;
};

struct NoiseModel {
    std::array<double, 5> h{}; // h[alpha + 2], alpha in -2..2
    std::vector<Bump> bumps;
    double floor_hz2_per_hz = 0;
    std::vector<LockStage> locks;
    std::optional<DriftProcess> drift;
    std::string id;

    double h_alpha(int alpha) const { return h.at(static_cast<std::size_t>(alpha + 2)); }
    double& h_alpha(int alpha) { return h.at(static_cast<std::size_t>(alpha + 2)); }
    bool is_zero() const;
    double highest_feature_hz() const;
    void validate() const;
};

double evaluate_psd(const NoiseModel& model, double f_hz);
std::vector<double> evaluate_psd(const NoiseModel& model, const std::vector<double>& f_hz);

enum class StagePreset { PumpFree, SbsFree, SbsCoilLocked, PumpCoilLocked };

std::string preset_name(StagePreset p);
StagePreset parse_preset(std::string_view name);
NoiseModel preset_model(StagePreset p); // implemented with the laser chain

struct FrequencyTrace {
    double rate_hz = 1;
    std::vector<double> samples; // Hz
    std::uint64_t seed = 0;
    std::string model_id;
    double t0_s = 0;

    double duration_s() const { return static_cast<double>(samples.size()) / rate_hz; }
    double end_s() const { return t0_s + duration_s(); }
    void validate() const;
};

using PsdFunction = std::function<double(double)>;

// Real Gaussian sequence with one-sided PSD psd(f), bins k*rate/n for k >= 1.
// Traces longer than the block limit are built from overlapped blocks plus a
// decimated low band.
std::vector<double> shaped_noise(const PsdFunction& psd, std::size_t n, double rate_hz,
                                 std::uint64_t seed, std::string_view stream);

// Same, from PSD values on the bins k*rate/N (k = 0..N/2, N a power of two);
// returns the first n_out samples.
std::vector<double> shaped_noise_bins(const std::vector<double>& psd_bins, std::size_t N, std::size_t n_out,
                                      double rate_hz, std::uint64_t seed, std::string_view stream);

FrequencyTrace synthesize_trace(const NoiseModel& model, double duration_s, double rate_hz,
                                std::uint64_t seed);

struct PsdEstimate {
    std::vector<double> freq_hz;
    std::vector<double> psd; // one-sided, Hz^2/Hz
    double df_hz = 0;
    std::size_t segments = 0;

    double integral() const;
    // mean of psd over [f_lo, f_hi)
    double band_mean(double f_lo, double f_hi) const;
};

// Welch estimate: Hann window, 50% overlap, per-segment linear detrend.
PsdEstimate estimate_psd(const FrequencyTrace& trace, std::size_t segment_len);

// persistence
std::string model_to_json(const NoiseModel& model);
NoiseModel model_from_json(const std::string& text);

void write_trace_csv(const std::string& path, const FrequencyTrace& trace);
FrequencyTrace read_trace_csv(const std::string& path);
void write_trace_binary(const std::string& path, const FrequencyTrace& trace);
FrequencyTrace read_trace_binary(const std::string& path);

} // namespace ionlock
