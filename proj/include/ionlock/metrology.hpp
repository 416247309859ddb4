#pragma once

#include "ionlock/noise_synthesis.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace ionlock {

struct AdevResult {
    std::vector<double> taus;
    std::vector<double> sigma_y;
    std::vector<std::size_t> n_samples; // number of overlapping second differences
    double carrier_hz = 0;
    std::vector<double> omitted_taus;
    bool warning = false; // set when a requested tau was dropped
};

// Overlapping ADEV of y = freq/carrier. freq holds averages over 1/rate_hz.
// Empty taus selects octave spacing from 1/rate.
AdevResult allan_deviation(const std::vector<double>& freq_hz, double rate_hz, double carrier_hz,
                           std::vector<double> taus = {});
AdevResult allan_deviation(const FrequencyTrace& trace, double carrier_hz, std::vector<double> taus = {});

// Sampled one-sided frequency-noise PSD, strictly increasing frequencies.
struct SampledPsd {
    std::vector<double> freq_hz;
    std::vector<double> psd;
};

// Log-spaced samples of a model over [f_min, f_max].
SampledPsd sample_psd(const NoiseModel& model, double f_min, double f_max, int points_per_decade = 400);

double ilw_reverse_one_over_pi(const SampledPsd& psd, double f_min, double f_max);
double ilw_reverse_one_over_pi(const NoiseModel& model, double f_min, double f_max);
double ilw_beta_separation(const SampledPsd& psd, double f_min, double f_max);
double ilw_beta_separation(const NoiseModel& model, double f_min, double f_max);

struct LinewidthReport {
    double flw_hz = 0;
    double ilw_one_over_pi_hz = 0;
    double ilw_beta_hz = 0;
    std::pair<double, double> band{0, 0};
};

LinewidthReport linewidth_report(const NoiseModel& model, double f_min, double f_max);
// FLW from a measured PSD: pi times the median over the plateau band.
double flw_from_plateau(const PsdEstimate& est, double f_lo, double f_hi);

enum class LineModel { Gaussian, SincSquared };

struct LineFit {
    double center_hz = 0;
    double fwhm_hz = 0;
    double amplitude = 0;
    double residual_rms = 0;
    bool converged = false;
    int iterations = 0;
    std::vector<double> residuals;
    LineModel model = LineModel::Gaussian;
    // FWHM read directly off the data by linear interpolation at half maximum
    double raw_fwhm_hz = 0;
};

double line_value(LineModel model, double x, double center, double fwhm, double amplitude);

LineFit fit_lineshape(const std::vector<std::pair<double, double>>& points,
                      LineModel model = LineModel::Gaussian);

enum class DecayModel { Exponential, Gaussian };

struct CoherenceFit {
    double tau_coh_s = 0;
    double contrast_0 = 0;
    double residual_rms = 0;
    DecayModel model = DecayModel::Exponential;
};

CoherenceFit fit_contrast_decay(const std::vector<double>& delays_s, const std::vector<double>& contrasts,
                                DecayModel model = DecayModel::Exponential);

double coherence_linewidth(double tau_coh_s);
double coherence_time(double linewidth_hz);

} // namespace ionlock
