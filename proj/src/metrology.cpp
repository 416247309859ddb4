#include "ionlock/metrology.hpp"

#include "ionlock/errors.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ionlock {

AdevResult allan_deviation(const std::vector<double>& freq, double rate, double carrier,
                           std::vector<double> taus)
{
    if (freq.size() < 3)
        throw InsufficientDataError("allan_deviation: need at least 3 samples");
    if (!(carrier > 0))
        throw DomainError("allan_deviation: carrier must be > 0");
    if (!(rate > 0))
        throw DomainError("allan_deviation: rate must be > 0");

    const std::size_t N = freq.size();
    double mean = 0;
    for (double v : freq)
        mean += v;
    mean /= static_cast<double>(N);
    // phase (s) of the fractional frequency, mean removed
    std::vector<double> x(N + 1, 0.0);
    for (std::size_t i = 0; i < N; ++i)
        x[i + 1] = x[i] + (freq[i] - mean) / carrier / rate;

    std::vector<std::size_t> ms;
    AdevResult r;
    r.carrier_hz = carrier;
    if (taus.empty()) {
        for (std::size_t m = 1; N + 1 >= 2 * m + 2; m *= 2)
            ms.push_back(m);
    } else {
        std::sort(taus.begin(), taus.end());
        for (double t : taus) {
            auto m = static_cast<std::size_t>(std::llround(t * rate));
            if (m < 1 || N + 1 < 2 * m + 2) {
                r.omitted_taus.push_back(t);
                r.warning = true;
                continue;
            }
            if (!ms.empty() && ms.back() == m)
                continue;
            ms.push_back(m);
        }
    }
    for (std::size_t m : ms) {
        std::size_t count = N - 2 * m + 1;
        double tau = static_cast<double>(m) / rate;
        double acc = 0;
        for (std::size_t i = 0; i < count; ++i) {
            double d = x[i + 2 * m] - 2 * x[i + m] + x[i];
            acc += d * d;
        }
        r.taus.push_back(tau);
        r.sigma_y.push_back(std::sqrt(acc / (2 * tau * tau * static_cast<double>(count))));
        r.n_samples.push_back(count);
    }
    return r;
}

AdevResult allan_deviation(const FrequencyTrace& trace, double carrier, std::vector<double> taus)
{
    return allan_deviation(trace.samples, trace.rate_hz, carrier, std::move(taus));
}

SampledPsd sample_psd(const NoiseModel& model, double f_min, double f_max, int ppd)
{
    if (!(f_min > 0) || !(f_max > f_min))
        throw DomainError("sample_psd: empty band");
    auto n = static_cast<std::size_t>(std::ceil(std::log10(f_max / f_min) * ppd)) + 1;
    n = std::max<std::size_t>(n, 2);
    SampledPsd s;
    s.freq_hz.resize(n);
    s.psd.resize(n);
    double l0 = std::log(f_min), l1 = std::log(f_max);
    for (std::size_t i = 0; i < n; ++i) {
        double f = (i == 0) ? f_min : (i + 1 == n) ? f_max
                                                   : std::exp(l0 + (l1 - l0) * static_cast<double>(i) / static_cast<double>(n - 1));
        s.freq_hz[i] = f;
        s.psd[i] = evaluate_psd(model, f);
    }
    return s;
}

namespace {

// Restrict to [f_min, f_max], inserting interpolated endpoints.
SampledPsd clip_band(const SampledPsd& in, double f_min, double f_max)
{
    if (!(f_min > 0) || !(f_max > f_min))
        throw DomainError("linewidth: empty band");
    if (in.freq_hz.size() != in.psd.size() || in.freq_hz.size() < 2)
        throw DomainError("linewidth: need at least two PSD samples");
    const auto& f = in.freq_hz;
    if (f.front() > f_min * (1 + 1e-12) || f.back() < f_max * (1 - 1e-12))
        throw DomainError("linewidth: PSD samples do not cover the band");
    auto interp = [&](double q) {
        auto it = std::upper_bound(f.begin(), f.end(), q);
        if (it == f.begin())
            return in.psd.front();
        if (it == f.end())
            return in.psd.back();
        std::size_t i = static_cast<std::size_t>(it - f.begin());
        double w = (q - f[i - 1]) / (f[i] - f[i - 1]);
        return (1 - w) * in.psd[i - 1] + w * in.psd[i];
    };
    SampledPsd out;
    out.freq_hz.push_back(f_min);
    out.psd.push_back(interp(f_min));
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i] > f_min && f[i] < f_max) {
            out.freq_hz.push_back(f[i]);
            out.psd.push_back(in.psd[i]);
        }
    }
    out.freq_hz.push_back(f_max);
    out.psd.push_back(interp(f_max));
    return out;
}

} // namespace

double ilw_reverse_one_over_pi(const SampledPsd& psd, double f_min, double f_max)
{
    SampledPsd s = clip_band(psd, f_min, f_max);
    const double target = 1.0 / std::numbers::pi;
    double acc = 0;
    for (std::size_t i = s.freq_hz.size() - 1; i > 0; --i) {
        double fa = s.freq_hz[i - 1], fb = s.freq_hz[i];
        double ga = s.psd[i - 1] / (fa * fa), gb = s.psd[i] / (fb * fb);
        double seg = 0.5 * (ga + gb) * (fb - fa);
        if (acc + seg >= target && seg > 0) {
            double frac = (target - acc) / seg;
            return fb - frac * (fb - fa);
        }
        acc += seg;
    }
    return f_min;
}

double ilw_reverse_one_over_pi(const NoiseModel& model, double f_min, double f_max)
{
    return ilw_reverse_one_over_pi(sample_psd(model, f_min, f_max), f_min, f_max);
}

double ilw_beta_separation(const SampledPsd& psd, double f_min, double f_max)
{
    SampledPsd s = clip_band(psd, f_min, f_max);
    const double k = 8 * std::numbers::ln2 / (std::numbers::pi * std::numbers::pi);
    double area = 0;
    for (std::size_t i = 0; i + 1 < s.freq_hz.size(); ++i) {
        double fa = s.freq_hz[i], fb = s.freq_hz[i + 1];
        double sa = s.psd[i], sb = s.psd[i + 1];
        double da = sa - k * fa, db = sb - k * fb;
        if (da > 0 && db > 0) {
            area += 0.5 * (sa + sb) * (fb - fa);
        } else if (da > 0 || db > 0) {
            double w = da / (da - db);
            double fc = fa + w * (fb - fa);
            double sc = sa + w * (sb - sa);
            if (da > 0)
                area += 0.5 * (sa + sc) * (fc - fa);
            else
                area += 0.5 * (sc + sb) * (fb - fc);
        }
    }
    return std::sqrt(8 * std::numbers::ln2 * area);
}

double ilw_beta_separation(const NoiseModel& model, double f_min, double f_max)
{
    return ilw_beta_separation(sample_psd(model, f_min, f_max), f_min, f_max);
}

LinewidthReport linewidth_report(const NoiseModel& model, double f_min, double f_max)
{
    LinewidthReport r;
    r.band = {f_min, f_max};
    r.flw_hz = std::numbers::pi * model.h_alpha(0);
    auto s = sample_psd(model, f_min, f_max);
    r.ilw_one_over_pi_hz = ilw_reverse_one_over_pi(s, f_min, f_max);
    r.ilw_beta_hz = ilw_beta_separation(s, f_min, f_max);
    return r;
}

double flw_from_plateau(const PsdEstimate& est, double f_lo, double f_hi)
{
    std::vector<double> v;
    for (std::size_t i = 0; i < est.freq_hz.size(); ++i)
        if (est.freq_hz[i] >= f_lo && est.freq_hz[i] < f_hi)
            v.push_back(est.psd[i]);
    if (v.empty())
        throw DomainError("flw_from_plateau: no bins in band");
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    return std::numbers::pi * v[v.size() / 2];
}

// ---- least-squares fits ----

namespace {

constexpr double kSincHalf = 1.3915573782515103; // sin(u)/u = 1/sqrt(2)

struct ResidualFunctor {
    using Scalar = double;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;

    int n_in = 0, n_out = 0;
    std::function<double(const Eigen::VectorXd&, int)> model; // residual i
    int inputs() const { return n_in; }
    int values() const { return n_out; }
    int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r) const
    {
        for (int i = 0; i < n_out; ++i)
            r[i] = model(p, i);
        return 0;
    }
};

struct LmOutcome {
    Eigen::VectorXd p;
    bool converged = false;
    int iterations = 0;
};

LmOutcome run_lm(ResidualFunctor f, Eigen::VectorXd p0, int max_fev)
{
    Eigen::NumericalDiff<ResidualFunctor, Eigen::Central> nd(f);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<ResidualFunctor, Eigen::Central>> lm(nd);
    lm.parameters.maxfev = max_fev;
    lm.parameters.xtol = 1e-14;
    lm.parameters.ftol = 1e-14;
    auto status = lm.minimize(p0);
    LmOutcome o;
    o.p = p0;
    o.iterations = static_cast<int>(lm.iter);
    using S = Eigen::LevenbergMarquardtSpace::Status;
    o.converged = status == S::RelativeReductionTooSmall || status == S::RelativeErrorTooSmall
                  || status == S::RelativeErrorAndReductionTooSmall || status == S::CosinusTooSmall
                  || status == S::FtolTooSmall || status == S::XtolTooSmall || status == S::GtolTooSmall;
    for (int i = 0; i < o.p.size(); ++i)
        if (!std::isfinite(o.p[i]))
            o.converged = false;
    return o;
}

double raw_fwhm(const std::vector<std::pair<double, double>>& pts, std::size_t ipk)
{
    double half = 0.5 * pts[ipk].second;
    double left = NAN, right = NAN;
    for (std::size_t i = ipk; i > 0; --i) {
        if (pts[i - 1].second <= half) {
            double w = (pts[i].second - half) / (pts[i].second - pts[i - 1].second);
            left = pts[i].first - w * (pts[i].first - pts[i - 1].first);
            break;
        }
    }
    for (std::size_t i = ipk; i + 1 < pts.size(); ++i) {
        if (pts[i + 1].second <= half) {
            double w = (pts[i].second - half) / (pts[i].second - pts[i + 1].second);
            right = pts[i].first + w * (pts[i + 1].first - pts[i].first);
            break;
        }
    }
    return right - left;
}

} // namespace

double line_value(LineModel model, double x, double c, double w, double a)
{
    if (model == LineModel::Gaussian) {
        double u = (x - c) / w;
        return a * std::exp(-4 * std::numbers::ln2 * u * u);
    }
    double u = 2 * kSincHalf * (x - c) / w;
    if (std::abs(u) < 1e-8)
        return a;
    double s = std::sin(u) / u;
    return a * s * s;
}

LineFit fit_lineshape(const std::vector<std::pair<double, double>>& points_in, LineModel model)
{
    if (points_in.size() < 5)
        throw InsufficientDataError("fit_lineshape: need at least 5 points");
    auto pts = points_in;
    std::sort(pts.begin(), pts.end());
    std::size_t ipk = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (pts[i].second > pts[ipk].second)
            ipk = i;

    LineFit fit;
    fit.model = model;
    fit.raw_fwhm_hz = raw_fwhm(pts, ipk);

    // scale detunings so parameters are O(1)
    double span = pts.back().first - pts.front().first;
    if (!(span > 0))
        throw DomainError("fit_lineshape: points must span a range of detunings");
    double a0 = pts[ipk].second;
    if (!(a0 > 0))
        throw DegenerateFitError("fit_lineshape: no positive excitation to fit");
    double c0 = pts[ipk].first;
    double w0 = std::isfinite(fit.raw_fwhm_hz) && fit.raw_fwhm_hz > 0 ? fit.raw_fwhm_hz : span / 4;

    ResidualFunctor f;
    f.n_in = 3;
    f.n_out = static_cast<int>(pts.size());
    f.model = [&](const Eigen::VectorXd& p, int i) {
        const auto& pt = pts[static_cast<std::size_t>(i)];
        return line_value(model, pt.first / span, p[0], std::abs(p[1]), p[2]) - pt.second;
    };
    Eigen::VectorXd p(3);
    p << c0 / span, w0 / span, a0;
    auto o = run_lm(f, p, 4000);

    fit.center_hz = o.p[0] * span;
    fit.fwhm_hz = std::abs(o.p[1]) * span;
    fit.amplitude = o.p[2];
    fit.converged = o.converged;
    fit.iterations = o.iterations;
    double ss = 0;
    fit.residuals.resize(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        fit.residuals[i] = pts[i].second - line_value(model, pts[i].first, fit.center_hz, fit.fwhm_hz, fit.amplitude);
        ss += fit.residuals[i] * fit.residuals[i];
    }
    fit.residual_rms = std::sqrt(ss / static_cast<double>(pts.size()));
    if (!(fit.fwhm_hz > 0) || !std::isfinite(fit.fwhm_hz))
        fit.converged = false;
    return fit;
}

CoherenceFit fit_contrast_decay(const std::vector<double>& delays, const std::vector<double>& contrasts,
                                DecayModel model)
{
    if (delays.size() != contrasts.size())
        throw DomainError("fit_contrast_decay: size mismatch");
    if (delays.size() < 4)
        throw InsufficientDataError("fit_contrast_decay: need at least 4 delays");
    double cmin = contrasts[0], cmax = contrasts[0], tmax = 0;
    for (std::size_t i = 0; i < delays.size(); ++i) {
        if (!(contrasts[i] >= 0 && contrasts[i] <= 1))
            throw DomainError("fit_contrast_decay: contrasts must lie in [0, 1]");
        if (delays[i] < 0)
            throw DomainError("fit_contrast_decay: delays must be >= 0");
        cmin = std::min(cmin, contrasts[i]);
        cmax = std::max(cmax, contrasts[i]);
        tmax = std::max(tmax, delays[i]);
    }
    if (cmax - cmin < 1e-12 || !(tmax > 0))
        throw DegenerateFitError("fit_contrast_decay: contrasts show no decay");

    // log-linear start on positive points
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t i = 0; i < delays.size(); ++i) {
        if (contrasts[i] <= 0)
            continue;
        double x = delays[i] / tmax;
        if (model == DecayModel::Gaussian)
            x = x * x;
        double y = std::log(contrasts[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    double slope = -1, icpt = std::log(std::max(cmax, 1e-6));
    if (n >= 2 && n * sxx - sx * sx > 0) {
        slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        icpt = (sy - slope * sx) / n;
    }
    double k0 = slope < 0 ? -slope : 1.0;
    if (model == DecayModel::Gaussian)
        k0 = std::sqrt(k0);

    ResidualFunctor f;
    f.n_in = 2;
    f.n_out = static_cast<int>(delays.size());
    f.model = [&](const Eigen::VectorXd& p, int i) {
        double x = delays[static_cast<std::size_t>(i)] / tmax * p[1];
        double e = model == DecayModel::Gaussian ? std::exp(-x * x) : std::exp(-x);
        return p[0] * e - contrasts[static_cast<std::size_t>(i)];
    };
    Eigen::VectorXd p(2);
    p << std::exp(icpt), k0;
    auto o = run_lm(f, p, 4000);
    if (!(o.p[1] > 0) || !std::isfinite(o.p[1]))
        throw DegenerateFitError("fit_contrast_decay: fitted decay rate is not positive");

    CoherenceFit r;
    r.model = model;
    r.tau_coh_s = tmax / o.p[1];
    r.contrast_0 = std::clamp(o.p[0], 0.0, 1.0);
    double ss = 0;
    Eigen::VectorXd res(f.n_out);
    f(o.p, res);
    for (int i = 0; i < f.n_out; ++i)
        ss += res[i] * res[i];
    r.residual_rms = std::sqrt(ss / f.n_out);
    return r;
}

double coherence_linewidth(double tau)
{
    if (!(tau > 0))
        throw DomainError("coherence_linewidth: tau must be > 0");
    return 1.0 / (std::numbers::pi * tau);
}

double coherence_time(double linewidth)
{
    if (!(linewidth > 0))
        throw DomainError("coherence_time: linewidth must be > 0");
    return 1.0 / (std::numbers::pi * linewidth);
}

} // namespace ionlock
