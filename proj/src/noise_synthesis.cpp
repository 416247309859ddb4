#include "ionlock/noise_synthesis.hpp"

#include "ionlock/errors.hpp"
#include "ionlock/laser_chain.hpp"
#include "ionlock/rng.hpp"
#include "fft.hpp"
#include "json_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace ionlock {

using nlohmann::json;

double Bump::operator()(double f) const
{
    double x = (f - center_hz) / (0.5 * width_hz);
    return height / (1.0 + x * x);
}

double DriftProcess::temp_error_k(double t) const
{
    double T = temp_offset_k;
    if (temp_sine_amplitude_k != 0)
        T += temp_sine_amplitude_k * std::sin(2 * std::numbers::pi * t / temp_sine_period_s);
    if (temp_step_k != 0 && t >= temp_step_time_s)
        T += temp_step_k;
    if (!temp_series_k.empty()) {
        double x = t / temp_series_dt_s;
        if (x <= 0) {
            T += temp_series_k.front();
        } else {
            auto i = static_cast<std::size_t>(x);
            if (i + 1 >= temp_series_k.size()) {
                T += temp_series_k.back();
            } else {
                double w = x - static_cast<double>(i);
                T += (1 - w) * temp_series_k[i] + w * temp_series_k[i + 1];
            }
        }
    }
    return T;
}

void DriftProcess::validate() const
{
    if (!(settle_tau_s > 0))
        throw ConfigError("drift: settle_tau_s must be > 0");
    if (!(temp_sensitivity_hz_per_k >= 0))
        throw ConfigError("drift: temp_sensitivity_hz_per_k must be >= 0");
    if (residual_random_walk_hz2_per_s < 0)
        throw ConfigError("drift: residual_random_walk_hz2_per_s must be >= 0");
    if (!temp_series_k.empty() && !(temp_series_dt_s > 0))
        throw ConfigError("drift: temp_series_dt_s must be > 0 when a series is given");
    if (temp_sine_amplitude_k != 0 && !(temp_sine_period_s > 0))
        throw ConfigError("drift: temp_sine_period_s must be > 0");
}

namespace {

double power_law(const std::array<double, 5>& h, double f)
{
    double s = h[2];
    if (h[0] != 0)
        s += h[0] / (f * f);
    if (h[1] != 0)
        s += h[1] / f;
    if (h[3] != 0)
        s += h[3] * f;
    if (h[4] != 0)
        s += h[4] * f * f;
    return s;
}

} // namespace

double LockStage::suppression(double f) const
{
    // ideal loop: full suppression below the bandwidth, none above
    if (std::isinf(low_freq_gain))
        return f < bandwidth_hz ? 0.0 : 1.0;
    double g = low_freq_gain;
    double x = f * g / bandwidth_hz;
    return (1 + x * x) / ((1 + g) * (1 + g) + x * x);
}

double LockStage::transmission(double f) const
{
    if (std::isinf(low_freq_gain))
        return f < bandwidth_hz ? 1.0 : 0.0;
    double g = low_freq_gain;
    double x = f * g / bandwidth_hz;
    return g * g / ((1 + g) * (1 + g) + x * x);
}

double LockStage::reference_psd(double f) const
{
    double s = power_law(ref_h, f) + ref_floor;
    for (const auto& b : ref_bumps)
        s += b(f);
    return s;
}

bool NoiseModel::is_zero() const
{
    for (double v : h)
        if (v != 0)
            return false;
    for (const auto& b : bumps)
        if (b.height != 0)
            return false;
    if (floor_hz2_per_hz != 0)
        return false;
    for (const auto& l : locks) {
        if (l.bump.height != 0 || l.ref_floor != 0)
            return false;
        for (double v : l.ref_h)
            if (v != 0)
                return false;
        for (const auto& b : l.ref_bumps)
            if (b.height != 0)
                return false;
    }
    return true;
}

double NoiseModel::highest_feature_hz() const
{
    double m = 0;
    for (const auto& b : bumps)
        m = std::max(m, b.center_hz);
    for (const auto& l : locks) {
        if (l.bump.height > 0)
            m = std::max(m, l.bump.center_hz);
        for (const auto& b : l.ref_bumps)
            m = std::max(m, b.center_hz);
    }
    return m;
}

void NoiseModel::validate() const
{
    auto check_bump = [](const Bump& b, const char* where) {
        if (!(b.center_hz > 0) || !(b.width_hz > 0))
            throw ConfigError(std::string(where) + ": bump centre and width must be > 0");
        if (!(b.height >= 0))
            throw ConfigError(std::string(where) + ": bump height must be >= 0");
    };
    for (double v : h)
        if (!(v >= 0) || !std::isfinite(v))
            throw ConfigError("noise model: power-law coefficients must be finite and >= 0");
    for (const auto& b : bumps)
        check_bump(b, "noise model");
    if (!(floor_hz2_per_hz >= 0))
        throw ConfigError("noise model: floor must be >= 0");
    for (const auto& l : locks) {
        if (!(l.bandwidth_hz > 0))
            throw ConfigError("lock: bandwidth must be > 0");
        if (!(l.low_freq_gain > 0))
            throw ConfigError("lock: gain must be > 0");
        for (double v : l.ref_h)
            if (!(v >= 0))
                throw ConfigError("lock: reference coefficients must be >= 0");
        for (const auto& b : l.ref_bumps)
            check_bump(b, "lock reference");
        if (l.bump.height > 0)
            check_bump(l.bump, "servo");
    }
    if (drift)
        drift->validate();
}

double evaluate_psd(const NoiseModel& model, double f)
{
    if (!(f > 0))
        throw DomainError("evaluate_psd: frequency must be > 0");
    double s = power_law(model.h, f) + model.floor_hz2_per_hz;
    for (const auto& b : model.bumps)
        s += b(f);
    for (const auto& l : model.locks) {
        s = s * l.suppression(f) + l.reference_psd(f) * l.transmission(f);
        if (l.bump.height > 0)
            s += l.bump(f);
    }
    return s;
}

std::vector<double> evaluate_psd(const NoiseModel& model, const std::vector<double>& f)
{
    std::vector<double> out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i)
        out[i] = evaluate_psd(model, f[i]);
    return out;
}

std::string preset_name(StagePreset p)
{
    switch (p) {
    case StagePreset::PumpFree: return "pump_free";
    case StagePreset::SbsFree: return "sbs_free";
    case StagePreset::SbsCoilLocked: return "sbs_coil";
    case StagePreset::PumpCoilLocked: return "pump_coil";
    }
    return "?";
}

StagePreset parse_preset(std::string_view name)
{
    if (name == "pump_free" || name == "PumpFree")
        return StagePreset::PumpFree;
    if (name == "sbs_free" || name == "SbsFree")
        return StagePreset::SbsFree;
    if (name == "sbs_coil" || name == "SbsCoilLocked")
        return StagePreset::SbsCoilLocked;
    if (name == "pump_coil" || name == "coil" || name == "PumpCoilLocked")
        return StagePreset::PumpCoilLocked;
    throw ConfigError("unknown chain preset '" + std::string(name) + "'");
}

void FrequencyTrace::validate() const
{
    if (samples.size() < 2)
        throw ConfigError("trace: need at least 2 samples");
    if (!(rate_hz > 0))
        throw ConfigError("trace: rate must be > 0");
    for (double v : samples)
        if (!std::isfinite(v))
            throw NumericalError("trace: non-finite sample");
}

std::vector<double> shaped_noise_bins(const std::vector<double>& psd_bins, std::size_t N, std::size_t n_out,
                                      double rate, std::uint64_t seed, std::string_view stream)
{
    if (N < 2 || (N & (N - 1)) != 0 || psd_bins.size() != N / 2 + 1 || n_out > N)
        throw DomainError("shaped_noise_bins: bad transform size");
    Rng rng = make_stream(seed, stream);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::complex<double>> X(N / 2 + 1);
    double scale = static_cast<double>(N) * rate / 4.0;
    bool any = false;
    for (std::size_t k = 1; k < N / 2; ++k) {
        double g1 = gauss(rng);
        double g2 = gauss(rng);
        double s = psd_bins[k];
        if (s > 0) {
            double a = std::sqrt(s * scale);
            X[k] = {a * g1, a * g2};
            any = true;
        }
    }
    if (!any)
        return std::vector<double>(n_out, 0.0);
    auto x = detail::irfft(X, N);
    x.resize(n_out);
    return x;
}

namespace {

constexpr std::size_t kBlock = std::size_t{1} << 22;

std::vector<double> shaped_block(const PsdFunction& psd, std::size_t n, double rate,
                                 std::uint64_t seed, std::string_view stream)
{
    std::size_t N = std::max<std::size_t>(detail::next_pow2(n), 2);
    std::vector<double> bins(N / 2 + 1, 0.0);
    for (std::size_t k = 1; k < N / 2; ++k)
        bins[k] = psd(static_cast<double>(k) * rate / static_cast<double>(N));
    return shaped_noise_bins(bins, N, n, rate, seed, stream);
}

} // namespace

std::vector<double> shaped_noise(const PsdFunction& psd, std::size_t n, double rate,
                                 std::uint64_t seed, std::string_view stream)
{
    if (n == 0)
        return {};
    if (n <= kBlock)
        return shaped_block(psd, n, rate, seed, stream);

    // high band: crossfaded blocks; low band: decimated trace, interpolated
    const double f_c = 32.0 * rate / static_cast<double>(kBlock);
    PsdFunction high = [&](double f) { return f > f_c ? psd(f) : 0.0; };
    PsdFunction low = [&](double f) { return f <= f_c ? psd(f) : 0.0; };

    const std::size_t overlap = kBlock / 8;
    const std::size_t hop = kBlock - overlap;
    std::vector<double> out(n, 0.0);
    std::string base(stream);
    std::size_t nb = (n - overlap + hop - 1) / hop;
    for (std::size_t b = 0; b < nb; ++b) {
        auto blk = shaped_block(high, kBlock, rate, seed, base + ":blk" + std::to_string(b));
        std::size_t start = b * hop;
        for (std::size_t j = 0; j < kBlock && start + j < n; ++j) {
            double w = 1.0;
            if (b > 0 && j < overlap)
                w = std::sin((static_cast<double>(j) + 0.5) / overlap * std::numbers::pi / 2);
            else if (b + 1 < nb && j >= hop)
                w = std::cos((static_cast<double>(j - hop) + 0.5) / overlap * std::numbers::pi / 2);
            out[start + j] += w * blk[j];
        }
    }

    const double r_lo = 8.0 * f_c;
    auto n_lo = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * r_lo / rate)) + 2;
    auto lo = shaped_noise(low, n_lo, r_lo, seed, base + ":lo");
    for (std::size_t i = 0; i < n; ++i) {
        double x = static_cast<double>(i) * r_lo / rate;
        auto k = static_cast<std::size_t>(x);
        double w = x - static_cast<double>(k);
        out[i] += (1 - w) * lo[k] + w * lo[k + 1];
    }
    return out;
}

FrequencyTrace synthesize_trace(const NoiseModel& model, double duration_s, double rate_hz,
                                std::uint64_t seed)
{
    model.validate();
    if (!(rate_hz > 0) || !(duration_s > 0))
        throw ConfigError("synthesize_trace: duration and rate must be > 0");
    auto n = static_cast<std::size_t>(std::llround(duration_s * rate_hz));
    if (n < 64)
        throw ConfigError("synthesize_trace: duration*rate must give at least 64 samples");
    double top = model.highest_feature_hz();
    if (top > 0 && rate_hz / 2 <= top) {
        std::ostringstream os;
        os << "synthesize_trace: Nyquist " << rate_hz / 2 << " Hz is not above the highest bump at "
           << top << " Hz";
        throw ConfigError(os.str());
    }
    FrequencyTrace tr;
    tr.rate_hz = rate_hz;
    tr.seed = seed;
    tr.model_id = model.id;
    tr.samples = shaped_noise([&](double f) { return evaluate_psd(model, f); }, n, rate_hz, seed,
                              stream_name("noise_synthesis", "trace", 0));
    if (model.drift) {
        double dt = std::min(model.drift->settle_tau_s / 100.0, duration_s / 64.0);
        auto d = coil_drift(*model.drift, duration_s, dt, seed);
        for (std::size_t i = 0; i < n; ++i) {
            double x = static_cast<double>(i) / rate_hz / dt;
            auto k = std::min(static_cast<std::size_t>(x), d.samples.size() - 2);
            double w = x - static_cast<double>(k);
            tr.samples[i] += (1 - w) * d.samples[k] + w * d.samples[k + 1];
        }
    }
    return tr;
}

double PsdEstimate::integral() const
{
    double s = 0;
    for (double v : psd)
        s += v;
    return s * df_hz;
}

double PsdEstimate::band_mean(double f_lo, double f_hi) const
{
    double s = 0;
    std::size_t c = 0;
    for (std::size_t i = 0; i < freq_hz.size(); ++i) {
        if (freq_hz[i] >= f_lo && freq_hz[i] < f_hi) {
            s += psd[i];
            ++c;
        }
    }
    if (c == 0)
        throw DomainError("band_mean: no bins in band");
    return s / static_cast<double>(c);
}

PsdEstimate estimate_psd(const FrequencyTrace& trace, std::size_t L)
{
    if (L < 8 || (L & (L - 1)) != 0)
        throw DomainError("estimate_psd: segment length must be a power of two >= 8");
    const auto& x = trace.samples;
    if (x.size() < L)
        throw InsufficientDataError("estimate_psd: trace shorter than one segment");

    std::vector<double> w(L);
    double wss = 0;
    for (std::size_t j = 0; j < L; ++j) {
        w[j] = 0.5 * (1 - std::cos(2 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(L)));
        wss += w[j] * w[j];
    }
    // least-squares line on j = 0..L-1
    const double jm = 0.5 * static_cast<double>(L - 1);
    double sjj = 0;
    for (std::size_t j = 0; j < L; ++j)
        sjj += (static_cast<double>(j) - jm) * (static_cast<double>(j) - jm);

    PsdEstimate est;
    est.df_hz = trace.rate_hz / static_cast<double>(L);
    est.freq_hz.resize(L / 2 + 1);
    est.psd.assign(L / 2 + 1, 0.0);
    for (std::size_t k = 0; k <= L / 2; ++k)
        est.freq_hz[k] = static_cast<double>(k) * est.df_hz;

    std::vector<double> seg(L);
    const std::size_t hop = L / 2;
    for (std::size_t start = 0; start + L <= x.size(); start += hop) {
        double mean = 0, sxj = 0;
        for (std::size_t j = 0; j < L; ++j)
            mean += x[start + j];
        mean /= static_cast<double>(L);
        for (std::size_t j = 0; j < L; ++j)
            sxj += (x[start + j] - mean) * (static_cast<double>(j) - jm);
        double slope = sxj / sjj;
        for (std::size_t j = 0; j < L; ++j)
            seg[j] = (x[start + j] - mean - slope * (static_cast<double>(j) - jm)) * w[j];
        auto X = detail::rfft(seg);
        for (std::size_t k = 0; k <= L / 2; ++k) {
            double p = std::norm(X[k]) / (trace.rate_hz * wss);
            if (k != 0 && k != L / 2)
                p *= 2;
            est.psd[k] += p;
        }
        ++est.segments;
    }
    for (auto& v : est.psd)
        v /= static_cast<double>(est.segments);
    return est;
}

// ---- persistence ----

namespace {

json h_to_json(const std::array<double, 5>& h)
{
    json j = json::object();
    for (int a = -2; a <= 2; ++a)
        j[std::to_string(a)] = h[static_cast<std::size_t>(a + 2)];
    return j;
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where)
{
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : keys)
            if (it.key() == k)
                ok = true;
        if (!ok)
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

std::array<double, 5> h_from_json(const json& j, const std::string& where)
{
    if (!j.is_object())
        throw ConfigError(where + ": expected an object keyed by exponent");
    std::array<double, 5> h{};
    for (auto it = j.begin(); it != j.end(); ++it) {
        int a = 0;
        try {
            a = std::stoi(it.key());
        } catch (...) {
            throw ConfigError(where + ": bad exponent key '" + it.key() + "'");
        }
        if (a < -2 || a > 2 || std::to_string(a) != it.key())
            throw ConfigError(where + ": exponent '" + it.key() + "' outside -2..2");
        h[static_cast<std::size_t>(a + 2)] = it.value().get<double>();
    }
    return h;
}

json bump_to_json(const Bump& b)
{
    return json{{"center_hz", b.center_hz}, {"width_hz", b.width_hz}, {"height", b.height}};
}

Bump bump_from_json(const json& j, const std::string& where)
{
    reject_unknown(j, {"center_hz", "width_hz", "height"}, where);
    Bump b;
    b.center_hz = j.at("center_hz").get<double>();
    b.width_hz = j.at("width_hz").get<double>();
    b.height = j.at("height").get<double>();
    return b;
}

} // namespace

json drift_to_json(const DriftProcess& d)
{
    return json{{"temp_sensitivity_hz_per_k", d.temp_sensitivity_hz_per_k},
                {"settle_tau_s", d.settle_tau_s},
                {"temp_offset_k", d.temp_offset_k},
                {"temp_sine_amplitude_k", d.temp_sine_amplitude_k},
                {"temp_sine_period_s", d.temp_sine_period_s},
                {"temp_step_k", d.temp_step_k},
                {"temp_step_time_s", d.temp_step_time_s},
                {"temp_series_k", d.temp_series_k},
                {"temp_series_dt_s", d.temp_series_dt_s},
                {"residual_random_walk_hz2_per_s", d.residual_random_walk_hz2_per_s}};
}

DriftProcess drift_from_json(const json& j, const std::string& where)
{
    reject_unknown(j,
                   {"temp_sensitivity_hz_per_k", "settle_tau_s", "temp_offset_k", "temp_sine_amplitude_k",
                    "temp_sine_period_s", "temp_step_k", "temp_step_time_s", "temp_series_k",
                    "temp_series_dt_s", "residual_random_walk_hz2_per_s"},
                   where);
    DriftProcess d;
    d.temp_sensitivity_hz_per_k = j.value("temp_sensitivity_hz_per_k", d.temp_sensitivity_hz_per_k);
    d.settle_tau_s = j.value("settle_tau_s", d.settle_tau_s);
    d.temp_offset_k = j.value("temp_offset_k", d.temp_offset_k);
    d.temp_sine_amplitude_k = j.value("temp_sine_amplitude_k", d.temp_sine_amplitude_k);
    d.temp_sine_period_s = j.value("temp_sine_period_s", d.temp_sine_period_s);
    d.temp_step_k = j.value("temp_step_k", d.temp_step_k);
    d.temp_step_time_s = j.value("temp_step_time_s", d.temp_step_time_s);
    d.temp_series_k = j.value("temp_series_k", d.temp_series_k);
    d.temp_series_dt_s = j.value("temp_series_dt_s", d.temp_series_dt_s);
    d.residual_random_walk_hz2_per_s = j.value("residual_random_walk_hz2_per_s", d.residual_random_walk_hz2_per_s);
    return d;
}

json model_to_json_value(const NoiseModel& m)
{
    json j;
    j["id"] = m.id;
    j["h"] = h_to_json(m.h);
    j["bumps"] = json::array();
    for (const auto& b : m.bumps)
        j["bumps"].push_back(bump_to_json(b));
    j["floor_hz2_per_hz"] = m.floor_hz2_per_hz;
    j["locks"] = json::array();
    for (const auto& l : m.locks) {
        json lj;
        lj["target"] = l.target;
        lj["bandwidth_hz"] = l.bandwidth_hz;
        if (std::isinf(l.low_freq_gain))
            lj["low_freq_gain_db"] = "inf";
        else
            lj["low_freq_gain_db"] = 20.0 * std::log10(l.low_freq_gain);
        lj["ref_h"] = h_to_json(l.ref_h);
        lj["ref_bumps"] = json::array();
        for (const auto& b : l.ref_bumps)
            lj["ref_bumps"].push_back(bump_to_json(b));
        lj["ref_floor"] = l.ref_floor;
        lj["bump"] = bump_to_json(l.bump);
        j["locks"].push_back(lj);
    }
    if (m.drift)
        j["drift"] = drift_to_json(*m.drift);
    return j;
}

NoiseModel model_from_json_value(const json& j, const std::string& where)
{
    if (!j.is_object())
        throw ConfigError(where + ": noise model must be an object");
    reject_unknown(j, {"id", "h", "bumps", "floor_hz2_per_hz", "locks", "drift"}, where);
    NoiseModel m;
    m.id = j.value("id", std::string{});
    if (j.contains("h"))
        m.h = h_from_json(j.at("h"), where + ".h");
    if (j.contains("bumps"))
        for (const auto& b : j.at("bumps"))
            m.bumps.push_back(bump_from_json(b, where + ".bumps"));
    m.floor_hz2_per_hz = j.value("floor_hz2_per_hz", 0.0);
    if (j.contains("locks")) {
        for (const auto& lj : j.at("locks")) {
            std::string lw = where + ".locks";
            reject_unknown(lj, {"target", "bandwidth_hz", "low_freq_gain_db", "ref_h", "ref_bumps", "ref_floor", "bump"}, lw);
            LockStage l;
            l.target = lj.value("target", std::string{});
            l.bandwidth_hz = lj.at("bandwidth_hz").get<double>();
            const auto& g = lj.at("low_freq_gain_db");
            if (g.is_string()) {
                if (g.get<std::string>() != "inf")
                    throw ConfigError(lw + ": low_freq_gain_db must be a number or \"inf\"");
                l.low_freq_gain = std::numeric_limits<double>::infinity();
            } else {
                l.low_freq_gain = std::pow(10.0, g.get<double>() / 20.0);
            }
            if (lj.contains("ref_h"))
                l.ref_h = h_from_json(lj.at("ref_h"), lw + ".ref_h");
            if (lj.contains("ref_bumps"))
                for (const auto& b : lj.at("ref_bumps"))
                    l.ref_bumps.push_back(bump_from_json(b, lw + ".ref_bumps"));
            l.ref_floor = lj.value("ref_floor", 0.0);
            if (lj.contains("bump"))
                l.bump = bump_from_json(lj.at("bump"), lw + ".bump");
            m.locks.push_back(l);
        }
    }
    if (j.contains("drift"))
        m.drift = drift_from_json(j.at("drift"), where + ".drift");
    m.validate();
    return m;
}

std::string model_to_json(const NoiseModel& model)
{
    return model_to_json_value(model).dump(2) + "\n";
}

NoiseModel model_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("noise model: ") + e.what());
    }
    try {
        return model_from_json_value(j, "model");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("noise model: ") + e.what());
    }
}

void write_trace_csv(const std::string& path, const FrequencyTrace& tr)
{
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot write " + path);
    os << std::setprecision(17);
    os << "# rate_hz=" << tr.rate_hz << ",seed=" << tr.seed << ",model_id=" << tr.model_id
       << ",t0_s=" << tr.t0_s << "\n";
    os << "t_s,df_hz\n";
    for (std::size_t i = 0; i < tr.samples.size(); ++i)
        os << tr.t0_s + static_cast<double>(i) / tr.rate_hz << "," << tr.samples[i] << "\n";
    if (!os)
        throw std::runtime_error("write failed: " + path);
}

FrequencyTrace read_trace_csv(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot open " + path);
    FrequencyTrace tr;
    std::string line;
    if (!std::getline(is, line) || line.rfind("# ", 0) != 0)
        throw ConfigError(path + ":1: missing '# rate_hz=...' header");
    std::stringstream hs(line.substr(2));
    std::string kv;
    bool have_rate = false;
    while (std::getline(hs, kv, ',')) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":1: malformed header field '" + kv + "'");
        std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "rate_hz") {
            tr.rate_hz = std::stod(v);
            have_rate = true;
        } else if (k == "seed") {
            tr.seed = std::stoull(v);
        } else if (k == "model_id") {
            tr.model_id = v;
        } else if (k == "t0_s") {
            tr.t0_s = std::stod(v);
        } else {
            throw ConfigError(path + ":1: unknown header field '" + k + "'");
        }
    }
    if (!have_rate)
        throw ConfigError(path + ":1: header lacks rate_hz");
    std::getline(is, line); // column names
    std::size_t lineno = 2;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        auto c = line.find(',');
        if (c == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected t_s,df_hz");
        tr.samples.push_back(std::stod(line.substr(c + 1)));
    }
    return tr;
}

namespace {
constexpr char kMagic[12] = {'I', 'O', 'N', 'L', 'O', 'C', 'K', '-', 'T', 'R', 'C', '\0'};
constexpr std::uint32_t kTraceVersion = 1;
} // namespace

void write_trace_binary(const std::string& path, const FrequencyTrace& tr)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write " + path);
    os.write(kMagic, sizeof kMagic);
    os.write(reinterpret_cast<const char*>(&kTraceVersion), 4);
    os.write(reinterpret_cast<const char*>(&tr.rate_hz), 8);
    os.write(reinterpret_cast<const char*>(&tr.t0_s), 8);
    os.write(reinterpret_cast<const char*>(&tr.seed), 8);
    auto idn = static_cast<std::uint32_t>(tr.model_id.size());
    os.write(reinterpret_cast<const char*>(&idn), 4);
    os.write(tr.model_id.data(), idn);
    auto n = static_cast<std::uint64_t>(tr.samples.size());
    os.write(reinterpret_cast<const char*>(&n), 8);
    os.write(reinterpret_cast<const char*>(tr.samples.data()), static_cast<std::streamsize>(n * 8));
    if (!os)
        throw std::runtime_error("write failed: " + path);
}

FrequencyTrace read_trace_binary(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw ConfigError("cannot open " + path);
    char magic[12];
    std::uint32_t ver = 0;
    is.read(magic, 12);
    is.read(reinterpret_cast<char*>(&ver), 4);
    if (!is || std::memcmp(magic, kMagic, 12) != 0)
        throw ConfigError(path + ": not a trace file");
    if (ver != kTraceVersion)
        throw ConfigError(path + ": unsupported trace version " + std::to_string(ver));
    FrequencyTrace tr;
    std::uint32_t idn = 0;
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&tr.rate_hz), 8);
    is.read(reinterpret_cast<char*>(&tr.t0_s), 8);
    is.read(reinterpret_cast<char*>(&tr.seed), 8);
    is.read(reinterpret_cast<char*>(&idn), 4);
    tr.model_id.resize(idn);
    is.read(tr.model_id.data(), idn);
    is.read(reinterpret_cast<char*>(&n), 8);
    tr.samples.resize(n);
    is.read(reinterpret_cast<char*>(tr.samples.data()), static_cast<std::streamsize>(n * 8));
    if (!is)
        throw ConfigError(path + ": truncated trace file");
    return tr;
}

} // namespace ionlock
