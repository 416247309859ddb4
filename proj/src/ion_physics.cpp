#include "ionlock/ion_physics.hpp"

#include "ionlock/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ionlock {

int s_index(int two_ms)
{
    if (two_ms == -1)
        return 0;
    if (two_ms == 1)
        return 1;
    throw ConfigError("S sublevel must have 2m = +-1");
}

int d_index(int two_md)
{
    if (two_md < -5 || two_md > 5 || (two_md % 2) == 0)
        throw ConfigError("D sublevel must have 2m in {-5,-3,-1,1,3,5}");
    return 2 + (two_md + 5) / 2;
}

bool quadrupole_allowed(int two_ms, int two_md)
{
    return std::abs(two_md - two_ms) <= 4;
}

std::string Transition::label() const
{
    auto m = [](int two_m) { return (two_m > 0 ? "+" : "-") + std::to_string(std::abs(two_m)) + "/2"; };
    std::string s = "S(" + m(two_ms) + ")->D(" + m(two_md) + ")";
    if (sideband < 0)
        s += " red";
    if (sideband > 0)
        s += " blue";
    return s;
}

const Transition& TransitionTable::find(int two_ms, int two_md, int sideband) const
{
    for (const auto& e : entries)
        if (e.two_ms == two_ms && e.two_md == two_md && e.sideband == sideband)
            return e;
    throw SelectionRuleError("no transition S(2m=" + std::to_string(two_ms) + ") -> D(2m=" + std::to_string(two_md)
                             + ") in table (|dm| <= 2 required)");
}

namespace {

double raw_shift(double b, int two_ms, int two_md, const IonConstants& c)
{
    return c.mu_b_hz_per_gauss * b * (c.g_d * 0.5 * two_md - c.g_s * 0.5 * two_ms);
}

} // namespace

double zeeman_detuning(double b, int two_ms, int two_md, const IonConstants& c)
{
    if (!quadrupole_allowed(two_ms, two_md))
        throw SelectionRuleError("forbidden quadrupole transition");
    s_index(two_ms);
    d_index(two_md);
    return raw_shift(b, two_ms, two_md, c) - raw_shift(b, -1, -5, c);
}

TransitionTable zeeman_table(double b, const IonConstants& c)
{
    if (!(b >= 0))
        throw ConfigError("zeeman_table: B must be >= 0");
    TransitionTable t;
    t.b_field_gauss = b;
    t.sideband_offset_hz = c.sideband_hz;
    for (int ms : {-1, 1}) {
        for (int md = -5; md <= 5; md += 2) {
            if (!quadrupole_allowed(ms, md))
                continue;
            double d = zeeman_detuning(b, ms, md, c);
            t.entries.push_back(Transition{ms, md, 0, d, 1.0});
            t.entries.push_back(Transition{ms, md, -1, d - c.sideband_hz, c.sideband_weight});
            t.entries.push_back(Transition{ms, md, +1, d + c.sideband_hz, c.sideband_weight});
        }
    }
    std::stable_sort(t.entries.begin(), t.entries.end(),
                     [](const Transition& a, const Transition& b) { return a.detuning_hz < b.detuning_hz; });
    return t;
}

IonState IonState::ground(int two_ms)
{
    IonState s;
    s.amp[static_cast<std::size_t>(s_index(two_ms))] = 1.0;
    return s;
}

IonState IonState::superposition_s(double p_minus)
{
    IonState s;
    s.amp[0] = std::sqrt(p_minus);
    s.amp[1] = std::sqrt(1 - p_minus);
    return s;
}

double IonState::p_bright() const
{
    return population(0) + population(1);
}

double IonState::p_dark() const
{
    double p = 0;
    for (int i = 2; i < kLevels; ++i)
        p += population(i);
    return p;
}

double IonState::norm() const
{
    return p_bright() + p_dark();
}

namespace {

void rotate(std::complex<double>& a, std::complex<double>& b, double omega, double delta, double phase, double dt)
{
    double W = std::sqrt(omega * omega + delta * delta);
    if (W == 0 || dt == 0)
        return;
    double c = std::cos(0.5 * W * dt);
    double s = std::sin(0.5 * W * dt);
    const std::complex<double> I(0, 1);
    std::complex<double> off = -I * (omega / W) * s;
    std::complex<double> ep = std::polar(1.0, phase);
    std::complex<double> a2 = (c + I * (delta / W) * s) * a + off * std::conj(ep) * b;
    std::complex<double> b2 = off * ep * a + (c - I * (delta / W) * s) * b;
    a = a2;
    b = b2;
}

} // namespace

IonState evolve_pulse(const IonState& state, const Transition& tr, double rabi_hz, double duration_s,
                      double phase_rad, const FrequencyTrace* trace, double static_detuning_hz, double start_s)
{
    if (duration_s < 0)
        throw ConfigError("evolve_pulse: duration must be >= 0");
    IonState out = state;
    if (duration_s == 0)
        return out;
    auto& a = out.amp[static_cast<std::size_t>(s_index(tr.two_ms))];
    auto& b = out.amp[static_cast<std::size_t>(d_index(tr.two_md))];
    const double omega = 2 * std::numbers::pi * rabi_hz * tr.rabi_weight;
    const double two_pi = 2 * std::numbers::pi;

    if (trace == nullptr || trace->samples.empty()) {
        rotate(a, b, omega, two_pi * static_detuning_hz, phase_rad, duration_s);
        return out;
    }
    const double end = start_s + duration_s;
    const double eps = 1e-9 / trace->rate_hz;
    if (start_s < trace->t0_s - eps || end > trace->end_s() + eps)
        throw CoverageError("evolve_pulse: laser trace does not cover the pulse window");
    const double rate = trace->rate_hz;
    const auto n = static_cast<long long>(trace->samples.size());
    long long k = static_cast<long long>(std::floor((start_s - trace->t0_s) * rate));
    k = std::clamp(k, 0LL, n - 1);
    double t = start_s;
    while (t < end) {
        double seg_end = std::min(end, trace->t0_s + static_cast<double>(k + 1) / rate);
        if (k >= n - 1)
            seg_end = end;
        double dt = seg_end - t;
        if (dt > 0) {
            double delta = two_pi * (static_detuning_hz + trace->samples[static_cast<std::size_t>(k)]);
            rotate(a, b, omega, delta, phase_rad, dt);
        }
        t = seg_end;
        ++k;
    }
    return out;
}

double rabi_probability(double rabi_hz, double detuning_hz, double t)
{
    double om = 2 * std::numbers::pi * rabi_hz;
    double de = 2 * std::numbers::pi * detuning_hz;
    double W2 = om * om + de * de;
    if (W2 == 0)
        return 0;
    double s = std::sin(0.5 * std::sqrt(W2) * t);
    return om * om / W2 * s * s;
}

IonState optical_pump(IonState state, const PumpConfig& cfg, const TransitionTable& table, PulseContext& ctx,
                      Rng& rng)
{
    if (cfg.n_cycles < 1)
        throw ConfigError("optical_pump: n_cycles must be >= 1");
    if (cfg.branching_to_s_minus < 0 || cfg.branching_to_s_minus > 1)
        throw ConfigError("optical_pump: branching must lie in [0, 1]");
    const Transition& tr = table.find(1, -3);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int c = 0; c < cfg.n_cycles; ++c) {
        state = evolve_pulse(state, tr, cfg.rabi_hz * ctx.rabi_scale, cfg.pulse674_s, 0.0, ctx.trace,
                             ctx.laser_offset_hz, ctx.t_s);
        ctx.t_s += cfg.pulse674_s;
        double pd = state.p_dark();
        double u = uni(rng);
        double v = uni(rng);
        if (u < pd) {
            state = IonState::ground(v < cfg.branching_to_s_minus ? -1 : 1);
        } else if (pd > 0) {
            for (int i = 2; i < kLevels; ++i)
                state.amp[static_cast<std::size_t>(i)] = 0;
            double nb = std::sqrt(state.p_bright());
            for (int i = 0; i < 2; ++i)
                state.amp[static_cast<std::size_t>(i)] /= nb;
        }
        ctx.t_s += cfg.pulse1033_s;
    }
    return state;
}

std::vector<ShelvePulse> default_shelving(int n, double duration_s)
{
    static const int order[] = {-5, -3, -1, 1, 3};
    if (n < 1 || n > 5)
        throw ConfigError("shelving: between 1 and 5 pulses are available from S(-1/2)");
    std::vector<ShelvePulse> v;
    for (int i = 0; i < n; ++i)
        v.push_back(ShelvePulse{order[i], duration_s, 1.0 / (2 * duration_s)});
    return v;
}

IonState shelve_multi(IonState state, const std::vector<ShelvePulse>& pulses, const TransitionTable& table,
                      PulseContext& ctx)
{
    if (pulses.empty())
        throw ConfigError("shelve_multi: pulse list is empty");
    for (const auto& p : pulses)
        if (!quadrupole_allowed(-1, p.two_md))
            throw SelectionRuleError("shelve_multi: S(-1/2) -> D(2m=" + std::to_string(p.two_md)
                                     + ") violates |dm| <= 2");
    for (const auto& p : pulses) {
        const Transition& tr = table.find(-1, p.two_md);
        state = evolve_pulse(state, tr, p.rabi_hz * ctx.rabi_scale, p.duration_s, 0.0, ctx.trace,
                             ctx.laser_offset_hz, ctx.t_s);
        ctx.t_s += p.duration_s;
    }
    return state;
}

void DetectionConfig::validate() const
{
    if (!(bright_rate_cps > dark_rate_cps) || dark_rate_cps < 0)
        throw ConfigError("detection: need bright_rate > dark_rate >= 0");
    if (!(window_s > 0))
        throw ConfigError("detection: window must be > 0");
}

double poisson_tail_ge(double mean, int thr)
{
    if (thr <= 0)
        return 1.0;
    if (mean <= 0)
        return 0.0;
    auto term = [&](int k) { return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0)); };
    if (thr > mean) {
        double s = 0;
        int kmax = thr + 200 + static_cast<int>(20 * std::sqrt(mean));
        for (int k = thr; k < kmax; ++k)
            s += term(k);
        return std::min(s, 1.0);
    }
    double s = 0;
    for (int k = 0; k < thr; ++k)
        s += term(k);
    return std::max(0.0, 1.0 - s);
}

double misclassification(double bright_mean, double dark_mean, int thr)
{
    return (1.0 - poisson_tail_ge(bright_mean, thr)) + poisson_tail_ge(dark_mean, thr);
}

int optimal_threshold(double bright_mean, double dark_mean)
{
    int best = 1;
    double best_err = 2;
    int top = static_cast<int>(std::ceil(bright_mean + 10 * std::sqrt(bright_mean))) + 2;
    for (int thr = 1; thr <= top; ++thr) {
        double e = misclassification(bright_mean, dark_mean, thr);
        if (e < best_err) {
            best_err = e;
            best = thr;
        }
    }
    return best;
}

int DetectionConfig::resolved_threshold() const
{
    if (threshold_counts >= 0)
        return threshold_counts;
    thread_local double last_b = -1, last_d = -1;
    thread_local int last_thr = 1;
    double b = bright_rate_cps * window_s, d = dark_rate_cps * window_s;
    if (b != last_b || d != last_d) {
        last_thr = optimal_threshold(b, d);
        last_b = b;
        last_d = d;
    }
    return last_thr;
}

namespace {
thread_local std::uint64_t g_detect_calls = 0;
}

std::uint64_t detection_count()
{
    return g_detect_calls;
}

ShotRecord detect(const IonState& state, const DetectionConfig& cfg, Rng& rng)
{
    cfg.validate();
    ++g_detect_calls;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    ShotRecord r;
    r.true_bright = uni(rng) < state.p_bright() / state.norm();
    double mean = (r.true_bright ? cfg.bright_rate_cps : cfg.dark_rate_cps) * cfg.window_s;
    if (mean > 0) {
        std::poisson_distribution<int> pois(mean);
        r.counts = pois(rng);
    }
    r.bright = r.counts >= cfg.resolved_threshold();
    return r;
}

} // namespace ionlock
