#include "ionlock/experiments.hpp"

#include "ionlock/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ionlock {

namespace {

class ClockUnlockError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

std::string key(std::initializer_list<std::size_t> parts)
{
    std::string s;
    for (auto p : parts) {
        if (!s.empty())
            s += '-';
        s += std::to_string(p);
    }
    return s;
}

double binomial_stderr(double p, std::size_t n)
{
    return n > 0 ? std::sqrt(p * (1 - p) / static_cast<double>(n)) : 0.0;
}

double pump_duration(const PumpConfig& p)
{
    return p.n_cycles * (p.pulse674_s + p.pulse1033_s);
}

double horizon_for(std::size_t shots, double shot_s, const InterleaveSchedule& sched)
{
    double h = static_cast<double>(shots) * shot_s;
    if (sched.enabled) {
        double cyc = sched.clock.cycle_duration();
        h += cyc * (sched.warmup_cycles
                    + static_cast<double>(shots) * sched.clock_cycles_per_experiment_shot);
    }
    return h * (1 + 1e-9) + 1e-3;
}

} // namespace

std::string scan_order_name(ScanOrder o)
{
    switch (o) {
    case ScanOrder::Waterfall:
        return "waterfall";
    case ScanOrder::LeftToRight:
        return "left_to_right";
    case ScanOrder::RightToLeft:
        return "right_to_left";
    }
    return "waterfall";
}

ScanOrder parse_scan_order(std::string_view s)
{
    if (s == "waterfall")
        return ScanOrder::Waterfall;
    if (s == "left_to_right")
        return ScanOrder::LeftToRight;
    if (s == "right_to_left")
        return ScanOrder::RightToLeft;
    throw ConfigError("unknown scan order '" + std::string(s) + "'");
}

ScanPlan ScanPlan::uniform(double lo, double hi, int points, int trials, ScanOrder order)
{
    if (points < 1)
        throw ConfigError("scan: need at least one point");
    ScanPlan p;
    p.trials = trials;
    p.order = order;
    for (int i = 0; i < points; ++i)
        p.detunings_hz.push_back(points == 1 ? lo : lo + (hi - lo) * i / (points - 1));
    p.validate();
    return p;
}

void ScanPlan::validate() const
{
    if (detunings_hz.empty())
        throw ConfigError("scan: detunings must be non-empty");
    if (trials < 1)
        throw ConfigError("scan: trials must be >= 1");
    if (shots_per_point_per_trial < 1)
        throw ConfigError("scan: shots_per_point_per_trial must be >= 1");
    for (std::size_t i = 1; i < detunings_hz.size(); ++i)
        if (!(detunings_hz[i] > detunings_hz[i - 1]))
            throw ConfigError("scan: detunings must be strictly increasing");
}

void InterleaveSchedule::validate() const
{
    if (!enabled)
        return;
    if (clock_cycles_per_experiment_shot < 1)
        throw ConfigError("interleave: clock cycles per shot must be >= 1");
    if (warmup_cycles < 0)
        throw ConfigError("interleave: warm-up cycles must be >= 0");
    clock.validate();
}

double ShotSpec::duration(const PumpConfig& pump_cfg, double detect_window_s) const
{
    double d = cool_s + detect_window_s;
    if (pump)
        d += pump_duration(pump_cfg);
    for (const auto& p : pulses)
        d += p.wait_before_s + p.duration_s;
    for (const auto& s : shelving)
        d += s.duration_s;
    return d;
}

ShotRunner::ShotRunner(const EnvConfig& env, std::uint64_t seed, double horizon_s, const InterleaveSchedule& schedule)
    : tl_(env, seed, horizon_s), sched_(schedule), det_start_(detection_count())
{
    sched_.validate();
    if (sched_.enabled) {
        clock_ = ClockServoState::make(sched_.clock, seed ^ 0x636c6f636bULL);
        for (int i = 0; i < sched_.warmup_cycles; ++i)
            run_clock_cycle();
    }
}

void ShotRunner::run_clock_cycle()
{
    clock_cycle(*clock_, sched_.clock, tl_);
    ++tel_.clock_cycles;
    if (clock_->unlocked(sched_.clock.unlock_cycles))
        throw ClockUnlockError("clock unlock at t = " + std::to_string(tl_.now()) + " s after "
                               + std::to_string(clock_->cycles) + " cycles (correction "
                               + std::to_string(clock_->correction_hz) + " Hz, saturated run "
                               + std::to_string(clock_->saturated_run) + ", dark run "
                               + std::to_string(clock_->dark_run) + ")");
}

void ShotRunner::finish()
{
    tel_.detections = detection_count() - det_start_;
}

ShotRecord ShotRunner::shot(const ShotSpec& spec, const std::string& stream)
{
    if (clock_)
        for (int i = 0; i < sched_.clock_cycles_per_experiment_shot; ++i)
            run_clock_cycle();
    const EnvConfig& env = tl_.env();
    const double correction = clock_ ? clock_->correction_hz : 0.0;
    const double t_start = tl_.now();
    double t = t_start + spec.cool_s;

    double coherent = spec.pump ? pump_duration(env.pump) : 0.0;
    for (const auto& p : spec.pulses)
        coherent += p.wait_before_s + p.duration_s;
    for (const auto& s : spec.shelving)
        coherent += s.duration_s;

    FrequencyTrace seg = tl_.segment(t, coherent, stream);
    Rng rng = make_stream(tl_.seed(), stream + ":ion");
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    PulseContext ctx;
    ctx.trace = &seg;
    ctx.t_s = t;
    ctx.laser_offset_hz = correction;
    ctx.rabi_scale = tl_.rabi_scale(stream);

    IonState st = IonState::ground(-1);
    if (spec.pump) {
        st = IonState::ground(uni(rng) < 0.5 ? -1 : 1);
        st = optical_pump(st, env.pump, tl_.table(), ctx, rng);
    }
    for (const auto& p : spec.pulses) {
        if (p.wait_before_s > 0) {
            // free precession: no drive, detuning still acts
            const Transition& tr = tl_.table().find(p.two_ms, p.two_md, p.sideband);
            st = evolve_pulse(st, tr, 0.0, p.wait_before_s, 0.0, ctx.trace, p.detuning_hz + correction, ctx.t_s);
            ctx.t_s += p.wait_before_s;
        }
        const Transition& tr = tl_.table().find(p.two_ms, p.two_md, p.sideband);
        st = evolve_pulse(st, tr, p.rabi_hz * ctx.rabi_scale, p.duration_s, p.phase_rad, ctx.trace,
                          p.detuning_hz + correction, ctx.t_s);
        ctx.t_s += p.duration_s;
    }
    if (!spec.shelving.empty())
        st = shelve_multi(st, spec.shelving, tl_.table(), ctx);

    ShotRecord rec = detect(st, env.detection, rng);
    rec.shot_id = tel_.experiment_shots;
    rec.sequence_tag = stream;
    rec.t_wall = t_start;
    if (!spec.pulses.empty()) {
        rec.detuning_hz = spec.pulses.back().detuning_hz;
        rec.phase_rad = spec.pulses.back().phase_rad;
    }
    ++tel_.experiment_shots;
    tel_.shot_t_s.push_back(t_start);
    tel_.shot_correction_hz.push_back(correction);
    tl_.advance(ctx.t_s + env.detection.window_s - t_start);
    return rec;
}

ExperimentTelemetry run_interleaved(const InterleaveSchedule& schedule, const EnvConfig& env, std::uint64_t seed,
                                    double horizon_s, const std::function<void(ShotRunner&)>& experiment)
{
    schedule.validate();
    std::optional<ShotRunner> runner;
    try {
        runner.emplace(env, seed, horizon_s, schedule);
        experiment(*runner);
        runner->finish();
        return runner->telemetry();
    } catch (const ClockUnlockError& e) {
        ExperimentTelemetry tel;
        if (runner) {
            runner->finish();
            tel = runner->telemetry();
        }
        tel.aborted = true;
        tel.diagnostic = e.what();
        return tel;
    }
}

double SpectroscopyConfig::rabi_hz() const
{
    return pulse_area_rad / (2 * std::numbers::pi * probe_s);
}

void SpectroscopyConfig::validate() const
{
    if (!(probe_s > 0) || !(pulse_area_rad > 0))
        throw ConfigError("spectroscopy: probe duration and pulse area must be > 0");
    if (!quadrupole_allowed(two_ms, two_md))
        throw SelectionRuleError("spectroscopy: probe transition violates |dm| <= 2");
}

SpectroscopyResult run_spectroscopy(const ScanPlan& plan, const EnvConfig& env, std::uint64_t seed,
                                    const SpectroscopyConfig& cfg, const InterleaveSchedule& sched)
{
    plan.validate();
    cfg.validate();
    const std::size_t np = plan.detunings_hz.size();
    const auto trials = static_cast<std::size_t>(plan.trials);
    const auto reps = static_cast<std::size_t>(plan.shots_per_point_per_trial);

    ShotSpec spec;
    spec.pump = cfg.pump;
    spec.cool_s = cfg.cool_s;
    spec.pulses.push_back(ProbePulse{cfg.two_ms, cfg.two_md, cfg.sideband, cfg.rabi_hz(), cfg.probe_s, 0, 0, 0});
    double shot_s = spec.duration(env.pump, env.detection.window_s);

    std::vector<std::size_t> dark(np, 0), n(np, 0);
    auto one = [&](ShotRunner& r, std::size_t trial, std::size_t i, std::size_t k) {
        spec.pulses[0].detuning_hz = plan.detunings_hz[i];
        auto rec = r.shot(spec, "experiments:spec:" + key({trial, i, k}));
        dark[i] += rec.bright ? 0 : 1;
        n[i] += 1;
    };
    SpectroscopyResult res;
    res.telemetry = run_interleaved(sched, env, seed, horizon_for(plan.shots(), shot_s, sched), [&](ShotRunner& r) {
        switch (plan.order) {
        case ScanOrder::Waterfall:
            for (std::size_t tr = 0; tr < trials; ++tr)
                for (std::size_t i = 0; i < np; ++i)
                    for (std::size_t k = 0; k < reps; ++k)
                        one(r, tr, i, k);
            break;
        case ScanOrder::LeftToRight:
            for (std::size_t i = 0; i < np; ++i)
                for (std::size_t tr = 0; tr < trials; ++tr)
                    for (std::size_t k = 0; k < reps; ++k)
                        one(r, tr, i, k);
            break;
        case ScanOrder::RightToLeft:
            for (std::size_t j = np; j-- > 0;)
                for (std::size_t tr = 0; tr < trials; ++tr)
                    for (std::size_t k = 0; k < reps; ++k)
                        one(r, tr, j, k);
            break;
        }
    });

    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < np; ++i) {
        SpectrumPoint sp;
        sp.detuning_hz = plan.detunings_hz[i];
        sp.n = n[i];
        sp.p = n[i] ? static_cast<double>(dark[i]) / static_cast<double>(n[i]) : 0.0;
        sp.stderr_p = binomial_stderr(sp.p, sp.n);
        res.points.push_back(sp);
        if (sp.n)
            pts.emplace_back(sp.detuning_hz, sp.p);
    }
    if (!res.telemetry.aborted) {
        try {
            res.fit = fit_lineshape(pts, cfg.fit_model);
        } catch (const NumericalError& e) {
            res.fit_error = e.what();
        }
    }
    return res;
}

SpectroscopyResult waterfall_spectroscopy(const ScanPlan& plan, const EnvConfig& env, std::uint64_t seed,
                                          const SpectroscopyConfig& cfg, const InterleaveSchedule& sched)
{
    if (plan.order != ScanOrder::Waterfall)
        throw ConfigError("waterfall_spectroscopy: plan order must be waterfall");
    return run_spectroscopy(plan, env, seed, cfg, sched);
}

RabiResult rabi_scan(const std::vector<double>& durations_s, const EnvConfig& env, std::uint64_t seed,
                     const RabiConfig& cfg, const InterleaveSchedule& sched)
{
    if (durations_s.empty())
        throw ConfigError("rabi_scan: durations must be non-empty");
    for (double d : durations_s)
        if (!(d >= 0))
            throw ConfigError("rabi_scan: durations must be >= 0");
    if (cfg.trials < 1 || !(cfg.rabi_hz > 0))
        throw ConfigError("rabi_scan: trials >= 1 and rabi > 0 required");
    const std::size_t nd = durations_s.size();
    const auto trials = static_cast<std::size_t>(cfg.trials);
    double longest = *std::max_element(durations_s.begin(), durations_s.end());

    ShotSpec spec;
    spec.pump = cfg.pump;
    spec.cool_s = cfg.cool_s;
    spec.pulses.push_back(ProbePulse{cfg.two_ms, cfg.two_md, 0, cfg.rabi_hz, longest, 0, cfg.detuning_hz, 0});
    double shot_s = spec.duration(env.pump, env.detection.window_s);

    std::vector<std::size_t> dark(nd, 0);
    RabiResult res;
    res.telemetry = run_interleaved(sched, env, seed, horizon_for(nd * trials, shot_s, sched), [&](ShotRunner& r) {
        for (std::size_t tr = 0; tr < trials; ++tr)
            for (std::size_t i = 0; i < nd; ++i) {
                spec.pulses[0].duration_s = durations_s[i];
                auto rec = r.shot(spec, "experiments:rabi:" + key({tr, i}));
                dark[i] += rec.bright ? 0 : 1;
            }
    });
    for (std::size_t i = 0; i < nd; ++i) {
        RabiPoint p;
        p.duration_s = durations_s[i];
        p.n = res.telemetry.aborted ? 0 : trials;
        p.p = p.n ? static_cast<double>(dark[i]) / static_cast<double>(trials) : 0.0;
        p.stderr_p = binomial_stderr(p.p, p.n);
        res.points.push_back(p);
    }
    return res;
}

SinusoidFit fit_sinusoid(const std::vector<double>& phases, const std::vector<double>& p)
{
    if (phases.size() != p.size() || phases.size() < 3)
        throw InsufficientDataError("fit_sinusoid: need >= 3 matching phase/probability points");
    const auto n = static_cast<Eigen::Index>(phases.size());
    Eigen::MatrixXd A(n, 3);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto k = static_cast<std::size_t>(i);
        A(i, 0) = 1;
        A(i, 1) = std::cos(phases[k]);
        A(i, 2) = std::sin(phases[k]);
        y(i) = p[k];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < 3)
        throw DegenerateFitError("fit_sinusoid: phases do not determine a sinusoid");
    Eigen::VectorXd c = qr.solve(y);
    SinusoidFit f;
    f.offset = c(0);
    f.amplitude = std::hypot(c(1), c(2));
    f.phase_rad = std::atan2(c(2), c(1));
    if (!(f.offset > 0))
        throw DegenerateFitError("fit_sinusoid: non-positive offset");
    f.contrast = std::clamp(f.amplitude / f.offset, 0.0, 1.0);
    return f;
}

RamseyResult ramsey_scan(const std::vector<double>& delays_s, const std::vector<double>& phases_rad,
                         const EnvConfig& env, std::uint64_t seed, const RamseyConfig& cfg,
                         const InterleaveSchedule& sched)
{
    if (delays_s.empty())
        throw ConfigError("ramsey_scan: delays must be non-empty");
    for (double d : delays_s)
        if (!(d >= 0))
            throw ConfigError("ramsey_scan: delays must be >= 0");
    if (phases_rad.size() < 4)
        throw ConfigError("ramsey_scan: need at least 4 phases");
    {
        auto [lo, hi] = std::minmax_element(phases_rad.begin(), phases_rad.end());
        double span = *hi - *lo;
        double step = span / static_cast<double>(phases_rad.size() - 1);
        if (span + step < 2 * std::numbers::pi * (1 - 1e-9))
            throw ConfigError("ramsey_scan: phases must span 2 pi");
    }
    if (cfg.trials < 1 || !(cfg.half_pi_s > 0))
        throw ConfigError("ramsey_scan: trials >= 1 and half_pi > 0 required");

    const std::size_t nd = delays_s.size(), nph = phases_rad.size();
    const auto trials = static_cast<std::size_t>(cfg.trials);
    const double rabi = 1.0 / (4 * cfg.half_pi_s);
    double longest = *std::max_element(delays_s.begin(), delays_s.end());

    ShotSpec spec;
    spec.pump = cfg.pump;
    spec.cool_s = cfg.cool_s;
    spec.pulses.push_back(ProbePulse{cfg.two_ms, cfg.two_md, 0, rabi, cfg.half_pi_s, 0, 0, 0});
    spec.pulses.push_back(ProbePulse{cfg.two_ms, cfg.two_md, 0, rabi, cfg.half_pi_s, 0, 0, longest});
    double shot_s = spec.duration(env.pump, env.detection.window_s);

    std::vector<std::size_t> dark(nd * nph, 0);
    RamseyResult res;
    res.telemetry = run_interleaved(sched, env, seed, horizon_for(nd * nph * trials, shot_s, sched),
                                    [&](ShotRunner& r) {
                                        for (std::size_t tr = 0; tr < trials; ++tr)
                                            for (std::size_t i = 0; i < nd; ++i)
                                                for (std::size_t j = 0; j < nph; ++j) {
                                                    spec.pulses[1].wait_before_s = delays_s[i];
                                                    spec.pulses[1].phase_rad = phases_rad[j];
                                                    auto rec = r.shot(spec, "experiments:ramsey:" + key({tr, i, j}));
                                                    dark[i * nph + j] += rec.bright ? 0 : 1;
                                                }
                                    });

    std::vector<double> ok_delays, ok_contrast;
    for (std::size_t i = 0; i < nd; ++i) {
        RamseyPoint pt;
        pt.delay_s = delays_s[i];
        pt.phases_rad = phases_rad;
        for (std::size_t j = 0; j < nph; ++j)
            pt.p.push_back(static_cast<double>(dark[i * nph + j]) / static_cast<double>(trials));
        try {
            auto f = fit_sinusoid(pt.phases_rad, pt.p);
            pt.offset = f.offset;
            pt.amplitude = f.amplitude;
            pt.contrast = f.contrast;
            ok_delays.push_back(pt.delay_s);
            ok_contrast.push_back(pt.contrast);
        } catch (const NumericalError&) {
            pt.flagged = true;
        }
        res.points.push_back(pt);
    }
    if (!res.telemetry.aborted) {
        try {
            res.decay = fit_contrast_decay(ok_delays, ok_contrast, cfg.decay);
        } catch (const NumericalError& e) {
            res.decay_error = e.what();
        }
    }
    return res;
}

SpamResult spam_experiment(int n_shots, const EnvConfig& env, std::uint64_t seed, const SpamConfig& cfg,
                           const InterleaveSchedule& sched)
{
    if (n_shots < 100)
        throw ConfigError("spam_experiment: n_shots must be >= 100");
    if (!(cfg.shelve_pulse_s > 0))
        throw ConfigError("spam_experiment: shelving pulse duration must be > 0");

    ShotSpec dark_spec;
    dark_spec.pump = true;
    dark_spec.cool_s = cfg.cool_s;
    dark_spec.shelving = default_shelving(cfg.shelving_pulses, cfg.shelve_pulse_s);
    ShotSpec bright_spec = dark_spec;
    bright_spec.shelving.clear();
    double shot_s = dark_spec.duration(env.pump, env.detection.window_s);

    SpamResult res;
    res.shelving_pulses = cfg.shelving_pulses;
    res.threshold = env.detection.resolved_threshold();
    std::size_t correct_dark = 0, correct_bright = 0, n_dark = 0, n_bright = 0, wrong = 0;
    auto bump = [](std::vector<std::size_t>& h, int c) {
        auto k = static_cast<std::size_t>(c);
        if (h.size() <= k)
            h.resize(k + 1, 0);
        ++h[k];
    };
    res.telemetry = run_interleaved(sched, env, seed,
                                    horizon_for(static_cast<std::size_t>(n_shots), shot_s, sched),
                                    [&](ShotRunner& r) {
                                        for (int i = 0; i < n_shots; ++i) {
                                            bool prep_dark = (i % 2) == 0;
                                            auto rec = r.shot(prep_dark ? dark_spec : bright_spec,
                                                              "experiments:spam:" + std::to_string(i));
                                            if (rec.bright != rec.true_bright)
                                                ++wrong;
                                            if (prep_dark) {
                                                ++n_dark;
                                                correct_dark += rec.bright ? 0 : 1;
                                                bump(res.histogram_dark, rec.counts);
                                            } else {
                                                ++n_bright;
                                                correct_bright += rec.bright ? 1 : 0;
                                                bump(res.histogram_bright, rec.counts);
                                            }
                                        }
                                    });
    std::size_t len = std::max(res.histogram_dark.size(), res.histogram_bright.size());
    res.histogram_dark.resize(len, 0);
    res.histogram_bright.resize(len, 0);
    if (n_dark)
        res.fidelity_dark = static_cast<double>(correct_dark) / static_cast<double>(n_dark);
    if (n_bright)
        res.fidelity_bright = static_cast<double>(correct_bright) / static_cast<double>(n_bright);
    res.fidelity = 0.5 * (res.fidelity_dark + res.fidelity_bright);
    if (n_dark + n_bright)
        res.overlap = static_cast<double>(wrong) / static_cast<double>(n_dark + n_bright);
    return res;
}

int minimum_shelving_pulses(const EnvConfig& env, std::uint64_t seed, double target, int n_shots,
                            const SpamConfig& base)
{
    for (int n = 1; n <= 5; ++n) {
        SpamConfig c = base;
        c.shelving_pulses = n;
        if (spam_experiment(n_shots, env, seed, c).fidelity >= target)
            return n;
    }
    return 0;
}

} // namespace ionlock
