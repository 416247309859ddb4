#include "ionlock/harness_io.hpp"

#include "ionlock/errors.hpp"
#include "ionlock/laser_chain.hpp"
#include "ionlock/metrology.hpp"
#include "json_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

namespace ionlock {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- config <-> json ----

namespace {

json servo_to_json(const ClockServoConfig& c)
{
    return json{{"half_width_hz", c.half_width_hz}, {"gain", c.gain},
                {"probe_s", c.probe_s},             {"rabi_hz", c.rabi_hz},
                {"cool_s", c.cool_s},               {"detect_s", c.detect_s},
                {"samples_per_side", c.samples_per_side}, {"two_ms", c.two_ms},
                {"two_md", c.two_md},               {"unlock_cycles", c.unlock_cycles}};
}

json injection_to_json(const DriftInjection& d)
{
    return json{{"kind", injection_kind_name(d.kind)},
                {"amplitude_hz", d.amplitude_hz},
                {"rate_hz_per_s", d.rate_hz_per_s},
                {"start_s", d.start_s}};
}

std::string line_model_name(LineModel m)
{
    return m == LineModel::Gaussian ? "gaussian" : "sinc2";
}

std::string decay_model_name(DecayModel m)
{
    return m == DecayModel::Exponential ? "exponential" : "gaussian";
}

json config_to_json(const RunConfig& c)
{
    const EnvConfig& e = c.env;
    json j;
    j["seed"] = c.seed;
    j["chain"] = c.chain;
    if (c.custom_laser)
        j["laser"] = model_to_json_value(e.laser);
    j["output_dir"] = c.output_dir;
    j["env"] = json{{"excess_white_hz2_per_hz", e.excess_white_hz2_per_hz},
                    {"rabi_spread", e.rabi_spread},
                    {"drift_enabled", e.drift_enabled},
                    {"drift", drift_to_json(e.drift)},
                    {"drift_dt_s", e.drift_dt_s},
                    {"injection", injection_to_json(e.injection)},
                    {"b_field_gauss", e.b_field_gauss},
                    {"fast_rate_hz", e.fast_rate_hz},
                    {"slow_rate_hz", e.slow_rate_hz},
                    {"split_hz", e.split_hz}};
    j["ion"] = json{{"mu_b_hz_per_gauss", e.ion.mu_b_hz_per_gauss},
                    {"g_s", e.ion.g_s},
                    {"g_d", e.ion.g_d},
                    {"sideband_hz", e.ion.sideband_hz},
                    {"sideband_weight", e.ion.sideband_weight}};
    j["detection"] = json{{"bright_rate_cps", e.detection.bright_rate_cps},
                          {"dark_rate_cps", e.detection.dark_rate_cps},
                          {"window_s", e.detection.window_s},
                          {"threshold_counts", e.detection.threshold_counts}};
    j["pump"] = json{{"n_cycles", e.pump.n_cycles},
                     {"pulse674_s", e.pump.pulse674_s},
                     {"pulse1033_s", e.pump.pulse1033_s},
                     {"rabi_hz", e.pump.rabi_hz},
                     {"branching_to_s_minus", e.pump.branching_to_s_minus}};
    j["clock"] = json{{"servo", servo_to_json(c.clock.servo)},
                      {"cycles", c.clock.cycles},
                      {"warmup_cycles", c.clock.warmup_cycles}};
    j["interleave"] = json{{"enabled", c.interleave.enabled},
                           {"clock_cycles_per_experiment_shot", c.interleave.clock_cycles_per_experiment_shot},
                           {"warmup_cycles", c.interleave.warmup_cycles},
                           {"servo", servo_to_json(c.interleave.clock)}};
    const auto& s = c.spectroscopy;
    j["spectroscopy"] = json{{"lo_hz", s.lo_hz},
                             {"hi_hz", s.hi_hz},
                             {"points", s.points},
                             {"trials", s.trials},
                             {"order", scan_order_name(s.order)},
                             {"probe_s", s.probe.probe_s},
                             {"pulse_area_rad", s.probe.pulse_area_rad},
                             {"two_ms", s.probe.two_ms},
                             {"two_md", s.probe.two_md},
                             {"sideband", s.probe.sideband},
                             {"pump", s.probe.pump},
                             {"cool_s", s.probe.cool_s},
                             {"fit_model", line_model_name(s.probe.fit_model)}};
    const auto& r = c.rabi;
    j["rabi"] = json{{"max_duration_s", r.max_duration_s},
                     {"points", r.points},
                     {"rabi_hz", r.rabi.rabi_hz},
                     {"detuning_hz", r.rabi.detuning_hz},
                     {"trials", r.rabi.trials},
                     {"two_ms", r.rabi.two_ms},
                     {"two_md", r.rabi.two_md},
                     {"pump", r.rabi.pump},
                     {"cool_s", r.rabi.cool_s}};
    const auto& m = c.ramsey;
    j["ramsey"] = json{{"delays_s", m.delays_s},
                       {"phases", m.phases},
                       {"half_pi_s", m.ramsey.half_pi_s},
                       {"trials", m.ramsey.trials},
                       {"two_ms", m.ramsey.two_ms},
                       {"two_md", m.ramsey.two_md},
                       {"pump", m.ramsey.pump},
                       {"cool_s", m.ramsey.cool_s},
                       {"decay", decay_model_name(m.ramsey.decay)}};
    j["spam"] = json{{"shots", c.spam.shots},
                     {"shelving_pulses", c.spam.spam.shelving_pulses},
                     {"shelve_pulse_s", c.spam.spam.shelve_pulse_s},
                     {"cool_s", c.spam.spam.cool_s}};
    return j;
}

RunConfig defaults_for(const std::string& chain, std::uint64_t seed)
{
    RunConfig c;
    c.seed = seed;
    c.chain = chain;
    StagePreset p = parse_preset(chain);
    c.env = default_env(p);
    c.clock.servo.half_width_hz = default_half_width(p);
    c.clock.servo.gain = 0;
    return c;
}

// Typed accessor that reports the dotted path on mismatch.
template <class T>
T get_at(const json& j, const std::string& key, const std::string& where)
{
    const std::string path = where.empty() ? key : where + "." + key;
    if (!j.contains(key))
        throw ConfigError(path + ": missing");
    const json& v = j.at(key);
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean())
            throw ConfigError(path + ": expected true/false");
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string())
            throw ConfigError(path + ": expected a string");
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer())
            throw ConfigError(path + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>)
            if (v.is_number_integer() && !v.is_number_unsigned())
                throw ConfigError(path + ": expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number())
            throw ConfigError(path + ": expected a number");
    }
    try {
        return v.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

ClockServoConfig servo_from_json(const json& j, const std::string& w)
{
    ClockServoConfig c;
    c.half_width_hz = get_at<double>(j, "half_width_hz", w);
    c.gain = get_at<double>(j, "gain", w);
    c.probe_s = get_at<double>(j, "probe_s", w);
    c.rabi_hz = get_at<double>(j, "rabi_hz", w);
    c.cool_s = get_at<double>(j, "cool_s", w);
    c.detect_s = get_at<double>(j, "detect_s", w);
    c.samples_per_side = get_at<int>(j, "samples_per_side", w);
    c.two_ms = get_at<int>(j, "two_ms", w);
    c.two_md = get_at<int>(j, "two_md", w);
    c.unlock_cycles = get_at<int>(j, "unlock_cycles", w);
    return c;
}

DriftInjection injection_from_json(const json& j, const std::string& w)
{
    DriftInjection d;
    auto kind = get_at<std::string>(j, "kind", w);
    if (kind == "none")
        d.kind = DriftInjection::Kind::None;
    else if (kind == "triangle")
        d.kind = DriftInjection::Kind::Triangle;
    else if (kind == "linear")
        d.kind = DriftInjection::Kind::Linear;
    else
        throw ConfigError(w + ".kind: expected none, triangle or linear");
    d.amplitude_hz = get_at<double>(j, "amplitude_hz", w);
    d.rate_hz_per_s = get_at<double>(j, "rate_hz_per_s", w);
    d.start_s = get_at<double>(j, "start_s", w);
    return d;
}

RunConfig config_from_json(const json& j)
{
    RunConfig c;
    c.seed = get_at<std::uint64_t>(j, "seed", "");
    c.chain = get_at<std::string>(j, "chain", "");
    c.output_dir = get_at<std::string>(j, "output_dir", "");
    EnvConfig& e = c.env;
    if (j.contains("laser")) {
        c.custom_laser = true;
        e.laser = model_from_json_value(j.at("laser"), "laser");
    } else {
        e.laser = preset_model(parse_preset(c.chain));
    }
    const json& je = j.at("env");
    e.excess_white_hz2_per_hz = get_at<double>(je, "excess_white_hz2_per_hz", "env");
    e.rabi_spread = get_at<double>(je, "rabi_spread", "env");
    e.drift_enabled = get_at<bool>(je, "drift_enabled", "env");
    e.drift = drift_from_json(je.at("drift"), "env.drift");
    e.drift_dt_s = get_at<double>(je, "drift_dt_s", "env");
    e.injection = injection_from_json(je.at("injection"), "env.injection");
    e.b_field_gauss = get_at<double>(je, "b_field_gauss", "env");
    e.fast_rate_hz = get_at<double>(je, "fast_rate_hz", "env");
    e.slow_rate_hz = get_at<double>(je, "slow_rate_hz", "env");
    e.split_hz = get_at<double>(je, "split_hz", "env");

    const json& ji = j.at("ion");
    e.ion.mu_b_hz_per_gauss = get_at<double>(ji, "mu_b_hz_per_gauss", "ion");
    e.ion.g_s = get_at<double>(ji, "g_s", "ion");
    e.ion.g_d = get_at<double>(ji, "g_d", "ion");
    e.ion.sideband_hz = get_at<double>(ji, "sideband_hz", "ion");
    e.ion.sideband_weight = get_at<double>(ji, "sideband_weight", "ion");

    const json& jd = j.at("detection");
    e.detection.bright_rate_cps = get_at<double>(jd, "bright_rate_cps", "detection");
    e.detection.dark_rate_cps = get_at<double>(jd, "dark_rate_cps", "detection");
    e.detection.window_s = get_at<double>(jd, "window_s", "detection");
    e.detection.threshold_counts = get_at<int>(jd, "threshold_counts", "detection");

    const json& jp = j.at("pump");
    e.pump.n_cycles = get_at<int>(jp, "n_cycles", "pump");
    e.pump.pulse674_s = get_at<double>(jp, "pulse674_s", "pump");
    e.pump.pulse1033_s = get_at<double>(jp, "pulse1033_s", "pump");
    e.pump.rabi_hz = get_at<double>(jp, "rabi_hz", "pump");
    e.pump.branching_to_s_minus = get_at<double>(jp, "branching_to_s_minus", "pump");

    const json& jc = j.at("clock");
    c.clock.servo = servo_from_json(jc.at("servo"), "clock.servo");
    c.clock.cycles = get_at<std::size_t>(jc, "cycles", "clock");
    c.clock.warmup_cycles = get_at<std::size_t>(jc, "warmup_cycles", "clock");

    const json& jl = j.at("interleave");
    c.interleave.enabled = get_at<bool>(jl, "enabled", "interleave");
    c.interleave.clock_cycles_per_experiment_shot = get_at<int>(jl, "clock_cycles_per_experiment_shot", "interleave");
    c.interleave.warmup_cycles = get_at<int>(jl, "warmup_cycles", "interleave");
    c.interleave.clock = servo_from_json(jl.at("servo"), "interleave.servo");

    const json& js = j.at("spectroscopy");
    auto& s = c.spectroscopy;
    s.lo_hz = get_at<double>(js, "lo_hz", "spectroscopy");
    s.hi_hz = get_at<double>(js, "hi_hz", "spectroscopy");
    s.points = get_at<int>(js, "points", "spectroscopy");
    s.trials = get_at<int>(js, "trials", "spectroscopy");
    s.order = parse_scan_order(get_at<std::string>(js, "order", "spectroscopy"));
    s.probe.probe_s = get_at<double>(js, "probe_s", "spectroscopy");
    s.probe.pulse_area_rad = get_at<double>(js, "pulse_area_rad", "spectroscopy");
    s.probe.two_ms = get_at<int>(js, "two_ms", "spectroscopy");
    s.probe.two_md = get_at<int>(js, "two_md", "spectroscopy");
    s.probe.sideband = get_at<int>(js, "sideband", "spectroscopy");
    s.probe.pump = get_at<bool>(js, "pump", "spectroscopy");
    s.probe.cool_s = get_at<double>(js, "cool_s", "spectroscopy");
    auto fm = get_at<std::string>(js, "fit_model", "spectroscopy");
    if (fm == "gaussian")
        s.probe.fit_model = LineModel::Gaussian;
    else if (fm == "sinc2")
        s.probe.fit_model = LineModel::SincSquared;
    else
        throw ConfigError("spectroscopy.fit_model: expected gaussian or sinc2");

    const json& jr = j.at("rabi");
    auto& r = c.rabi;
    r.max_duration_s = get_at<double>(jr, "max_duration_s", "rabi");
    r.points = get_at<int>(jr, "points", "rabi");
    r.rabi.rabi_hz = get_at<double>(jr, "rabi_hz", "rabi");
    r.rabi.detuning_hz = get_at<double>(jr, "detuning_hz", "rabi");
    r.rabi.trials = get_at<int>(jr, "trials", "rabi");
    r.rabi.two_ms = get_at<int>(jr, "two_ms", "rabi");
    r.rabi.two_md = get_at<int>(jr, "two_md", "rabi");
    r.rabi.pump = get_at<bool>(jr, "pump", "rabi");
    r.rabi.cool_s = get_at<double>(jr, "cool_s", "rabi");

    const json& jm = j.at("ramsey");
    auto& m = c.ramsey;
    m.delays_s = get_at<std::vector<double>>(jm, "delays_s", "ramsey");
    m.phases = get_at<int>(jm, "phases", "ramsey");
    m.ramsey.half_pi_s = get_at<double>(jm, "half_pi_s", "ramsey");
    m.ramsey.trials = get_at<int>(jm, "trials", "ramsey");
    m.ramsey.two_ms = get_at<int>(jm, "two_ms", "ramsey");
    m.ramsey.two_md = get_at<int>(jm, "two_md", "ramsey");
    m.ramsey.pump = get_at<bool>(jm, "pump", "ramsey");
    m.ramsey.cool_s = get_at<double>(jm, "cool_s", "ramsey");
    auto dm = get_at<std::string>(jm, "decay", "ramsey");
    if (dm == "exponential")
        m.ramsey.decay = DecayModel::Exponential;
    else if (dm == "gaussian")
        m.ramsey.decay = DecayModel::Gaussian;
    else
        throw ConfigError("ramsey.decay: expected exponential or gaussian");

    const json& jq = j.at("spam");
    c.spam.shots = get_at<int>(jq, "shots", "spam");
    c.spam.spam.shelving_pulses = get_at<int>(jq, "shelving_pulses", "spam");
    c.spam.spam.shelve_pulse_s = get_at<double>(jq, "shelve_pulse_s", "spam");
    c.spam.spam.cool_s = get_at<double>(jq, "cool_s", "spam");

    e.validate();
    c.clock.servo.validate();
    c.interleave.validate();
    if (c.spectroscopy.points < 5 || c.spectroscopy.trials < 1 || !(c.spectroscopy.hi_hz > c.spectroscopy.lo_hz))
        throw ConfigError("spectroscopy: need points >= 5, trials >= 1 and hi_hz > lo_hz");
    c.spectroscopy.probe.validate();
    if (c.rabi.points < 2 || !(c.rabi.max_duration_s > 0))
        throw ConfigError("rabi: need points >= 2 and max_duration_s > 0");
    if (c.ramsey.phases < 4)
        throw ConfigError("ramsey.phases: need at least 4");
    if (c.spam.shots < 100)
        throw ConfigError("spam.shots: need at least 100");
    if (c.clock.cycles < 1 || c.clock.warmup_cycles >= c.clock.cycles)
        throw ConfigError("clock: need cycles >= 1 and warmup_cycles < cycles");
    return c;
}

// Overlay user values onto defaults; unknown keys are rejected, defaulted leaves recorded.
void merge_into(json& base, const json& user, const std::string& where, std::vector<std::string>& defaulted)
{
    if (!user.is_object())
        throw ConfigError((where.empty() ? std::string("config") : where) + ": expected an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string path = where.empty() ? it.key() : where + "." + it.key();
        if (!base.contains(it.key()))
            throw ConfigError(path + ": unknown key");
        json& slot = base[it.key()];
        if (slot.is_object() && it.key() != "laser") {
            if (!it.value().is_object())
                throw ConfigError(path + ": expected an object");
            std::vector<std::string> sub;
            merge_into(slot, it.value(), path, sub);
            defaulted.insert(defaulted.end(), sub.begin(), sub.end());
        } else if (slot.is_number_float() && it.value().is_number()) {
            slot = it.value().get<double>(); // canonical: 4000 -> 4000.0
        } else if (slot.is_array() && (slot.empty() || slot.front().is_number_float()) && it.value().is_array()
                   && std::all_of(it.value().begin(), it.value().end(), [](const json& v) { return v.is_number(); })) {
            slot = json::array();
            for (const auto& v : it.value())
                slot.push_back(v.get<double>());
        } else {
            slot = it.value();
        }
    }
    for (auto it = base.begin(); it != base.end(); ++it) {
        if (user.contains(it.key()))
            continue;
        const std::string path = where.empty() ? it.key() : where + "." + it.key();
        if (it.value().is_object()) {
            // every leaf below an omitted object is defaulted
            std::function<void(const json&, const std::string&)> walk = [&](const json& v, const std::string& p) {
                if (v.is_object() && !v.empty())
                    for (auto k = v.begin(); k != v.end(); ++k)
                        walk(k.value(), p + "." + k.key());
                else
                    defaulted.push_back(p);
            };
            walk(it.value(), path);
        } else {
            defaulted.push_back(path);
        }
    }
}

json parse_json_text(const std::string& text, const std::string& source)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::string msg = e.what();
        auto pos = msg.find("syntax error");
        throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": "
                          + (pos != std::string::npos ? msg.substr(pos) : msg));
    }
}

std::pair<json, std::vector<std::string>> resolve(const json& user)
{
    if (!user.is_object())
        throw ConfigError("config: top level must be an object");
    if (!user.contains("seed"))
        throw ConfigError("seed: required (no default)");
    std::string chain = "sbs_coil";
    if (user.contains("chain")) {
        if (!user.at("chain").is_string())
            throw ConfigError("chain: expected a preset name");
        chain = user.at("chain").get<std::string>();
    }
    bool custom = user.contains("laser");
    if (custom && user.contains("chain") && chain != "custom")
        throw ConfigError("chain: must be \"custom\" (or omitted) when a laser model is given");
    if (custom)
        chain = "custom";
    std::string base_chain = custom ? "sbs_coil" : chain;
    try {
        parse_preset(base_chain);
    } catch (const ConfigError&) {
        throw ConfigError("chain: unknown preset '" + chain + "'");
    }
    RunConfig d = defaults_for(base_chain, 0);
    d.chain = chain;
    json base = config_to_json(d);
    if (custom)
        base["laser"] = json::object();
    std::vector<std::string> defaulted;
    merge_into(base, user, "", defaulted);
    std::sort(defaulted.begin(), defaulted.end());
    return {base, defaulted};
}

} // namespace

RunConfig parse_config(const std::string& text, const std::string& source)
{
    json user = parse_json_text(text, source);
    auto [merged, defaulted] = resolve(user);
    RunConfig c;
    try {
        c = config_from_json(merged);
    } catch (const json::exception& e) {
        throw ConfigError(source + ": " + e.what());
    }
    c.defaulted = defaulted;
    return c;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw ConfigError(path + ": cannot open config file");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), path);
}

std::string dump_config(const RunConfig& cfg)
{
    return config_to_json(cfg).dump(2) + "\n";
}

std::string normalize_config(const std::string& text)
{
    json user = parse_json_text(text, "<config>");
    auto merged = resolve(user).first;
    if (merged.contains("laser"))
        merged["laser"] = json::parse(model_to_json(model_from_json(merged["laser"].dump())));
    return merged.dump(2) + "\n";
}

std::string default_config_json(const std::string& chain, std::uint64_t seed)
{
    return dump_config(defaults_for(chain, seed));
}

// ---- output ----

std::string format_number(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void CsvTable::add(const std::vector<double>& row)
{
    std::vector<std::string> r;
    r.reserve(row.size());
    for (double v : row)
        r.push_back(format_number(v));
    rows.push_back(std::move(r));
}

std::string CsvTable::render() const
{
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i)
            out += ',';
        out += columns[i];
    }
    out += '\n';
    for (const auto& r : rows) {
        if (r.size() != columns.size())
            throw std::logic_error("csv " + name + ": row width does not match the header");
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i)
                out += ',';
            out += r[i];
        }
        out += '\n';
    }
    return out;
}

std::string sha256_hex(const std::string& bytes)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1
        || EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256 failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned int i = 0; i < len; ++i) {
        s += hex[md[i] >> 4];
        s += hex[md[i] & 15];
    }
    return s;
}

void write_file_atomic(const std::string& path, const std::string& content)
{
    fs::path p(path);
    fs::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            throw std::runtime_error(tmp.string() + ": cannot open for writing");
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        os.flush();
        if (!os)
            throw std::runtime_error(tmp.string() + ": write failed");
    }
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) {
        fs::remove(tmp);
        throw std::runtime_error(p.string() + ": rename failed: " + ec.message());
    }
}

namespace {

json manifest_body(const RunManifest& m)
{
    json j;
    j["artifact"] = "ionlock";
    j["version"] = kArtifactVersion;
    j["command"] = m.command;
    j["config"] = m.config_json.empty() ? json(nullptr) : json::parse(m.config_json);
    j["defaulted"] = m.defaulted;
    j["input_hashes"] = m.input_hashes;
    json outs = json::array();
    for (const auto& [f, h] : m.outputs)
        outs.push_back(json{{"file", f}, {"sha256", h}});
    j["outputs"] = outs;
    j["summary"] = m.summary;
    return j;
}

} // namespace

std::string RunManifest::content_hash() const
{
    return sha256_hex(manifest_body(*this).dump());
}

std::string RunManifest::to_json() const
{
    json j = manifest_body(*this);
    j["manifest_hash"] = content_hash();
    j["wall_time_s"] = wall_time_s;
    return j.dump(2) + "\n";
}

std::vector<std::string> emit_results(const std::string& dir, const std::vector<CsvTable>& tables,
                                      RunManifest& manifest)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error(dir + ": cannot create output directory: " + ec.message());
    std::vector<std::string> written;
    manifest.outputs.clear();
    for (const auto& t : tables) {
        std::string body = t.render();
        std::string path = (fs::path(dir) / t.name).string();
        write_file_atomic(path, body);
        manifest.outputs.emplace_back(t.name, sha256_hex(body));
        written.push_back(path);
    }
    std::string mpath = (fs::path(dir) / "manifest.json").string();
    write_file_atomic(mpath, manifest.to_json());
    written.push_back(mpath);
    return written;
}

// ---- runs ----

namespace {

std::vector<double> centered_average(const std::vector<double>& x, std::size_t k)
{
    std::vector<double> out(x.size(), 0.0);
    if (x.empty())
        return out;
    std::size_t h = k / 2;
    std::vector<double> c(x.size() + 1, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
        c[i + 1] = c[i] + x[i];
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::size_t lo = i >= h ? i - h : 0;
        std::size_t hi = std::min(x.size(), i + h + 1);
        out[i] = (c[hi] - c[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

CsvTable clock_table(const std::string& name, const ClockSeries& s)
{
    CsvTable t{name, {"t_s", "correction_hz", "injected_hz"}, {}};
    for (std::size_t i = 0; i < s.t_s.size(); ++i)
        t.add({s.t_s[i], s.correction_hz[i], s.truth_hz[i]});
    return t;
}

CsvTable adev_table(const AdevResult& a)
{
    CsvTable t{"adev.csv", {"tau_s", "sigma_y", "n"}, {}};
    for (std::size_t i = 0; i < a.taus.size(); ++i)
        t.add({a.taus[i], a.sigma_y[i], static_cast<double>(a.n_samples[i])});
    return t;
}

// c in sigma_y = c / sqrt(tau), least squares in log space over taus in [lo, hi]
double fit_white_coefficient(const AdevResult& a, double lo, double hi)
{
    double s = 0;
    int n = 0;
    for (std::size_t i = 0; i < a.taus.size(); ++i)
        if (a.taus[i] >= lo && a.taus[i] <= hi && a.sigma_y[i] > 0) {
            s += std::log(a.sigma_y[i] * std::sqrt(a.taus[i]));
            ++n;
        }
    if (n == 0)
        throw InsufficientDataError("no ADEV points in the fit range");
    return std::exp(s / n);
}

CsvTable spectrum_table(const SpectroscopyResult& r)
{
    CsvTable t{"spectrum.csv", {"detuning_hz", "p", "stderr", "n"}, {}};
    for (const auto& p : r.points)
        t.add({p.detuning_hz, p.p, p.stderr_p, static_cast<double>(p.n)});
    return t;
}

void telemetry_summary(std::map<std::string, std::string>& s, const ExperimentTelemetry& t)
{
    s["experiment_shots"] = std::to_string(t.experiment_shots);
    s["clock_cycles"] = std::to_string(t.clock_cycles);
    s["detections"] = std::to_string(t.detections);
    s["aborted"] = t.aborted ? "true" : "false";
    if (t.aborted)
        s["diagnostic"] = t.diagnostic;
}

std::vector<double> phase_grid(int n)
{
    std::vector<double> v;
    for (int i = 0; i < n; ++i)
        v.push_back(2 * std::numbers::pi * i / n);
    return v;
}

constexpr double kCarrierHz = 4.447e14;

} // namespace

CommandOutput run_command(const std::string& command, const RunConfig& cfg)
{
    CommandOutput out;
    const EnvConfig& env = cfg.env;
    if (command == "clock") {
        auto s = run_clock(cfg.clock.cycles, env, env.injection, cfg.seed, cfg.clock.servo);
        // the transition shift is already in env.injection; series truth column shows the servo-side one
        for (std::size_t i = 0; i < s.t_s.size(); ++i)
            s.truth_hz[i] = env.injection.at(s.t_s[i]);
        out.tables.push_back(clock_table("corrections.csv", s));
        double m = 0, v = 0;
        std::size_t w = cfg.clock.warmup_cycles, n = s.correction_hz.size() - w;
        for (std::size_t i = w; i < s.correction_hz.size(); ++i)
            m += s.correction_hz[i];
        m /= static_cast<double>(n);
        for (std::size_t i = w; i < s.correction_hz.size(); ++i)
            v += (s.correction_hz[i] - m) * (s.correction_hz[i] - m);
        out.summary["mean_correction_hz"] = format_number(m);
        out.summary["rms_correction_hz"] = format_number(std::sqrt(v / static_cast<double>(n)));
    } else if (command == "dualclock") {
        EnvConfig e = env;
        auto r = dual_clock_run(cfg.clock.cycles, e, cfg.seed, cfg.seed + 1, cfg.seed + 2, cfg.clock.servo, {}, {},
                                cfg.clock.warmup_cycles);
        CsvTable t{"dualclock.csv", {"t_s", "clock_a_hz", "clock_b_hz", "difference_hz"}, {}};
        for (std::size_t i = 0; i < r.difference_hz.size(); ++i)
            t.add({r.a.t_s[i], r.a.correction_hz[i], r.b.correction_hz[i], r.difference_hz[i]});
        out.tables.push_back(t);
        std::vector<double> d(r.difference_hz.begin() + static_cast<long>(cfg.clock.warmup_cycles),
                              r.difference_hz.end());
        for (double& x : d)
            x /= std::sqrt(2.0);
        auto a = allan_deviation(d, 1.0 / r.cycle_pair_s, kCarrierHz);
        out.tables.push_back(adev_table(a));
        out.summary["rms_difference_hz"] = format_number(r.rms_difference_hz);
        try {
            out.summary["adev_coefficient_1s"] = format_number(fit_white_coefficient(a, 0.5, 20.0));
        } catch (const NumericalError&) {
        }
    } else if (command == "spectroscopy") {
        auto plan = ScanPlan::uniform(cfg.spectroscopy.lo_hz, cfg.spectroscopy.hi_hz, cfg.spectroscopy.points,
                                      cfg.spectroscopy.trials, cfg.spectroscopy.order);
        auto r = run_spectroscopy(plan, env, cfg.seed, cfg.spectroscopy.probe, cfg.interleave);
        out.tables.push_back(spectrum_table(r));
        if (r.fit) {
            out.summary["fwhm_hz"] = format_number(r.fit->fwhm_hz);
            out.summary["raw_fwhm_hz"] = format_number(r.fit->raw_fwhm_hz);
            out.summary["center_hz"] = format_number(r.fit->center_hz);
            out.summary["amplitude"] = format_number(r.fit->amplitude);
        } else {
            out.summary["fit_error"] = r.fit_error;
        }
        telemetry_summary(out.summary, r.telemetry);
    } else if (command == "rabi") {
        std::vector<double> d;
        for (int i = 0; i < cfg.rabi.points; ++i)
            d.push_back(cfg.rabi.max_duration_s * i / (cfg.rabi.points - 1));
        auto r = rabi_scan(d, env, cfg.seed, cfg.rabi.rabi, cfg.interleave);
        CsvTable t{"rabi.csv", {"duration_s", "p", "stderr", "n"}, {}};
        for (const auto& p : r.points)
            t.add({p.duration_s, p.p, p.stderr_p, static_cast<double>(p.n)});
        out.tables.push_back(t);
        telemetry_summary(out.summary, r.telemetry);
    } else if (command == "ramsey") {
        auto r = ramsey_scan(cfg.ramsey.delays_s, phase_grid(cfg.ramsey.phases), env, cfg.seed, cfg.ramsey.ramsey,
                             cfg.interleave);
        CsvTable t{"ramsey.csv", {"delay_s", "contrast", "offset", "amplitude", "flagged"}, {}};
        for (const auto& p : r.points)
            t.add({p.delay_s, p.contrast, p.offset, p.amplitude, p.flagged ? 1.0 : 0.0});
        out.tables.push_back(t);
        CsvTable f{"ramsey_fringes.csv", {"delay_s", "phase_rad", "p"}, {}};
        for (const auto& p : r.points)
            for (std::size_t k = 0; k < p.p.size(); ++k)
                f.add({p.delay_s, p.phases_rad[k], p.p[k]});
        out.tables.push_back(f);
        if (r.decay) {
            out.summary["tau_coh_s"] = format_number(r.decay->tau_coh_s);
            out.summary["contrast_0"] = format_number(r.decay->contrast_0);
            out.summary["coherence_linewidth_hz"] = format_number(coherence_linewidth(r.decay->tau_coh_s));
        } else {
            out.summary["decay_error"] = r.decay_error;
        }
        telemetry_summary(out.summary, r.telemetry);
    } else if (command == "spam") {
        auto r = spam_experiment(cfg.spam.shots, env, cfg.seed, cfg.spam.spam, cfg.interleave);
        CsvTable t{"spam_histogram.csv", {"counts", "dark_prepared", "bright_prepared"}, {}};
        for (std::size_t k = 0; k < r.histogram_dark.size(); ++k)
            t.add({static_cast<double>(k), static_cast<double>(r.histogram_dark[k]),
                   static_cast<double>(r.histogram_bright[k])});
        out.tables.push_back(t);
        out.summary["fidelity"] = format_number(r.fidelity);
        out.summary["fidelity_dark"] = format_number(r.fidelity_dark);
        out.summary["fidelity_bright"] = format_number(r.fidelity_bright);
        out.summary["overlap"] = format_number(r.overlap);
        out.summary["threshold"] = std::to_string(r.threshold);
        out.summary["shelving_pulses"] = std::to_string(r.shelving_pulses);
        telemetry_summary(out.summary, r.telemetry);
    } else {
        throw ConfigError("unknown command '" + command + "'");
    }
    return out;
}

// ---- reproduction scenarios ----

std::vector<std::string> scenario_ids()
{
    return {"fig3", "fig4c", "fig4f", "fig5c", "fig5d", "fig6c", "fig6e", "fig6f", "drift_step"};
}

namespace {

void check(CommandOutput& out, bool ok, const std::string& what)
{
    if (!ok) {
        out.check_failed = true;
        if (!out.check_message.empty())
            out.check_message += "; ";
        out.check_message += what;
    }
}

bool within(double v, double target, double rel)
{
    return std::abs(v - target) <= rel * std::abs(target);
}

} // namespace

CommandOutput run_scenario(const std::string& id, std::uint64_t seed)
{
    CommandOutput out;
    if (id == "fig3") {
        struct Row {
            StagePreset p;
            double lo, hi;
        };
        CsvTable t{"linewidths.csv", {"preset", "f_min_hz", "f_max_hz", "flw_hz", "ilw_one_over_pi_hz", "ilw_beta_hz"}, {}};
        std::map<std::string, LinewidthReport> reps;
        for (Row r : {Row{StagePreset::PumpFree, 500, 30e6}, Row{StagePreset::SbsFree, 500, 30e6},
                      Row{StagePreset::SbsCoilLocked, 500, 30e6}, Row{StagePreset::PumpCoilLocked, 500, 330e3}}) {
            auto rep = linewidth_report(preset_model(r.p), r.lo, r.hi);
            reps[preset_name(r.p)] = rep;
            t.rows.push_back({preset_name(r.p), format_number(r.lo), format_number(r.hi), format_number(rep.flw_hz),
                              format_number(rep.ilw_one_over_pi_hz), format_number(rep.ilw_beta_hz)});
        }
        out.tables.push_back(t);
        check(out, within(reps["sbs_coil"].ilw_one_over_pi_hz, 580, 0.15), "SBS+coil 1/pi ILW not 580 Hz +-15%");
        check(out, within(reps["pump_coil"].ilw_one_over_pi_hz, 10e3, 0.15), "pump+coil 1/pi ILW not 10 kHz +-15%");
        check(out, within(reps["pump_free"].ilw_beta_hz, 316e3, 0.15), "pump beta ILW not 316 kHz +-15%");
    } else if (id == "fig4c") {
        EnvConfig env = default_env(StagePreset::SbsCoilLocked);
        ClockServoConfig cfg;
        cfg.half_width_hz = default_half_width(StagePreset::SbsCoilLocked);
        auto tri = DriftInjection::triangle(20e3, 4e3);
        std::size_t n = 3000;
        auto r = dual_clock_run(n, env, seed, seed + 1, seed + 2, cfg, tri, {});
        auto k = static_cast<std::size_t>(std::lround(1.0 / r.cycle_pair_s)) | 1U;
        auto rec = centered_average(r.difference_hz, k);
        CsvTable t{"triangle.csv", {"t_s", "clock_a_hz", "clock_b_hz", "recovered_hz", "injected_hz"}, {}};
        double e2 = 0;
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < n; ++i) {
            t.add({r.a.t_s[i], r.a.correction_hz[i], r.b.correction_hz[i], rec[i], r.a.truth_hz[i]});
            if (i >= k && i + k < n) {
                e2 += (rec[i] - r.a.truth_hz[i]) * (rec[i] - r.a.truth_hz[i]);
                ++cnt;
            }
        }
        out.tables.push_back(t);
        double rms = std::sqrt(e2 / static_cast<double>(cnt));
        out.summary["rms_error_hz"] = format_number(rms);
        check(out, rms < 300, "triangle RMS error " + format_number(rms) + " Hz >= 300 Hz");
    } else if (id == "fig4f") {
        EnvConfig env = default_env(StagePreset::SbsCoilLocked);
        auto cfg = stability_servo(StagePreset::SbsCoilLocked);
        std::size_t n = 12000, warm = 600;
        auto r = dual_clock_run(n, env, seed, seed + 1, seed + 2, cfg, {}, {}, warm);
        CsvTable t{"dualclock.csv", {"t_s", "clock_a_hz", "clock_b_hz", "difference_hz"}, {}};
        for (std::size_t i = 0; i < n; ++i)
            t.add({r.a.t_s[i], r.a.correction_hz[i], r.b.correction_hz[i], r.difference_hz[i]});
        out.tables.push_back(t);
        std::vector<double> d(r.difference_hz.begin() + static_cast<long>(warm), r.difference_hz.end());
        for (double& x : d)
            x /= std::sqrt(2.0);
        auto a = allan_deviation(d, 1.0 / r.cycle_pair_s, kCarrierHz);
        out.tables.push_back(adev_table(a));
        double c = fit_white_coefficient(a, 1.0, 20.0);
        out.summary["rms_difference_hz"] = format_number(r.rms_difference_hz);
        out.summary["adev_coefficient_1s"] = format_number(c);
        check(out, r.rms_difference_hz >= 125 && r.rms_difference_hz <= 500, "RMS difference outside 250 Hz x/ 2");
        check(out, c >= 2.5e-13 && c <= 1e-12, "ADEV coefficient outside [2.5e-13, 1e-12]");
    } else if (id == "fig5c") {
        CsvTable t{"spam.csv", {"chain", "shelving_pulses", "fidelity", "overlap"}, {}};
        std::map<std::string, int> need;
        for (auto p : {StagePreset::SbsCoilLocked, StagePreset::PumpCoilLocked}) {
            EnvConfig env = default_env(p);
            need[preset_name(p)] = minimum_shelving_pulses(env, seed);
            for (int k = 1; k <= 4; ++k) {
                SpamConfig sc;
                sc.shelving_pulses = k;
                auto r = spam_experiment(1000, env, seed, sc);
                t.rows.push_back({preset_name(p), std::to_string(k), format_number(r.fidelity), format_number(r.overlap)});
            }
        }
        out.tables.push_back(t);
        out.summary["pulses_sbs_coil"] = std::to_string(need["sbs_coil"]);
        out.summary["pulses_pump_coil"] = std::to_string(need["pump_coil"]);
        check(out, need["sbs_coil"] > 0 && need["pump_coil"] > 0, "0.99 SPAM not reached");
        check(out, need["sbs_coil"] < need["pump_coil"], "SBS chain does not need fewer shelving pulses");
    } else if (id == "fig5d") {
        auto tab = zeeman_table(5.9);
        CsvTable t{"zeeman.csv", {"label", "two_ms", "two_md", "sideband", "detuning_hz"}, {}};
        for (const auto& e : tab.entries)
            t.rows.push_back({e.label(), std::to_string(e.two_ms), std::to_string(e.two_md),
                              std::to_string(e.sideband), format_number(e.detuning_hz)});
        out.tables.push_back(t);
        check(out, within(tab.find(1, -3).detuning_hz, -6.67e6, 0.4 / 6.67), "S(+1/2)->D(-3/2) not at -6.67 MHz");
        check(out, within(tab.find(1, -1).detuning_hz, 3e6, 0.4 / 3), "S(+1/2)->D(-1/2) not at +3 MHz");
        check(out, within(tab.find(-1, -3).detuning_hz, 10e6, 0.04), "S(-1/2)->D(-3/2) not at +10 MHz");
    } else if (id == "fig6c") {
        CsvTable t{"spectroscopy.csv", {"chain", "detuning_hz", "p", "stderr", "n"}, {}};
        for (auto [p, target] : {std::pair{StagePreset::SbsCoilLocked, 6e3}, std::pair{StagePreset::PumpCoilLocked, 12e3}}) {
            InterleaveSchedule is;
            is.enabled = true;
            is.clock = interleave_servo(p);
            double span = p == StagePreset::SbsCoilLocked ? 20e3 : 40e3;
            auto r = waterfall_spectroscopy(ScanPlan::uniform(-span, span, 61, 50), default_env(p), seed, {}, is);
            for (const auto& pt : r.points)
                t.rows.push_back({preset_name(p), format_number(pt.detuning_hz), format_number(pt.p),
                                  format_number(pt.stderr_p), std::to_string(pt.n)});
            double w = r.fit ? r.fit->fwhm_hz : 0;
            out.summary["fwhm_" + preset_name(p)] = format_number(w);
            check(out, within(w, target, 0.3), preset_name(p) + " FWHM " + format_number(w) + " Hz");
        }
        out.tables.push_back(t);
    } else if (id == "fig6e") {
        CsvTable t{"ramsey.csv", {"chain", "delay_s", "contrast"}, {}};
        for (auto [p, target] : {std::pair{StagePreset::SbsCoilLocked, 60.5e-6}, std::pair{StagePreset::PumpCoilLocked, 33e-6}}) {
            InterleaveSchedule is;
            is.enabled = true;
            is.clock = interleave_servo(p);
            std::vector<double> delays;
            for (int i = 0; i < 10; ++i)
                delays.push_back(i * 12e-6);
            RamseyConfig rc;
            rc.trials = 150;
            auto r = ramsey_scan(delays, phase_grid(8), default_env(p), seed, rc, is);
            for (const auto& pt : r.points)
                t.rows.push_back({preset_name(p), format_number(pt.delay_s), format_number(pt.contrast)});
            double tau = r.decay ? r.decay->tau_coh_s : 0;
            out.summary["tau_" + preset_name(p)] = format_number(tau);
            check(out, within(tau, target, 0.3), preset_name(p) + " coherence time " + format_number(tau * 1e6) + " us");
        }
        out.tables.push_back(t);
    } else if (id == "fig6f") {
        CsvTable t{"rabi.csv", {"chain", "duration_s", "p"}, {}};
        for (auto [p, target] : {std::pair{StagePreset::SbsCoilLocked, 0.92}, std::pair{StagePreset::PumpCoilLocked, 0.80}}) {
            InterleaveSchedule is;
            is.enabled = true;
            is.clock = interleave_servo(p);
            RabiConfig rc;
            rc.trials = 400;
            double tpi = 1.0 / (2 * rc.rabi_hz);
            std::vector<double> d;
            for (int i = 0; i <= 40; ++i)
                d.push_back(i * tpi / 8);
            auto r = rabi_scan(d, default_env(p), seed, rc, is);
            double first = 0;
            for (const auto& pt : r.points) {
                t.rows.push_back({preset_name(p), format_number(pt.duration_s), format_number(pt.p)});
                if (pt.duration_s <= 1.5 * tpi)
                    first = std::max(first, pt.p);
            }
            out.summary["first_max_" + preset_name(p)] = format_number(first);
            check(out, std::abs(first - target) <= 0.05, preset_name(p) + " first maximum " + format_number(first));
        }
        out.tables.push_back(t);
    } else if (id == "drift_step") {
        DriftProcess d = default_coil_drift();
        d.temp_sine_amplitude_k = 0;
        d.residual_random_walk_hz2_per_s = 0;
        d.temp_step_k = 1e-3;
        d.temp_step_time_s = 0;
        auto tr = coil_drift(d, 4000, 1.0, seed);
        CsvTable t{"drift_step.csv", {"t_s", "shift_hz"}, {}};
        for (std::size_t i = 0; i < tr.samples.size(); i += 10)
            t.add({static_cast<double>(i) / tr.rate_hz, tr.samples[i]});
        out.tables.push_back(t);
        double target = 2.5e6 * (1 - std::exp(-1.0));
        double t_e = 0;
        for (std::size_t i = 1; i < tr.samples.size(); ++i)
            if (tr.samples[i] >= target) {
                double f = (target - tr.samples[i - 1]) / (tr.samples[i] - tr.samples[i - 1]);
                t_e = (static_cast<double>(i - 1) + f) / tr.rate_hz;
                break;
            }
        out.summary["asymptote_hz"] = format_number(tr.samples.back());
        out.summary["settle_time_s"] = format_number(t_e);
        check(out, within(tr.samples.back(), 2.5e6, 0.01), "asymptote not 2.5 MHz");
        check(out, within(t_e, 420, 0.01), "1/e time not 420 s");
    } else {
        throw ConfigError("unknown scenario '" + id + "'");
    }
    return out;
}

} // namespace ionlock
