// ionlock command line: synthesis, metrology, experiments and reproduction runs.

#include "ionlock/errors.hpp"
#include "ionlock/harness_io.hpp"
#include "ionlock/laser_chain.hpp"
#include "ionlock/metrology.hpp"
#include "ionlock/noise_synthesis.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace ionlock;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCheck = 4;

std::string read_text(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw ConfigError(path + ": cannot open");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

bool ends_with(const std::string& s, const std::string& suffix)
{
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

FrequencyTrace read_trace(const std::string& path)
{
    return ends_with(path, ".csv") ? read_trace_csv(path) : read_trace_binary(path);
}

NoiseModel resolve_model(const std::string& preset, const std::string& model_path)
{
    if (!model_path.empty())
        return model_from_json(read_text(model_path));
    return preset_model(parse_preset(preset));
}

// Two-column numeric CSV with a header line.
std::vector<std::pair<double, double>> read_pairs(const std::string& path)
{
    std::istringstream is(read_text(path));
    std::string line;
    std::vector<std::pair<double, double>> out;
    bool header = true;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream ls(line);
        std::string a, b;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ','))
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected two columns");
        try {
            out.emplace_back(std::stod(a), std::stod(b));
        } catch (const std::exception&) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number");
        }
    }
    return out;
}

json summary_json(const std::map<std::string, std::string>& s)
{
    json j = json::object();
    for (const auto& [k, v] : s)
        j[k] = v;
    return j;
}

void finish(const std::string& command, const std::string& out_dir, const std::vector<CsvTable>& tables,
            const std::map<std::string, std::string>& summary, const std::string& config_json,
            const std::vector<std::string>& defaulted, const std::map<std::string, std::string>& inputs,
            std::chrono::steady_clock::time_point start)
{
    RunManifest m;
    m.command = command;
    m.config_json = config_json;
    m.defaulted = defaulted;
    m.input_hashes = inputs;
    m.summary = summary;
    m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    emit_results(out_dir, tables, m);
    std::cout << summary_json(summary).dump(2) << "\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"ionlock: ion-clock laser noise and spectroscopy simulator"};
    app.require_subcommand(1);
    auto start = std::chrono::steady_clock::now();
    int exit_code = 0;

    // synth
    std::string preset = "sbs_coil", model_path, out_path, out_dir = "out";
    double duration = 0.01, rate = 2e6;
    std::uint64_t seed = 0;
    bool seed_given = false;
    auto* synth = app.add_subcommand("synth", "synthesize a frequency-noise trace");
    synth->add_option("--preset", preset, "chain preset")->check(CLI::IsMember({"pump_free", "sbs_free", "sbs_coil", "pump_coil"}));
    synth->add_option("--model", model_path, "noise model JSON (overrides --preset)");
    synth->add_option("--duration", duration, "seconds")->check(CLI::PositiveNumber);
    synth->add_option("--rate", rate, "sample rate, Hz")->check(CLI::PositiveNumber);
    synth->add_option("--seed", seed, "root seed")->required();
    synth->add_option("-o,--out", out_path, "output trace (.csv or binary)")->required();

    // psd
    std::string trace_path;
    std::size_t segment = 4096;
    auto* psd = app.add_subcommand("psd", "Welch PSD of a trace");
    psd->add_option("trace", trace_path)->required();
    psd->add_option("--segment", segment, "segment length");
    psd->add_option("-o,--out-dir", out_dir);

    // adev
    double carrier = 4.447e14;
    auto* adev = app.add_subcommand("adev", "overlapping Allan deviation of a trace");
    adev->add_option("trace", trace_path)->required();
    adev->add_option("--carrier", carrier, "carrier frequency, Hz");
    adev->add_option("-o,--out-dir", out_dir);

    // linewidth
    double f_min = 500, f_max = 30e6;
    auto* lw = app.add_subcommand("linewidth", "FLW and integral linewidths of a model");
    lw->add_option("--preset", preset)->check(CLI::IsMember({"pump_free", "sbs_free", "sbs_coil", "pump_coil"}));
    lw->add_option("--model", model_path);
    lw->add_option("--fmin", f_min);
    lw->add_option("--fmax", f_max);

    // fitline
    std::string data_path, shape = "gaussian";
    auto* fitline = app.add_subcommand("fitline", "fit a spectroscopy line (CSV: detuning_hz,p)");
    fitline->add_option("data", data_path)->required();
    fitline->add_option("--model", shape)->check(CLI::IsMember({"gaussian", "sinc2"}));

    // fitcoh
    std::string decay = "exponential";
    auto* fitcoh = app.add_subcommand("fitcoh", "fit Ramsey contrast decay (CSV: delay_s,contrast)");
    fitcoh->add_option("data", data_path)->required();
    fitcoh->add_option("--decay", decay)->check(CLI::IsMember({"exponential", "gaussian"}));

    // config-driven runs
    std::string config_path;
    std::map<std::string, CLI::App*> runs;
    for (const char* name : {"clock", "dualclock", "spectroscopy", "rabi", "ramsey", "spam"}) {
        auto* sc = app.add_subcommand(name, std::string("run ") + name + " from a JSON config");
        sc->add_option("config", config_path, "JSON config (seed is required)")->required();
        sc->add_option("-o,--out-dir", out_dir, "output directory (overrides output_dir)");
        runs[name] = sc;
    }

    // reproduce
    std::string figure;
    auto* repro = app.add_subcommand("reproduce", "run a canned reproduction scenario");
    repro->add_option("figure", figure)->required()->check(CLI::IsMember(scenario_ids()));
    auto* seed_opt = repro->add_option("--seed", seed, "root seed (default 1)");
    repro->add_option("-o,--out-dir", out_dir);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    seed_given = seed_opt->count() > 0;

    try {
        if (*synth) {
            auto tr = synthesize_trace(resolve_model(preset, model_path), duration, rate, seed);
            if (ends_with(out_path, ".csv"))
                write_trace_csv(out_path, tr);
            else
                write_trace_binary(out_path, tr);
            std::cout << json{{"samples", tr.samples.size()}, {"rate_hz", tr.rate_hz}, {"model", tr.model_id}}.dump(2)
                      << "\n";
        } else if (*psd) {
            auto tr = read_trace(trace_path);
            auto est = estimate_psd(tr, segment);
            CsvTable t{"psd.csv", {"freq_hz", "psd_hz2_per_hz"}, {}};
            for (std::size_t i = 0; i < est.freq_hz.size(); ++i)
                t.add({est.freq_hz[i], est.psd[i]});
            finish("psd", out_dir, {t}, {{"segments", std::to_string(est.segments)}}, "", {},
                   {{trace_path, sha256_hex(read_text(trace_path))}}, start);
        } else if (*adev) {
            auto tr = read_trace(trace_path);
            auto a = allan_deviation(tr, carrier);
            CsvTable t{"adev.csv", {"tau_s", "sigma_y", "n"}, {}};
            for (std::size_t i = 0; i < a.taus.size(); ++i)
                t.add({a.taus[i], a.sigma_y[i], static_cast<double>(a.n_samples[i])});
            std::map<std::string, std::string> s{{"points", std::to_string(a.taus.size())}};
            if (a.warning)
                s["warning"] = "some requested taus were dropped";
            finish("adev", out_dir, {t}, s, "", {}, {{trace_path, sha256_hex(read_text(trace_path))}}, start);
        } else if (*lw) {
            auto rep = linewidth_report(resolve_model(preset, model_path), f_min, f_max);
            std::cout << json{{"flw_hz", rep.flw_hz},
                              {"ilw_one_over_pi_hz", rep.ilw_one_over_pi_hz},
                              {"ilw_beta_hz", rep.ilw_beta_hz},
                              {"band_hz", {rep.band.first, rep.band.second}}}
                             .dump(2)
                      << "\n";
        } else if (*fitline) {
            auto fit = fit_lineshape(read_pairs(data_path), shape == "gaussian" ? LineModel::Gaussian
                                                                                 : LineModel::SincSquared);
            std::cout << json{{"center_hz", fit.center_hz},
                              {"fwhm_hz", fit.fwhm_hz},
                              {"raw_fwhm_hz", fit.raw_fwhm_hz},
                              {"amplitude", fit.amplitude},
                              {"residual_rms", fit.residual_rms},
                              {"converged", fit.converged}}
                             .dump(2)
                      << "\n";
        } else if (*fitcoh) {
            auto pairs = read_pairs(data_path);
            std::vector<double> d, c;
            for (auto [x, y] : pairs) {
                d.push_back(x);
                c.push_back(y);
            }
            auto fit = fit_contrast_decay(d, c, decay == "exponential" ? DecayModel::Exponential
                                                                       : DecayModel::Gaussian);
            std::cout << json{{"tau_coh_s", fit.tau_coh_s},
                              {"contrast_0", fit.contrast_0},
                              {"linewidth_hz", coherence_linewidth(fit.tau_coh_s)},
                              {"residual_rms", fit.residual_rms}}
                             .dump(2)
                      << "\n";
        } else if (*repro) {
            if (!seed_given)
                seed = 1;
            auto out = run_scenario(figure, seed);
            out.summary["seed"] = std::to_string(seed);
            out.summary["check"] = out.check_failed ? "failed: " + out.check_message : "passed";
            finish("reproduce " + figure, out_dir, out.tables, out.summary, "", {}, {}, start);
            if (out.check_failed) {
                std::cerr << "check failed: " << out.check_message << "\n";
                exit_code = kExitCheck;
            }
        } else {
            for (const auto& [name, sc] : runs) {
                if (!*sc)
                    continue;
                RunConfig cfg = load_config(config_path);
                std::string dir = sc->get_option("--out-dir")->count() ? out_dir : cfg.output_dir;
                auto out = run_command(name, cfg);
                finish(name, dir, out.tables, out.summary, dump_config(cfg), cfg.defaulted,
                       {{config_path, sha256_hex(read_text(config_path))}}, start);
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}
