#include "ionlock/errors.hpp"
#include "ionlock/harness_io.hpp"
#include "ionlock/ion_physics.hpp"
#include "ionlock/laser_chain.hpp"
#include "ionlock/metrology.hpp"
#include "ionlock/noise_synthesis.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace ionlock;

namespace {

NoiseModel model_arg(const std::string& preset_or_json)
{
    if (!preset_or_json.empty() && preset_or_json.front() == '{')
        return model_from_json(preset_or_json);
    return preset_model(parse_preset(preset_or_json));
}

py::dict command_dict(const CommandOutput& out)
{
    py::dict tables;
    for (const auto& t : out.tables)
        tables[py::str(t.name)] = t.render();
    py::dict d;
    d["tables"] = tables;
    d["summary"] = out.summary;
    d["check_failed"] = out.check_failed;
    d["check_message"] = out.check_message;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "ion clock laser-chain simulation core";
    m.attr("__version__") = kArtifactVersion;

    static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
    static py::exception<NumericalError> numerical_error(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p)
                std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            config_error(e.what());
        } catch (const NumericalError& e) {
            numerical_error(e.what());
        }
    });

    m.def("presets", [] {
        std::vector<std::string> v;
        for (auto p : {StagePreset::PumpFree, StagePreset::SbsFree, StagePreset::SbsCoilLocked, StagePreset::PumpCoilLocked})
            v.push_back(preset_name(p));
        return v;
    });
    m.def("preset_json", [](const std::string& name) { return model_to_json(preset_model(parse_preset(name))); },
          py::arg("name"));
    m.def(
        "evaluate_psd",
        [](const std::string& model, const std::vector<double>& f) { return evaluate_psd(model_arg(model), f); },
        py::arg("model"), py::arg("freq_hz"), "one-sided frequency-noise PSD (Hz^2/Hz); model is a preset name or JSON");
    m.def(
        "synthesize_trace",
        [](const std::string& model, double duration_s, double rate_hz, std::uint64_t seed) {
            auto tr = synthesize_trace(model_arg(model), duration_s, rate_hz, seed);
            return py::array_t<double>(static_cast<py::ssize_t>(tr.samples.size()), tr.samples.data());
        },
        py::arg("model"), py::arg("duration_s"), py::arg("rate_hz"), py::arg("seed"));
    m.def(
        "allan_deviation",
        [](const std::vector<double>& y, double rate_hz, double carrier_hz, std::vector<double> taus) {
            auto a = allan_deviation(y, rate_hz, carrier_hz, std::move(taus));
            py::dict d;
            d["taus"] = a.taus;
            d["sigma_y"] = a.sigma_y;
            d["n"] = a.n_samples;
            d["omitted_taus"] = a.omitted_taus;
            return d;
        },
        py::arg("freq_hz"), py::arg("rate_hz"), py::arg("carrier_hz"), py::arg("taus") = std::vector<double>{});
    m.def(
        "linewidths",
        [](const std::string& model, double f_min, double f_max) {
            auto r = linewidth_report(model_arg(model), f_min, f_max);
            py::dict d;
            d["flw_hz"] = r.flw_hz;
            d["ilw_one_over_pi_hz"] = r.ilw_one_over_pi_hz;
            d["ilw_beta_hz"] = r.ilw_beta_hz;
            return d;
        },
        py::arg("model"), py::arg("f_min"), py::arg("f_max"));
    m.def(
        "fit_lineshape",
        [](const std::vector<double>& x, const std::vector<double>& p) {
            if (x.size() != p.size())
                throw ConfigError("fit_lineshape: x and p differ in length");
            std::vector<std::pair<double, double>> pts;
            for (std::size_t i = 0; i < x.size(); ++i)
                pts.emplace_back(x[i], p[i]);
            auto f = fit_lineshape(pts);
            py::dict d;
            d["center_hz"] = f.center_hz;
            d["fwhm_hz"] = f.fwhm_hz;
            d["amplitude"] = f.amplitude;
            d["residual_rms"] = f.residual_rms;
            return d;
        },
        py::arg("detuning_hz"), py::arg("p"));
    m.def("rabi_probability", &rabi_probability, py::arg("rabi_hz"), py::arg("detuning_hz"), py::arg("duration_s"));
    m.def(
        "zeeman_table",
        [](double b) {
            std::vector<py::dict> rows;
            for (const auto& e : zeeman_table(b).entries) {
                py::dict d;
                d["label"] = e.label();
                d["two_ms"] = e.two_ms;
                d["two_md"] = e.two_md;
                d["sideband"] = e.sideband;
                d["detuning_hz"] = e.detuning_hz;
                rows.push_back(d);
            }
            return rows;
        },
        py::arg("b_gauss"));
    m.def("default_config", &default_config_json, py::arg("chain") = "sbs_coil", py::arg("seed") = 0);
    m.def("normalize_config", &normalize_config, py::arg("text"));
    m.def(
        "run",
        [](const std::string& command, const std::string& config_text) {
            auto cfg = parse_config(config_text);
            CommandOutput out;
            {
                py::gil_scoped_release nogil;
                out = run_command(command, cfg);
            }
            return command_dict(out);
        },
        py::arg("command"), py::arg("config_json"));
    m.def("scenarios", &scenario_ids);
    m.def(
        "reproduce",
        [](const std::string& id, std::uint64_t seed) {
            CommandOutput out;
            {
                py::gil_scoped_release nogil;
                out = run_scenario(id, seed);
            }
            return command_dict(out);
        },
        py::arg("figure"), py::arg("seed") = 1);
}
