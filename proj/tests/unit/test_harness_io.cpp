#include "ionlock/errors.hpp"
#include "ionlock/harness_io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ionlock;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("ionlock_hio_" + name);
    fs::remove_all(p);
    return p;
}

std::string config_error(const std::string& text)
{
    try {
        parse_config(text, "cfg.json");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("minimal config resolves every default")
{
    auto c = parse_config(R"({"seed": 7, "chain": "sbs_coil"})");
    CHECK(c.seed == 7);
    CHECK(c.chain == "sbs_coil");
    CHECK(!c.custom_laser);
    CHECK(c.env.excess_white_hz2_per_hz == kExcessWhiteSbs);
    CHECK(c.env.b_field_gauss == 5.9);
    CHECK(c.clock.servo.half_width_hz == 3000);
    CHECK(c.interleave.clock.gain == kInterleaveGainHz);
    // provenance: chain and seed were given, everything else defaulted
    CHECK(std::find(c.defaulted.begin(), c.defaulted.end(), "seed") == c.defaulted.end());
    CHECK(std::find(c.defaulted.begin(), c.defaulted.end(), "chain") == c.defaulted.end());
    CHECK(std::find(c.defaulted.begin(), c.defaulted.end(), "env.b_field_gauss") != c.defaulted.end());
    CHECK(std::find(c.defaulted.begin(), c.defaulted.end(), "clock.servo.gain") != c.defaulted.end());

    auto coil = parse_config(R"({"seed": 1, "chain": "pump_coil"})");
    CHECK(coil.env.excess_white_hz2_per_hz == kExcessWhitePump);
    CHECK(coil.clock.servo.half_width_hz == 6000);
}

TEST_CASE("config errors name the field")
{
    CHECK(config_error(R"({"chain": "sbs_coil"})").find("seed") != std::string::npos);
    CHECK(config_error(R"({"seed": 1, "colour": 2})").find("colour: unknown key") != std::string::npos);
    CHECK(config_error(R"({"seed": 1, "env": {"b_feld_gauss": 2}})").find("env.b_feld_gauss") != std::string::npos);
    CHECK(config_error(R"({"seed": 1, "env": {"b_field_gauss": "high"}})").find("env.b_field_gauss: expected a number")
          != std::string::npos);
    CHECK(config_error(R"({"seed": -1})").find("seed") != std::string::npos);
    CHECK(config_error(R"({"seed": 1, "chain": "nope"})").find("unknown preset") != std::string::npos);
    CHECK(config_error(R"({"seed": 1, "env": {"rabi_spread": 3}})").find("rabi_spread") != std::string::npos);
    CHECK(config_error(R"({"seed": 1, "clock": {"servo": {"two_md": 5}}})").find("|dm|") != std::string::npos);
    // syntax errors carry line and column
    std::string e = config_error("{\"seed\": 1,\n  \"env\": {\"b_field_gauss\": }\n}");
    CHECK(e.find("cfg.json:2:") == 0);
    CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("B field override feeds the Zeeman table")
{
    auto c = parse_config(R"({"seed": 1, "env": {"b_field_gauss": 5.9}})");
    auto t = zeeman_table(c.env.b_field_gauss, c.env.ion);
    CHECK(t.find(1, -3).detuning_hz == doctest::Approx(-6.67e6).epsilon(0.4 / 6.67));
    CHECK(t.find(1, -1).detuning_hz == doctest::Approx(3e6).epsilon(0.4 / 3));
    CHECK(t.find(-1, -3).detuning_hz == doctest::Approx(10e6).epsilon(0.04));
    auto c2 = parse_config(R"({"seed": 1, "env": {"b_field_gauss": 3.0}})");
    CHECK(c2.env.b_field_gauss == 3.0);
}

TEST_CASE("round trip: dump(load(c)) == normalize(c)")
{
    const char* configs[] = {
        R"({"seed": 3})",
        R"({"seed": 4, "chain": "pump_coil", "spam": {"shots": 500}})",
        R"({"seed": 5, "env": {"injection": {"kind": "triangle", "amplitude_hz": 20000, "rate_hz_per_s": 4000}}})",
        R"({"seed": 6, "laser": {"h": {"0": 100.0}}, "env": {"drift_enabled": false}})",
        R"({"seed": 7, "ramsey": {"delays_s": [0, 1e-5, 2e-5]}})",
    };
    for (const char* text : configs) {
        auto c = parse_config(text);
        CHECK(dump_config(c) == normalize_config(text));
        // and the dump is a fixed point
        CHECK(dump_config(parse_config(dump_config(c))) == dump_config(c));
    }
    auto custom = parse_config(configs[3]);
    CHECK(custom.custom_laser);
    CHECK(custom.chain == "custom");
    CHECK(custom.env.laser.h_alpha(0) == 100.0);
    // defaults oracle
    CHECK(normalize_config(R"({"seed": 0})") == default_config_json("sbs_coil", 0));
}

TEST_CASE("CSV rendering")
{
    CsvTable t{"x.csv", {"a", "b"}, {}};
    CHECK(t.render() == "a,b\n");
    t.add({1.0, 0.1});
    t.add({-2.5e-9, 1e12});
    CHECK(t.render() == "a,b\n1,0.1\n-2.5e-09,1e+12\n");
    t.rows.push_back({"1"});
    CHECK_THROWS(t.render());
    CHECK(format_number(std::nan("")) == "nan");
}

TEST_CASE("sha256")
{
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("empty result set: header-only CSV and a valid manifest")
{
    auto dir = scratch("empty");
    RunManifest m;
    m.command = "test";
    auto files = emit_results(dir.string(), {CsvTable{"spectrum.csv", {"detuning_hz", "p", "stderr", "n"}, {}}}, m);
    CHECK(files.size() == 2);
    CHECK(slurp(dir / "spectrum.csv") == "detuning_hz,p,stderr,n\n");
    auto j = json::parse(slurp(dir / "manifest.json"));
    CHECK(j["version"] == kArtifactVersion);
    CHECK(j["outputs"].size() == 1);
    CHECK(j["outputs"][0]["sha256"] == sha256_hex("detuning_hz,p,stderr,n\n"));
    CHECK(j.contains("wall_time_s"));
    CHECK(j["manifest_hash"] == m.content_hash());
    // no temp files left behind
    for (const auto& e : fs::directory_iterator(dir))
        CHECK(e.path().extension() != ".tmp");
    fs::remove_all(dir);
}

TEST_CASE("IO failures carry the path")
{
    RunManifest m;
    try {
        emit_results("/proc/ionlock_cannot_write", {}, m);
        FAIL("expected an exception");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("/proc/ionlock_cannot_write") != std::string::npos);
    }
}

TEST_CASE("spectroscopy run: schema and rerun stability")
{
    auto cfg = parse_config(R"({"seed": 11, "spectroscopy": {"points": 11, "trials": 4}})");
    auto a = run_command("spectroscopy", cfg);
    REQUIRE(a.tables.size() == 1);
    CHECK(a.tables[0].name == "spectrum.csv");
    CHECK(a.tables[0].columns == std::vector<std::string>{"detuning_hz", "p", "stderr", "n"});
    CHECK(a.tables[0].rows.size() == 11);

    auto d1 = scratch("run1"), d2 = scratch("run2");
    RunManifest m1, m2;
    m1.command = m2.command = "spectroscopy";
    m1.config_json = m2.config_json = dump_config(cfg);
    m1.defaulted = m2.defaulted = cfg.defaulted;
    m1.summary = a.summary;
    m1.wall_time_s = 1.0;
    emit_results(d1.string(), a.tables, m1);
    auto b = run_command("spectroscopy", cfg);
    m2.summary = b.summary;
    m2.wall_time_s = 2.0;
    emit_results(d2.string(), b.tables, m2);
    CHECK(slurp(d1 / "spectrum.csv") == slurp(d2 / "spectrum.csv"));
    CHECK(m1.content_hash() == m2.content_hash());
    auto j = json::parse(slurp(d1 / "manifest.json"));
    CHECK(j["defaulted"].size() == cfg.defaulted.size());
    CHECK(j["config"]["seed"] == 11);
    fs::remove_all(d1);
    fs::remove_all(d2);
    CHECK_THROWS_AS(run_command("teleport", cfg), ConfigError);
}

TEST_CASE("reproduction scenarios are listed and checked")
{
    auto ids = scenario_ids();
    CHECK(std::find(ids.begin(), ids.end(), "fig5d") != ids.end());
    auto z = run_scenario("fig5d", 1);
    CHECK(!z.check_failed);
    auto d = run_scenario("drift_step", 1);
    CHECK(!d.check_failed);
    CHECK_THROWS_AS(run_scenario("fig99", 1), ConfigError);
}

TEST_CASE("golden preset files match the frozen models")
{
    const char* dir = std::getenv("IONLOCK_PRESET_DIR");
    REQUIRE(dir != nullptr);
    for (auto p : {StagePreset::PumpFree, StagePreset::SbsFree, StagePreset::SbsCoilLocked, StagePreset::PumpCoilLocked}) {
        auto path = fs::path(dir) / (preset_name(p) + ".json");
        REQUIRE(fs::exists(path));
        auto golden = model_from_json(slurp(path));
        CHECK(model_to_json(golden) == model_to_json(preset_model(p)));
    }
    auto cfg_path = fs::path(dir) / "default_config.json";
    REQUIRE(fs::exists(cfg_path));
    CHECK(slurp(cfg_path) == default_config_json("sbs_coil", 0));
}
