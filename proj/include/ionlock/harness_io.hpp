#pragma once

#include "ionlock/clock_servo.hpp"
#include "ionlock/environment.hpp"
#include "ionlock/experiments.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ionlock {

constexpr const char* kArtifactVersion = "1.0.0";

struct ClockRunConfig {
    ClockServoConfig servo;
    std::size_t cycles = 7500;  // ~60 s single clock
    std::size_t warmup_cycles = 200;
};

struct SpectroscopyRunConfig {
    double lo_hz = -20000;
    double hi_hz = 20000;
    int points = 61;
    int trials = 50;
    ScanOrder order = ScanOrder::Waterfall;
    SpectroscopyConfig probe;
};

struct RabiRunConfig {
    double max_duration_s = 200e-6;
    int points = 41;
    RabiConfig rabi;
};

struct RamseyRunConfig {
    std::vector<double> delays_s{0, 15e-6, 30e-6, 45e-6, 60e-6, 75e-6, 90e-6, 105e-6};
    int phases = 8;
    RamseyConfig ramsey;
};

struct SpamRunConfig {
    int shots = 1000;
    SpamConfig spam;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string chain = "sbs_coil"; // preset name; "custom" when custom_laser is set
    bool custom_laser = false;
    EnvConfig env;                   // fully resolved
    std::string output_dir = "out";
    ClockRunConfig clock;
    InterleaveSchedule interleave;
    SpectroscopyRunConfig spectroscopy;
    RabiRunConfig rabi;
    RamseyRunConfig ramsey;
    SpamRunConfig spam;

    // dotted paths of every field that took its default value
    std::vector<std::string> defaulted;
};

// Parses JSON text. Unknown keys and type errors are ConfigError with the field
// path; syntax errors carry line and column. A missing seed is an error.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

// Canonical JSON of a resolved config (no provenance).
std::string dump_config(const RunConfig& cfg);
// Defaults merged into a user config, in canonical form.
std::string normalize_config(const std::string& text);
// Canonical JSON of the defaults for a chain, with the given seed.
std::string default_config_json(const std::string& chain = "sbs_coil", std::uint64_t seed = 0);

struct CsvTable {
    std::string name; // file name, e.g. "spectrum.csv"
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(const std::vector<double>& row);
    std::string render() const;
};

std::string format_number(double v);

struct RunManifest {
    std::string command;
    std::string config_json;       // resolved snapshot
    std::vector<std::string> defaulted;
    std::map<std::string, std::string> input_hashes; // name -> sha256 hex
    std::vector<std::pair<std::string, std::string>> outputs; // file -> sha256 (filled by emit_results)
    std::map<std::string, std::string> summary;     // scalar results
    double wall_time_s = 0;

    std::string to_json() const; // includes manifest_hash (over everything but wall_time_s)
    std::string content_hash() const;
};

std::string sha256_hex(const std::string& bytes);

// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& content);

// Writes each table and then manifest.json into dir. Returns the written paths.
std::vector<std::string> emit_results(const std::string& dir, const std::vector<CsvTable>& tables,
                                      RunManifest& manifest);

struct CommandOutput {
    std::vector<CsvTable> tables;
    std::map<std::string, std::string> summary;
    bool check_failed = false; // for reproduce scenarios with a reference check
    std::string check_message;
};

// Config-driven runs (clock, dualclock, spectroscopy, rabi, ramsey, spam).
CommandOutput run_command(const std::string& command, const RunConfig& cfg);

// Canned reproduction scenarios.
std::vector<std::string> scenario_ids();
CommandOutput run_scenario(const std::string& id, std::uint64_t seed);

} // namespace ionlock
