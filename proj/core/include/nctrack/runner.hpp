#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nctrack/metrics.hpp"
#include "nctrack/mht.hpp"
#include "nctrack/sim.hpp"

namespace nctrack {

enum class RunMode { Nc, FreeSpace, Both };

/// One experiment: a scenario, tracker mode(s), Monte Carlo replication.
struct RunSpec {
    std::string scenario;     // preset "1", "2", "3a", "3b"
    std::string config_path;  // scenario or manifest document instead
    RunMode mode = RunMode::Both;
    int mc_runs = 50;
    std::uint64_t seed = 0;
    std::string out_dir;
    int workers = 1;
    int sensors_override = -1;
    double empty_fraction_override = -1.0;
    bool export_streams = false;
    std::map<std::string, double> overrides;  // "tracker.<k>" / "scenario.<k>"
};

struct ModeResults {
    std::vector<RunSummary> replicas;

    double gospa_sum() const;
    double missed_sum() const;
    double false_sum() const;
    double track_length_mean() const;
};

struct RunOutput {
    std::optional<ModeResults> nc;
    std::optional<ModeResults> freespace;
    std::string out_dir;
};

/// Tracker parameterization derived from the scenario: false-alarm density
/// over the 1-D footprint (or the 2-D view disc in free-space mode), the
/// new-track ratio from the birth and clutter densities, and the defaults
/// for gating, pruning and confirmation.
TrackerParams derive_tracker_params(const ScenarioConfig& cfg,
                                    const RoadNetwork& net, TrackerMode mode,
                                    const std::map<std::string, double>& overrides = {});

/// Runs one tracker over a prepared scan stream, scoring GOSPA against the
/// ground truth each step. `step_out`, when given, receives the per-step
/// series. `confirmed_out` receives the confirmed tree ids per step.
RunSummary run_tracker(TrackerMode mode, const RoadNetwork& net,
                       const ScenarioConfig& cfg, const SimOutput& sim,
                       const TrackerParams& params,
                       std::vector<StepMetrics>* step_out = nullptr,
                       std::vector<std::vector<int>>* confirmed_out = nullptr,
                       bool with_gospa = true);

/// Full experiment: simulate per replica (seed + replica index), run the
/// requested tracker modes over identical scans, write summary, aggregate,
/// series and manifest files under spec.out_dir.
RunOutput run(const RunSpec& spec);

struct ReplaySpec {
    std::string scans_path;
    std::string truth_path;  // empty: telemetry only, GOSPA omitted
    std::string network_path;
    std::string config_path;  // scenario document for parameter derivation
    RunMode mode = RunMode::Nc;
    std::string out_dir;
    std::map<std::string, double> overrides;
};

/// Feeds recorded scans through the tracker; equals the live run bit for
/// bit when the streams came from the same scenario replica.
RunOutput replay(const ReplaySpec& spec);

}  // namespace nctrack
