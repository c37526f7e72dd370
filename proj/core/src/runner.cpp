#include "nctrack/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "nctrack/streams.hpp"

namespace nctrack {

namespace fs = std::filesystem;
using nlohmann::json;

double ModeResults::gospa_sum() const {
    double s = 0.0;
    for (const auto& r : replicas) s += r.gospa_sum;
    return s;
}
double ModeResults::missed_sum() const {
    double s = 0.0;
    for (const auto& r : replicas) s += static_cast<double>(r.missed_sum);
    return s;
}
double ModeResults::false_sum() const {
    double s = 0.0;
    for (const auto& r : replicas) s += static_cast<double>(r.false_sum);
    return s;
}
double ModeResults::track_length_mean() const {
    if (replicas.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : replicas) s += r.track_length_mean;
    return s / replicas.size();
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double take_override(std::map<std::string, double> ov, const std::string& key,
                     double fallback) {
    const auto it = ov.find(key);
    return it == ov.end() ? fallback : it->second;
}

}  // namespace

TrackerParams derive_tracker_params(const ScenarioConfig& cfg,
                                    const RoadNetwork& net, TrackerMode mode,
                                    const std::map<std::string, double>& ov) {
    TrackerParams p;
    p.p_detect = cfg.p_detect < 1.0 ? cfg.p_detect : 0.999;
    p.p_survive = 1.0;

    const double fov = cfg.fov_half_length;
    if (mode == TrackerMode::NetworkConstrained) {
        p.lambda_fa_density = cfg.clutter_rate / (2.0 * fov);
        p.lambda_nt_density = cfg.birth_rate / net.total_length();
        p.gate.mode = Gate::Mode::Scalar;
    } else {
        // The planar view is a disc of radius fov.
        p.lambda_fa_density = cfg.clutter_rate / (std::numbers::pi * fov * fov);
        p.lambda_nt_density = 0.0;
        p.gate.mode = Gate::Mode::Ellipsoidal;
    }
    p.gate.kappa = 3.0;
    p.gate.gamma_g = chi2_quantile_2dof(0.99);

    // New-track likelihood ratio: birth density over clutter density, with
    // a mild floor so scenarios without modeled births still initiate.
    if (mode == TrackerMode::NetworkConstrained && p.lambda_nt_density > 0.0)
        p.gamma_nt = p.lambda_nt_density / p.lambda_fa_density;
    else
        p.gamma_nt = 0.1;

    p.max_hyp_per_cluster = 50;
    p.min_rel_score = 4.0;
    p.nscan = 3;
    p.confirm_hits = 2;
    p.leak_threshold = 0.01;
    p.always_split = false;

    // Flat key=value overrides.
    p.p_detect = take_override(ov, "tracker.p_detect", p.p_detect);
    p.p_survive = take_override(ov, "tracker.p_survive", p.p_survive);
    p.lambda_fa_density =
        take_override(ov, "tracker.lambda_fa_density", p.lambda_fa_density);
    p.gamma_nt = take_override(ov, "tracker.gamma_nt", p.gamma_nt);
    p.max_hyp_per_cluster = static_cast<int>(take_override(
        ov, "tracker.max_hyp_per_cluster", p.max_hyp_per_cluster));
    p.min_rel_score = take_override(ov, "tracker.min_rel_score", p.min_rel_score);
    p.nscan = static_cast<int>(take_override(ov, "tracker.nscan", p.nscan));
    p.confirm_hits =
        static_cast<int>(take_override(ov, "tracker.confirm_hits", p.confirm_hits));
    p.leak_threshold =
        take_override(ov, "tracker.leak_threshold", p.leak_threshold);
    p.always_split = take_override(ov, "tracker.always_split", 0.0) != 0.0;
    p.gate.kappa = take_override(ov, "tracker.kappa", p.gate.kappa);
    p.gate.gamma_g = take_override(ov, "tracker.gamma_g", p.gate.gamma_g);
    p.validate();
    return p;
}

RunSummary run_tracker(TrackerMode mode, const RoadNetwork& net,
                       const ScenarioConfig& cfg, const SimOutput& sim,
                       const TrackerParams& params,
                       std::vector<StepMetrics>* step_out,
                       std::vector<std::vector<int>>* confirmed_out,
                       bool with_gospa) {
    Tracker tracker(mode, net, make_cv_model(cfg.dt, cfg.process_noise_q),
                    make_obs_model(cfg.obs_sigma), params);

    std::vector<StepMetrics> steps(cfg.duration);
    std::vector<std::vector<int>> confirmed_ids(cfg.duration);

    std::size_t cursor = 0;
    const GospaParams gp;
    for (int k = 0; k < cfg.duration; ++k) {
        int n_scans = 0;
        double clusters = 0.0;
        while (cursor < sim.scans.size() && sim.scans[cursor].time == k) {
            const ScanStats st = tracker.process_scan(sim.scans[cursor]);
            clusters += st.clusters;
            ++n_scans;
            ++cursor;
        }
        if (n_scans == 0) tracker.predict_to(k);

        StepMetrics& sm = steps[k];
        sm.trees = tracker.num_trees();
        sm.hypotheses = tracker.num_hypotheses();
        sm.clusters = n_scans > 0 ? clusters / n_scans : 0.0;

        const auto confirmed = tracker.best_global();
        auto& ids = confirmed_ids[k];
        std::vector<Point2> est_points;
        est_points.reserve(confirmed.size());
        for (const auto& ct : confirmed) {
            ids.push_back(ct.tree_id);
            est_points.push_back(ct.world);
        }
        if (with_gospa && k < static_cast<int>(sim.truth.by_step.size()))
            sm.gospa = gospa(sim.truth.world_points(k), est_points, gp);
    }

    const RunSummary summary =
        run_summary(steps, track_length_stats(confirmed_ids));
    if (step_out) *step_out = std::move(steps);
    if (confirmed_out) *confirmed_out = std::move(confirmed_ids);
    return summary;
}

namespace {

const char* mode_tag(TrackerMode m) {
    return m == TrackerMode::NetworkConstrained ? "nc" : "fs";
}

struct ResolvedSpec {
    ScenarioConfig scenario;
    RoadNetwork net;
    json network_doc;  // inline copy for the manifest
    RunMode mode;
    int mc_runs;
    std::uint64_t seed;
    int workers;
    bool export_streams;
    std::map<std::string, double> overrides;
    std::string label;
};

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    return j;
}

RunMode mode_from_string(const std::string& s) {
    if (s == "nc") return RunMode::Nc;
    if (s == "freespace" || s == "fs") return RunMode::FreeSpace;
    if (s == "both") return RunMode::Both;
    throw std::invalid_argument("unknown mode \"" + s + "\"");
}

const char* mode_to_string(RunMode m) {
    switch (m) {
        case RunMode::Nc: return "nc";
        case RunMode::FreeSpace: return "freespace";
        case RunMode::Both: return "both";
    }
    return "both";
}

void apply_scenario_overrides(ScenarioConfig& cfg,
                              const std::map<std::string, double>& ov) {
    for (const auto& [key, value] : ov) {
        if (key == "scenario.duration") cfg.duration = static_cast<int>(value);
        else if (key == "scenario.sensor_count") cfg.sensor_count = static_cast<int>(value);
        else if (key == "scenario.clutter_rate") cfg.clutter_rate = value;
        else if (key == "scenario.birth_rate") cfg.birth_rate = value;
        else if (key == "scenario.empty_scan_fraction") cfg.empty_scan_fraction = value;
        else if (key == "scenario.p_detect") cfg.p_detect = value;
        else if (key == "scenario.obs_sigma") cfg.obs_sigma = value;
        else if (key == "scenario.process_noise_q") cfg.process_noise_q = value;
        else if (key == "scenario.fov_half_length") cfg.fov_half_length = value;
        else if (key == "scenario.random_initial_targets")
            cfg.random_initial_targets = static_cast<int>(value);
        else if (key.rfind("tracker.", 0) != 0)
            throw std::invalid_argument("unknown override key \"" + key + "\"");
    }
}

ResolvedSpec resolve(const RunSpec& spec) {
    ResolvedSpec r;
    r.mode = spec.mode;
    r.mc_runs = spec.mc_runs;
    r.seed = spec.seed;
    r.workers = std::max(1, spec.workers);
    r.export_streams = spec.export_streams;
    r.overrides = spec.overrides;

    if (spec.mc_runs < 1) throw std::invalid_argument("mc_runs must be >= 1");

    if (!spec.config_path.empty()) {
        const json doc = load_json_file(spec.config_path);
        const std::string schema = doc.value("schema", "");
        if (schema == "nctrack-run-v1") {
            // Manifest: fully resolved rerun.
            r.scenario = scenario_from_json(doc.at("scenario").dump());
            r.network_doc = doc.at("network_doc");
            r.net = load_network(r.network_doc.dump());
            r.mode = mode_from_string(doc.at("mode").get<std::string>());
            r.mc_runs = doc.at("mc_runs").get<int>();
            r.seed = doc.at("seed").get<std::uint64_t>();
            for (const auto& [k, v] : doc.value("overrides", json::object()).items())
                r.overrides[k] = v.get<double>();
            r.label = doc.value("label", std::string("run"));
            return r;
        }
        if (schema == "nctrack-scenario-v1") {
            r.scenario = scenario_from_json(doc.dump());
            const fs::path base = fs::path(spec.config_path).parent_path();
            fs::path np = r.scenario.network;
            if (np.is_relative() && !fs::exists(np)) {
                if (fs::exists(base / np)) np = base / np;
                else np = fs::path(data_dir()) / np;
            }
            r.network_doc = load_json_file(np.string());
            r.net = load_network(r.network_doc.dump());
        } else {
            throw std::runtime_error("config: unknown schema \"" + schema + "\"");
        }
    } else if (!spec.scenario.empty()) {
        auto [cfg, net] = build_scenario(spec.scenario, spec.sensors_override,
                                         spec.empty_fraction_override);
        r.scenario = std::move(cfg);
        const fs::path np = fs::path(data_dir()) / r.scenario.network;
        r.network_doc = load_json_file(np.string());
        r.net = load_network(r.network_doc.dump());
    } else {
        throw std::invalid_argument("run: need --scenario or --config");
    }

    if (spec.sensors_override >= 0) r.scenario.sensor_count = spec.sensors_override;
    if (spec.empty_fraction_override >= 0.0)
        r.scenario.empty_scan_fraction = spec.empty_fraction_override;
    apply_scenario_overrides(r.scenario, r.overrides);
    r.scenario.validate();
    r.label = r.scenario.name.empty() ? "run" : r.scenario.name;
    return r;
}

void write_manifest(const ResolvedSpec& r, const fs::path& dir) {
    json doc;
    doc["schema"] = "nctrack-run-v1";
    doc["label"] = r.label;
    doc["scenario"] = json::parse(scenario_to_json(r.scenario));
    doc["network_doc"] = r.network_doc;
    doc["mode"] = mode_to_string(r.mode);
    doc["mc_runs"] = r.mc_runs;
    doc["seed"] = r.seed;
    json ov = json::object();
    for (const auto& [k, v] : r.overrides) ov[k] = v;
    doc["overrides"] = ov;
    std::ofstream out(dir / "manifest.json");
    out << doc.dump(2) << '\n';
}

void write_summary_csv(const fs::path& path,
                       const std::vector<RunSummary>& rows, bool with_gospa) {
    std::ofstream out(path);
    out << "run";
    if (with_gospa) out << ",gospa_sum,nle_sum,missed_sum,false_sum";
    out << ",track_length_mean,confirmed_tracks,trees_mean,clusters_mean,"
           "hypotheses_mean\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const RunSummary& s = rows[i];
        out << i;
        if (with_gospa)
            out << ',' << fmt(s.gospa_sum) << ',' << fmt(s.localization_sum)
                << ',' << s.missed_sum << ',' << s.false_sum;
        out << ',' << fmt(s.track_length_mean) << ',' << s.confirmed_tracks
            << ',' << fmt(s.trees_mean) << ',' << fmt(s.clusters_mean) << ','
            << fmt(s.hypotheses_mean) << '\n';
    }
}

void write_aggregate_csv(const fs::path& path,
                         const std::vector<RunSummary>& rows, bool with_gospa) {
    const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
    auto sum_of = [&](auto f) {
        double s = 0.0;
        for (const auto& r : rows) s += static_cast<double>(f(r));
        return s;
    };
    std::ofstream out(path);
    out << "metric,sum,mean_per_run\n";
    out << "runs," << rows.size() << ',' << rows.size() << '\n';
    if (with_gospa) {
        const double g = sum_of([](const RunSummary& r) { return r.gospa_sum; });
        const double l =
            sum_of([](const RunSummary& r) { return r.localization_sum; });
        const double mt = sum_of([](const RunSummary& r) { return r.missed_sum; });
        const double ft = sum_of([](const RunSummary& r) { return r.false_sum; });
        out << "gospa," << fmt(g) << ',' << fmt(g / n) << '\n';
        out << "nle," << fmt(l) << ',' << fmt(l / n) << '\n';
        out << "missed," << fmt(mt) << ',' << fmt(mt / n) << '\n';
        out << "false," << fmt(ft) << ',' << fmt(ft / n) << '\n';
    }
    const double tl =
        sum_of([](const RunSummary& r) { return r.track_length_mean; });
    const double tm = sum_of([](const RunSummary& r) { return r.trees_mean; });
    const double cm = sum_of([](const RunSummary& r) { return r.clusters_mean; });
    const double hm =
        sum_of([](const RunSummary& r) { return r.hypotheses_mean; });
    out << "track_length," << fmt(tl) << ',' << fmt(tl / n) << '\n';
    out << "trees," << fmt(tm) << ',' << fmt(tm / n) << '\n';
    out << "clusters," << fmt(cm) << ',' << fmt(cm / n) << '\n';
    out << "hypotheses," << fmt(hm) << ',' << fmt(hm / n) << '\n';
}

void write_series(const fs::path& path,
                  const std::vector<std::vector<StepMetrics>>& by_run,
                  bool with_gospa) {
    std::ofstream out(path);
    for (std::size_t r = 0; r < by_run.size(); ++r) {
        for (std::size_t k = 0; k < by_run[r].size(); ++k) {
            const StepMetrics& s = by_run[r][k];
            auto emit = [&](const char* metric, double value) {
                json j;
                j["run"] = r;
                j["step"] = k;
                j["metric"] = metric;
                j["value"] = value;
                out << j.dump() << '\n';
            };
            if (with_gospa) {
                emit("gospa", s.gospa.total);
                emit("localization", s.gospa.localization);
                emit("missed", s.gospa.missed);
                emit("false", s.gospa.false_targets);
            }
            emit("trees", s.trees);
            emit("clusters", s.clusters);
            emit("hypotheses", s.hypotheses);
        }
    }
}

}  // namespace

RunOutput run(const RunSpec& spec) {
    ResolvedSpec r = resolve(spec);
    const fs::path dir = spec.out_dir.empty() ? fs::path("out") / r.label
                                              : fs::path(spec.out_dir);
    fs::create_directories(dir);

    const bool want_nc = r.mode != RunMode::FreeSpace;
    const bool want_fs = r.mode != RunMode::Nc;
    const TrackerParams nc_params = derive_tracker_params(
        r.scenario, r.net, TrackerMode::NetworkConstrained, r.overrides);
    const TrackerParams fs_params = derive_tracker_params(
        r.scenario, r.net, TrackerMode::FreeSpace, r.overrides);

    struct ReplicaOut {
        RunSummary nc, fs;
        std::vector<StepMetrics> nc_steps, fs_steps;
    };
    std::vector<ReplicaOut> results(r.mc_runs);

    std::vector<std::string> stream_files;
    auto run_replica = [&](int idx) {
        ScenarioConfig cfg = r.scenario;
        cfg.rng_seed = r.seed + static_cast<std::uint64_t>(idx);
        const SimOutput sim = simulate(r.net, cfg);
        if (r.export_streams) {
            const fs::path sdir = dir / "streams";
            fs::create_directories(sdir);
            char name[64];
            std::snprintf(name, sizeof(name), "r%03d", idx);
            std::ofstream ts(sdir / (std::string(name) + "_truth.jsonl"));
            write_truth(ts, sim.truth);
            std::ofstream ss(sdir / (std::string(name) + "_scans.jsonl"));
            write_scans(ss, sim.scans);
        }
        if (want_nc)
            results[idx].nc =
                run_tracker(TrackerMode::NetworkConstrained, r.net, cfg, sim,
                            nc_params, &results[idx].nc_steps);
        if (want_fs)
            results[idx].fs = run_tracker(TrackerMode::FreeSpace, r.net, cfg,
                                          sim, fs_params, &results[idx].fs_steps);
    };

    if (r.workers <= 1) {
        for (int i = 0; i < r.mc_runs; ++i) run_replica(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < std::min(r.workers, r.mc_runs); ++w) {
            pool.emplace_back([&]() {
                for (int i = next.fetch_add(1); i < r.mc_runs;
                     i = next.fetch_add(1))
                    run_replica(i);
            });
        }
        for (auto& t : pool) t.join();
    }

    write_manifest(r, dir);

    RunOutput out;
    out.out_dir = dir.string();
    auto emit_mode = [&](TrackerMode tm) {
        const bool is_nc = tm == TrackerMode::NetworkConstrained;
        ModeResults mr;
        std::vector<std::vector<StepMetrics>> series;
        for (const auto& res : results) {
            mr.replicas.push_back(is_nc ? res.nc : res.fs);
            series.push_back(is_nc ? res.nc_steps : res.fs_steps);
        }
        const std::string prefix = r.label + "_" + mode_tag(tm);
        write_summary_csv(dir / (prefix + "_summary.csv"), mr.replicas, true);
        write_aggregate_csv(dir / (prefix + "_aggregate.csv"), mr.replicas, true);
        write_series(dir / (prefix + "_series.jsonl"), series, true);
        return mr;
    };
    if (want_nc) out.nc = emit_mode(TrackerMode::NetworkConstrained);
    if (want_fs) out.freespace = emit_mode(TrackerMode::FreeSpace);
    return out;
}

RunOutput replay(const ReplaySpec& spec) {
    if (spec.scans_path.empty() || spec.network_path.empty() ||
        spec.config_path.empty())
        throw std::invalid_argument("replay: need scans, network and config paths");

    RoadNetwork net = load_network_file(spec.network_path);
    ScenarioConfig cfg;
    {
        std::ifstream in(spec.config_path);
        if (!in) throw std::runtime_error("cannot open " + spec.config_path);
        std::ostringstream ss;
        ss << in.rdbuf();
        const json doc = json::parse(ss.str(), nullptr, true);
        if (doc.value("schema", "") == "nctrack-run-v1")
            cfg = scenario_from_json(doc.at("scenario").dump());
        else
            cfg = scenario_from_json(ss.str());
    }
    apply_scenario_overrides(cfg, spec.overrides);

    SimOutput sim;
    sim.scans = read_scans_file(spec.scans_path);
    const bool with_gospa = !spec.truth_path.empty();
    if (with_gospa) sim.truth = read_truth_file(spec.truth_path, net);

    // Duration: last scan/truth time + 1 (the stream is the authority).
    int duration = 0;
    for (const auto& s : sim.scans) duration = std::max(duration, s.time + 1);
    duration = std::max<int>(duration, static_cast<int>(sim.truth.by_step.size()));
    cfg.duration = std::max(duration, 1);

    const fs::path dir =
        spec.out_dir.empty() ? fs::path("out") / "replay" : fs::path(spec.out_dir);
    fs::create_directories(dir);

    RunOutput out;
    out.out_dir = dir.string();
    auto one_mode = [&](TrackerMode tm) {
        const TrackerParams params =
            derive_tracker_params(cfg, net, tm, spec.overrides);
        std::vector<StepMetrics> steps;
        ModeResults mr;
        mr.replicas.push_back(
            run_tracker(tm, net, cfg, sim, params, &steps, nullptr, with_gospa));
        const std::string prefix = std::string("replay_") + mode_tag(tm);
        write_summary_csv(dir / (prefix + "_summary.csv"), mr.replicas, with_gospa);
        write_aggregate_csv(dir / (prefix + "_aggregate.csv"), mr.replicas,
                            with_gospa);
        write_series(dir / (prefix + "_series.jsonl"), {steps}, with_gospa);
        return mr;
    };
    if (spec.mode != RunMode::FreeSpace) out.nc = one_mode(TrackerMode::NetworkConstrained);
    if (spec.mode != RunMode::Nc) out.freespace = one_mode(TrackerMode::FreeSpace);
    return out;
}

}  // namespace nctrack
