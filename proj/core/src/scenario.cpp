#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "nctrack/sim.hpp"

#ifndef NCTRACK_DATA_DIR
#define NCTRACK_DATA_DIR "data"
#endif

namespace nctrack {

namespace {

using nlohmann::json;

SpeedDist speed_from(const json& j, const SpeedDist& fallback) {
    if (j.is_null()) return fallback;
    return {j.value("mean", fallback.mean), j.value("sd", fallback.sd)};
}

}  // namespace

ScenarioConfig scenario_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("scenario: parse error: ") + e.what());
    }
    if (doc.value("schema", "") != "nctrack-scenario-v1")
        throw std::runtime_error(
            "scenario: missing or unknown schema (expected \"nctrack-scenario-v1\")");

    ScenarioConfig c;
    c.name = doc.value("name", "");
    c.network = doc.value("network", "");
    c.duration = doc.value("duration", c.duration);
    if (doc.contains("initial_targets")) {
        for (const auto& jt : doc["initial_targets"]) {
            ScenarioConfig::InitialTarget t;
            t.segment = jt.at("segment").get<SegmentId>();
            t.position = jt.at("position").get<double>();
            t.speed = jt.value("speed", 1.415);
            c.initial_targets.push_back(t);
        }
    }
    c.random_initial_targets =
        doc.value("random_initial_targets", c.random_initial_targets);
    c.target_speed = speed_from(doc.value("target_speed", json()), c.target_speed);
    c.sensor_count = doc.value("sensor_count", c.sensor_count);
    c.sensor_speed = speed_from(doc.value("sensor_speed", json()), c.sensor_speed);
    c.fov_half_length = doc.value("fov_half_length", c.fov_half_length);
    c.p_detect = doc.value("p_detect", c.p_detect);
    c.clutter_rate = doc.value("clutter_rate", c.clutter_rate);
    c.birth_rate = doc.value("birth_rate", c.birth_rate);
    c.empty_scan_fraction = doc.value("empty_scan_fraction", c.empty_scan_fraction);
    c.dt = doc.value("dt", c.dt);
    c.process_noise_q = doc.value("process_noise_q", c.process_noise_q);
    c.obs_sigma = doc.value("obs_sigma", c.obs_sigma);
    c.rng_seed = doc.value("rng_seed", c.rng_seed);
    c.validate();
    return c;
}

std::string scenario_to_json(const ScenarioConfig& c) {
    json doc;
    doc["schema"] = "nctrack-scenario-v1";
    doc["name"] = c.name;
    doc["network"] = c.network;
    doc["duration"] = c.duration;
    json jt = json::array();
    for (const auto& t : c.initial_targets)
        jt.push_back({{"segment", t.segment},
                      {"position", t.position},
                      {"speed", t.speed}});
    doc["initial_targets"] = jt;
    doc["random_initial_targets"] = c.random_initial_targets;
    doc["target_speed"] = {{"mean", c.target_speed.mean}, {"sd", c.target_speed.sd}};
    doc["sensor_count"] = c.sensor_count;
    doc["sensor_speed"] = {{"mean", c.sensor_speed.mean}, {"sd", c.sensor_speed.sd}};
    doc["fov_half_length"] = c.fov_half_length;
    doc["p_detect"] = c.p_detect;
    doc["clutter_rate"] = c.clutter_rate;
    doc["birth_rate"] = c.birth_rate;
    doc["empty_scan_fraction"] = c.empty_scan_fraction;
    doc["dt"] = c.dt;
    doc["process_noise_q"] = c.process_noise_q;
    doc["obs_sigma"] = c.obs_sigma;
    doc["rng_seed"] = c.rng_seed;
    return doc.dump(2);
}

std::string data_dir() {
    if (const char* env = std::getenv("NCTRACK_DATA_DIR"); env && *env)
        return env;
    return NCTRACK_DATA_DIR;
}

std::pair<ScenarioConfig, RoadNetwork> build_scenario(
    const std::string& preset, int sensor_count, double empty_scan_fraction) {
    static const std::map<std::string, const char*> files = {
        {"1", "scenarios/scenario1.json"},
        {"2", "scenarios/scenario2.json"},
        {"3a", "scenarios/scenario3a.json"},
        {"3b", "scenarios/scenario3b.json"},
    };
    const auto it = files.find(preset);
    if (it == files.end())
        throw std::invalid_argument("build_scenario: unknown preset \"" + preset +
                                    "\" (expected 1, 2, 3a or 3b)");
    const std::filesystem::path root(data_dir());
    std::ifstream in(root / it->second);
    if (!in)
        throw std::runtime_error("build_scenario: cannot open " +
                                 (root / it->second).string());
    std::ostringstream ss;
    ss << in.rdbuf();
    ScenarioConfig cfg = scenario_from_json(ss.str());
    if (sensor_count >= 0) cfg.sensor_count = sensor_count;
    if (empty_scan_fraction >= 0.0) cfg.empty_scan_fraction = empty_scan_fraction;

    RoadNetwork net = load_network_file((root / cfg.network).string());
    return {std::move(cfg), std::move(net)};
}

}  // namespace nctrack
