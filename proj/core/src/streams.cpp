#include "nctrack/streams.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace nctrack {

namespace {

using nlohmann::json;

[[noreturn]] void fail_line(const char* what, int line, const std::string& detail) {
    throw std::runtime_error(std::string(what) + ": line " + std::to_string(line) +
                             ": " + detail);
}

}  // namespace

void write_truth(std::ostream& out, const GroundTruth& truth) {
    for (const auto& step : truth.by_step) {
        for (const auto& r : step) {
            json j;
            j["t"] = r.time;
            j["id"] = r.id;
            j["seg"] = r.segment;
            j["pos"] = r.position;
            j["vel"] = r.velocity;
            out << j.dump() << '\n';
        }
    }
}

void write_scans(std::ostream& out, const std::vector<Scan>& scans) {
    for (const auto& s : scans) {
        json j;
        j["t"] = s.time;
        j["sensor"] = s.sensor;
        j["spos"] = {s.sensor_pos(0), s.sensor_pos(1)};
        j["fov"] = s.fov;
        json fp = json::array();
        for (const auto& iv : s.footprint)
            fp.push_back({iv.segment, iv.lo, iv.hi});
        j["footprint"] = fp;
        json obs = json::array();
        for (const auto& o : s.observations) {
            json jo;
            jo["z"] = {o.z(0), o.z(1)};
            json belief = json::array();
            for (const auto& [seg, p] : o.segment_belief)
                belief.push_back({seg, p});
            jo["belief"] = belief;
            obs.push_back(std::move(jo));
        }
        j["obs"] = obs;
        out << j.dump() << '\n';
    }
}

GroundTruth read_truth(std::istream& in, const RoadNetwork& net) {
    GroundTruth truth;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            fail_line("truth stream", lineno, e.what());
        }
        try {
            TruthRecord r;
            r.time = j.at("t").get<int>();
            r.id = j.at("id").get<int>();
            r.segment = j.at("seg").get<SegmentId>();
            r.position = j.at("pos").get<double>();
            r.velocity = j.at("vel").get<double>();
            if (!net.valid(r.segment))
                fail_line("truth stream", lineno, "unknown segment");
            r.world = net.embed(
                r.segment,
                std::clamp(r.position, 0.0, net.length(r.segment)));
            if (r.time < 0) fail_line("truth stream", lineno, "negative time");
            if (static_cast<int>(truth.by_step.size()) <= r.time)
                truth.by_step.resize(r.time + 1);
            truth.by_step[r.time].push_back(r);
        } catch (const json::exception& e) {
            fail_line("truth stream", lineno, e.what());
        }
    }
    return truth;
}

std::vector<Scan> read_scans(std::istream& in) {
    std::vector<Scan> scans;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            fail_line("scan stream", lineno, e.what());
        }
        try {
            Scan s;
            s.time = j.at("t").get<int>();
            s.sensor = j.at("sensor").get<int>();
            const auto& sp = j.at("spos");
            s.sensor_pos = Point2(sp.at(0).get<double>(), sp.at(1).get<double>());
            s.fov = j.at("fov").get<double>();
            for (const auto& iv : j.at("footprint"))
                s.footprint.push_back({iv.at(0).get<SegmentId>(),
                                       iv.at(1).get<double>(),
                                       iv.at(2).get<double>()});
            for (const auto& jo : j.at("obs")) {
                Observation o;
                o.z = Vec2(jo.at("z").at(0).get<double>(),
                           jo.at("z").at(1).get<double>());
                for (const auto& b : jo.at("belief"))
                    o.segment_belief.emplace_back(b.at(0).get<SegmentId>(),
                                                  b.at(1).get<double>());
                s.observations.push_back(std::move(o));
            }
            s.is_reported = true;
            scans.push_back(std::move(s));
        } catch (const json::exception& e) {
            fail_line("scan stream", lineno, e.what());
        }
    }
    return scans;
}

GroundTruth read_truth_file(const std::string& path, const RoadNetwork& net) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_truth(in, net);
}

std::vector<Scan> read_scans_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_scans(in);
}

}  // namespace nctrack
