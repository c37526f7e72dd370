#include "nctrack/network.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace nctrack {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("network: " + msg);
}

}  // namespace

RoadNetwork::RoadNetwork(std::vector<Segment> segments,
                         std::vector<std::vector<Transition>> transitions)
    : segments_(std::move(segments)), transitions_(std::move(transitions)) {
    const int n = static_cast<int>(segments_.size());
    if (static_cast<int>(transitions_.size()) != n)
        fail("transition table size does not match segment count");

    predecessors_.assign(n, {});
    for (int s = 0; s < n; ++s) {
        const Segment& seg = segments_[s];
        const double geo = (seg.end - seg.start).norm();
        if (!(seg.length > 0.0))
            fail("segment " + std::to_string(s) + ": length must be > 0");
        if (std::abs(geo - seg.length) > 1e-9 * std::max(1.0, seg.length))
            fail("segment " + std::to_string(s) +
                 ": stored length disagrees with endpoint distance");
        total_length_ += seg.length;

        double sum = 0.0;
        for (const Transition& t : transitions_[s]) {
            if (t.to < 0 || t.to >= n)
                fail("segment " + std::to_string(s) + ": successor id " +
                     std::to_string(t.to) + " out of range");
            if (t.p < 0.0 || t.p > 1.0)
                fail("segment " + std::to_string(s) +
                     ": transition probability outside [0, 1]");
            const Segment& succ = segments_[t.to];
            if ((succ.start - seg.end).norm() > 1e-6)
                fail("segment " + std::to_string(s) + ": successor " +
                     std::to_string(t.to) + " does not start at its end point");
            sum += t.p;
            predecessors_[t.to].push_back(static_cast<SegmentId>(s));
        }
        if (!transitions_[s].empty() && std::abs(sum - 1.0) > 1e-9)
            fail("segment " + std::to_string(s) +
                 ": transition probabilities sum to " + std::to_string(sum) +
                 ", expected 1");
    }
}

const Segment& RoadNetwork::segment(SegmentId s) const {
    if (!valid(s)) fail("invalid segment id " + std::to_string(s));
    return segments_[s];
}

const std::vector<Transition>& RoadNetwork::successors(SegmentId s) const {
    if (!valid(s)) fail("invalid segment id " + std::to_string(s));
    return transitions_[s];
}

const std::vector<SegmentId>& RoadNetwork::predecessors(SegmentId s) const {
    if (!valid(s)) fail("invalid segment id " + std::to_string(s));
    return predecessors_[s];
}

Point2 RoadNetwork::embed(SegmentId s, double along) const {
    const Segment& seg = segment(s);
    if (along < 0.0 || along > seg.length)
        fail("embed: along=" + std::to_string(along) + " outside [0, " +
             std::to_string(seg.length) + "] on segment " + std::to_string(s));
    const double f = along / seg.length;
    return seg.start + f * (seg.end - seg.start);
}

RoadNetwork load_network(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(std::string("parse error: ") + e.what());
    }

    if (doc.value("schema", "") != "nctrack-network-v1")
        fail("missing or unknown schema (expected \"nctrack-network-v1\")");
    if (!doc.contains("segments") || !doc["segments"].is_array())
        fail("missing \"segments\" array");

    // Segment ids in the document may be sparse; map them to dense indices.
    std::unordered_map<std::int64_t, SegmentId> id_map;
    std::vector<Segment> segments;
    for (const auto& js : doc["segments"]) {
        const std::int64_t id = js.at("id").get<std::int64_t>();
        if (id_map.count(id))
            fail("duplicate segment id " + std::to_string(id));
        const auto& a = js.at("start");
        const auto& b = js.at("end");
        Segment seg;
        seg.start = Point2(a.at(0).get<double>(), a.at(1).get<double>());
        seg.end = Point2(b.at(0).get<double>(), b.at(1).get<double>());
        seg.length = (seg.end - seg.start).norm();
        if (!(seg.length > 0.0))
            fail("segment " + std::to_string(id) + ": length must be > 0");
        id_map[id] = static_cast<SegmentId>(segments.size());
        segments.push_back(seg);
    }

    struct Row {
        SegmentId to;
        double p;
        bool has_p;
    };
    std::vector<std::vector<Row>> rows(segments.size());
    if (doc.contains("transitions")) {
        for (const auto& jt : doc["transitions"]) {
            const std::int64_t from = jt.at("from").get<std::int64_t>();
            const std::int64_t to = jt.at("to").get<std::int64_t>();
            auto fit = id_map.find(from);
            auto tit = id_map.find(to);
            if (fit == id_map.end())
                fail("transition references unknown segment " + std::to_string(from));
            if (tit == id_map.end())
                fail("segment " + std::to_string(from) +
                     ": successor id " + std::to_string(to) + " is unknown");
            Row r;
            r.to = tit->second;
            r.has_p = jt.contains("p");
            r.p = r.has_p ? jt.at("p").get<double>() : 0.0;
            rows[fit->second].push_back(r);
        }
    }

    // Rows without an explicit probability share the remaining mass equally
    // ("equally distributed among the set of possible outgoing transitions").
    std::vector<std::vector<Transition>> transitions(segments.size());
    for (std::size_t s = 0; s < rows.size(); ++s) {
        double given = 0.0;
        int missing = 0;
        for (const Row& r : rows[s]) {
            if (r.has_p)
                given += r.p;
            else
                ++missing;
        }
        const double fill = missing > 0 ? (1.0 - given) / missing : 0.0;
        if (missing > 0 && fill < -1e-12)
            fail("segment " + std::to_string(s) +
                 ": explicit probabilities exceed 1, nothing left for implicit rows");
        for (const Row& r : rows[s])
            transitions[s].push_back({r.to, r.has_p ? r.p : fill});
    }

    return RoadNetwork(std::move(segments), std::move(transitions));
}

RoadNetwork load_network_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_network(ss.str());
}

}  // namespace nctrack
