#include <json.hpp>

#include "nctrack/mht.hpp"

namespace nctrack {

namespace {

const char* kind_name(TrackEvent::Kind k) {
    switch (k) {
        case TrackEvent::Kind::Hit: return "hit";
        case TrackEvent::Kind::Miss: return "miss";
        case TrackEvent::Kind::Transition: return "transition";
    }
    return "?";
}

}  // namespace

std::string Tracker::snapshot() const {
    nlohmann::json doc;
    doc["schema"] = "nctrack-snapshot-v1";
    doc["time"] = time();
    doc["mode"] = mode() == TrackerMode::NetworkConstrained ? "nc" : "freespace";

    nlohmann::json jtrees = nlohmann::json::array();
    for (const auto& tree : trees()) {
        nlohmann::json jt;
        jt["id"] = tree.id;
        jt["birth_time"] = tree.birth_time;
        jt["birth_obs"] = tree.birth_obs;
        nlohmann::json jleaves = nlohmann::json::array();
        for (const auto& leaf : tree.leaves) {
            nlohmann::json jl;
            jl["id"] = leaf.id;
            jl["score"] = leaf.score;
            jl["n_hits"] = leaf.n_hits;
            jl["segment"] = leaf.est.segment;
            jl["mean"] = std::vector<double>(
                leaf.est.mean.data(), leaf.est.mean.data() + leaf.est.dim);
            std::vector<double> cov;
            for (int r = 0; r < leaf.est.dim; ++r)
                for (int c = 0; c < leaf.est.dim; ++c)
                    cov.push_back(leaf.est.cov(r, c));
            jl["cov"] = cov;
            nlohmann::json jevents = nlohmann::json::array();
            for (const auto& e : leaf.events)
                jevents.push_back({{"t", e.time},
                                   {"kind", kind_name(e.kind)},
                                   {"id", e.id}});
            jl["events"] = jevents;
            jleaves.push_back(std::move(jl));
        }
        jt["leaves"] = jleaves;
        jtrees.push_back(std::move(jt));
    }
    doc["trees"] = jtrees;

    nlohmann::json jhyps = nlohmann::json::array();
    for (const auto& h : hypotheses()) {
        nlohmann::json jh;
        jh["log_prob"] = hypothesis_log_prob(h);
        nlohmann::json jsel = nlohmann::json::array();
        for (const auto& [tree, leaf] : h.selection)
            jsel.push_back({{"tree", tree}, {"leaf", leaf}});
        jh["selection"] = jsel;
        jhyps.push_back(std::move(jh));
    }
    doc["hypotheses"] = jhyps;

    return doc.dump(2);
}

}  // namespace nctrack
