#include "nctrack/association.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace nctrack {

double chi2_quantile_2dof(double prob) {
    if (!(prob > 0.0 && prob < 1.0))
        throw std::invalid_argument("chi2_quantile_2dof: prob must be in (0, 1)");
    return -2.0 * std::log(1.0 - prob);
}

bool gate(const Gate& g, const Vec2& zhat, const Mat2& S, SegmentId est_segment,
          const Observation& obs, bool allow_adjacent, const RoadNetwork& net) {
    const SegmentId obs_seg = obs.segment();

    double position_shift = 0.0;
    if (obs_seg != est_segment) {
        if (!allow_adjacent) return false;
        bool adjacent = false;
        for (const Transition& t : net.successors(est_segment)) {
            if (t.to == obs_seg && t.p > 0.0) {
                adjacent = true;
                break;
            }
        }
        if (!adjacent) return false;
        // Compare as if the transition had already happened.
        position_shift = -net.length(est_segment);
    }

    Vec2 innov = obs.z - zhat;
    innov(0) -= position_shift;

    if (g.mode == Gate::Mode::Scalar) {
        const double sigma = std::sqrt(S(0, 0));
        return std::abs(innov(0)) <= g.kappa * sigma;
    }
    const double d2 = innov.dot(S.inverse() * innov);
    return d2 <= g.gamma_g;
}

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

Clustering build_clusters(const std::vector<std::pair<int, int>>& gated_pairs,
                          const std::vector<int>& track_ids,
                          const std::vector<int>& obs_ids) {
    std::map<int, int> track_slot, obs_slot;
    for (int t : track_ids) track_slot.emplace(t, static_cast<int>(track_slot.size()));
    for (int o : obs_ids) obs_slot.emplace(o, static_cast<int>(obs_slot.size()));
    const int nt = static_cast<int>(track_slot.size());
    const int no = static_cast<int>(obs_slot.size());

    UnionFind uf(nt + no);
    std::vector<char> obs_claimed(no, 0);
    for (const auto& [t, o] : gated_pairs) {
        const auto ti = track_slot.find(t);
        const auto oi = obs_slot.find(o);
        if (ti == track_slot.end() || oi == obs_slot.end())
            throw std::invalid_argument("build_clusters: pair references unknown id");
        uf.unite(ti->second, nt + oi->second);
        obs_claimed[oi->second] = 1;
    }

    std::map<int, Cluster> by_root;
    for (const auto& [tid, slot] : track_slot)
        by_root[uf.find(slot)].track_ids.push_back(tid);
    for (const auto& [oid, slot] : obs_slot)
        if (obs_claimed[slot]) by_root[uf.find(nt + slot)].obs_ids.push_back(oid);

    Clustering out;
    for (auto& [root, c] : by_root) {
        std::sort(c.track_ids.begin(), c.track_ids.end());
        std::sort(c.obs_ids.begin(), c.obs_ids.end());
        out.clusters.push_back(std::move(c));
    }
    std::sort(out.clusters.begin(), out.clusters.end(),
              [](const Cluster& a, const Cluster& b) {
                  return a.track_ids < b.track_ids;
              });
    for (const auto& [oid, slot] : obs_slot)
        if (!obs_claimed[slot]) out.unclaimed_obs.push_back(oid);
    std::sort(out.unclaimed_obs.begin(), out.unclaimed_obs.end());
    return out;
}

CostMatrix assemble_costs(const Eigen::MatrixXd& hit_increments,
                          const std::vector<double>& miss_increments,
                          double new_track_score, double false_alarm_baseline) {
    const int nt = static_cast<int>(hit_increments.rows());
    const int no = static_cast<int>(hit_increments.cols());
    if (static_cast<int>(miss_increments.size()) != nt)
        throw std::invalid_argument("assemble_costs: miss increment count mismatch");

    CostMatrix m;
    m.n_tracks = nt;
    m.n_obs = no;
    m.cost = Eigen::MatrixXd::Constant(nt + no, no + nt, kInfeasible);
    for (int t = 0; t < nt; ++t) {
        for (int o = 0; o < no; ++o) {
            const double inc = hit_increments(t, o);
            if (std::isfinite(inc)) m.cost(t, o) = -inc;
        }
        m.cost(t, no + t) = -miss_increments[t];
    }
    const double extraneous = std::max(new_track_score, false_alarm_baseline);
    for (int o = 0; o < no; ++o) m.cost(nt + o, o) = -extraneous;
    return m;
}

LoweredCosts lower(const CostMatrix& m) {
    const int nt = m.n_tracks;
    const int no = m.n_obs;
    LoweredCosts out;
    out.cost = Eigen::MatrixXd::Constant(no, nt + no, kInfeasible);
    out.baseline = 0.0;
    for (int t = 0; t < nt; ++t) out.baseline += -m.cost(t, no + t);
    for (int o = 0; o < no; ++o) {
        for (int t = 0; t < nt; ++t) {
            const double hit_cost = m.cost(t, o);
            if (hit_cost == kInfeasible) continue;
            // Relative to the track's miss column.
            out.cost(o, t) = hit_cost - m.cost(t, no + t);
        }
        out.cost(o, nt + o) = m.cost(nt + o, o);
    }
    return out;
}

}  // namespace nctrack
