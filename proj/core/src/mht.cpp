#include "nctrack/mht.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace nctrack {

// ---------------------------------------------------------------
// Parameters and score arithmetic
// ---------------------------------------------------------------

void TrackerParams::validate() const {
    if (!(p_detect > 0.0 && p_detect < 1.0))
        throw std::invalid_argument("tracker: p_detect must be in (0, 1)");
    if (!(p_survive > 0.0 && p_survive <= 1.0))
        throw std::invalid_argument("tracker: p_survive must be in (0, 1]");
    if (!(lambda_fa_density > 0.0))
        throw std::invalid_argument("tracker: lambda_fa_density must be > 0");
    if (lambda_nt_density < 0.0)
        throw std::invalid_argument("tracker: lambda_nt_density must be >= 0");
    if (!(gamma_nt > 0.0))
        throw std::invalid_argument("tracker: gamma_nt must be > 0");
    if (max_hyp_per_cluster < 1 || nscan < 1 || confirm_hits < 1)
        throw std::invalid_argument("tracker: counts must be >= 1");
    if (!(min_rel_score > 0.0))
        throw std::invalid_argument("tracker: min_rel_score must be > 0");
    if (!(leak_threshold > 0.0 && leak_threshold < 1.0))
        throw std::invalid_argument("tracker: leak_threshold must be in (0, 1)");
}

double score_predict(double parent_score, const TrackerParams& p,
                     double log_transition) {
    return parent_score + std::log(p.p_survive) + log_transition;
}

double score_update(double parent_score, const TrackerParams& p,
                    const std::optional<Detection>& detection) {
    if (!detection) return parent_score + std::log1p(-p.p_detect);
    return parent_score + std::log(p.p_detect * detection->gaussian_likelihood *
                                   detection->segment_belief /
                                   p.lambda_fa_density);
}

double existence_probability(double score) {
    if (score >= 0.0) return 1.0 / (1.0 + std::exp(-score));
    const double e = std::exp(score);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------
// Estimates, footprints
// ---------------------------------------------------------------

HybridEstimate TrackEstimate::hybrid() const {
    HybridEstimate h;
    h.mean = mean.head<2>();
    h.cov = cov.topLeftCorner<2, 2>();
    h.segment = segment;
    return h;
}

TrackEstimate TrackEstimate::from_hybrid(const HybridEstimate& h) {
    TrackEstimate e;
    e.dim = 2;
    e.mean.head<2>() = h.mean;
    e.cov.topLeftCorner<2, 2>() = h.cov;
    e.segment = h.segment;
    return e;
}

double footprint_length(const Footprint& fp) {
    double total = 0.0;
    for (const auto& iv : fp) total += iv.hi - iv.lo;
    return total;
}

bool footprint_covers(const Footprint& fp, SegmentId segment, double along) {
    for (const auto& iv : fp)
        if (iv.segment == segment && along >= iv.lo && along <= iv.hi) return true;
    return false;
}

const TrackLeaf* TrackTree::find_leaf(std::int64_t leaf_id) const {
    for (const auto& l : leaves)
        if (l.id == leaf_id) return &l;
    return nullptr;
}

// ---------------------------------------------------------------
// Tracker implementation
// ---------------------------------------------------------------

namespace {

constexpr int kNoTime = std::numeric_limits<int>::min();

struct PredObs {
    Vec2 zhat;
    Mat2 S;
};

// Hash of a hypothesis selection, for dedup.
std::size_t selection_hash(const std::vector<std::pair<int, std::int64_t>>& sel) {
    std::size_t h = 1469598103934665603ull;
    for (const auto& [tree, leaf] : sel) {
        h = (h ^ static_cast<std::size_t>(tree)) * 1099511628211ull;
        h = (h ^ static_cast<std::size_t>(leaf)) * 1099511628211ull;
    }
    return h;
}

}  // namespace

struct Tracker::Impl {
    TrackerMode mode;
    const RoadNetwork* net;
    MotionModel mm;
    ObservationModel om;
    TrackerParams params;

    // Free-space lifted models (state x, y, vx, vy; position-only measurement).
    Eigen::Matrix4d F4 = Eigen::Matrix4d::Identity();
    Eigen::Matrix4d Q4 = Eigen::Matrix4d::Zero();
    Mat2 R2 = Mat2::Identity();
    Mat2 free_init_pos_cov = Mat2::Identity();
    double free_init_vel_var = 1.0;

    Mat2 nc_init_cov = Mat2::Identity();

    int time = kNoTime;
    std::vector<TrackTree> trees;
    std::vector<GlobalHypothesis> hyps;
    std::int64_t next_leaf_id = 1;
    int next_tree_id = 0;
    std::int64_t next_obs_gid = 0;

    // ---- basic lookups ----

    int tree_index(int tree_id) const {
        for (int i = 0; i < static_cast<int>(trees.size()); ++i)
            if (trees[i].id == tree_id) return i;
        throw std::logic_error("tracker: unknown tree id");
    }

    TrackLeaf* find_leaf(TrackTree& t, std::int64_t leaf_id) {
        for (auto& l : t.leaves)
            if (l.id == leaf_id) return &l;
        return nullptr;
    }

    double leaf_score(int tree_id, std::int64_t leaf_id) const {
        const TrackTree& t = trees[tree_index_cache.at(tree_id)];
        const TrackLeaf* l = t.find_leaf(leaf_id);
        if (!l) throw std::logic_error("tracker: hypothesis references dead leaf");
        return l->score;
    }

    mutable std::unordered_map<int, int> tree_index_cache;

    void rebuild_tree_index() {
        tree_index_cache.clear();
        for (int i = 0; i < static_cast<int>(trees.size()); ++i)
            tree_index_cache.emplace(trees[i].id, i);
    }

    double hyp_log_prob(const GlobalHypothesis& h) const {
        double s = 0.0;
        for (const auto& [tree, leaf] : h.selection) s += leaf_score(tree, leaf);
        return s;
    }

    // ---- estimate-level operations, switched on mode ----

    Point2 world(const TrackEstimate& e) const {
        if (e.dim == 2) return to_world(*net, e.hybrid());
        return e.mean.head<2>();
    }

    bool inside_footprint(const TrackEstimate& e, const Scan& scan) const {
        if (e.dim == 2) {
            const double len = net->length(e.segment);
            const double along = std::clamp(e.mean(0), 0.0, len);
            return footprint_covers(scan.footprint, e.segment, along);
        }
        return (e.mean.head<2>() - scan.sensor_pos).norm() <= scan.fov;
    }

    Vec2 obs_vector(const Observation& obs) const {
        if (mode == TrackerMode::NetworkConstrained) return obs.z;
        const SegmentId seg = obs.segment();
        const double len = net->length(seg);
        return net->embed(seg, std::clamp(obs.z(0), 0.0, len));
    }

    PredObs predicted_obs(const TrackEstimate& e) const {
        PredObs po;
        if (e.dim == 2) {
            const HybridEstimate h = e.hybrid();
            po.zhat = om.H * h.mean;
            po.S = om.H * h.cov * om.H.transpose() + om.R;
        } else {
            po.zhat = e.mean.head<2>();
            po.S = e.cov.topLeftCorner<2, 2>() + R2;
        }
        return po;
    }

    bool leaf_gates(const TrackEstimate& e, const PredObs& po,
                    const Observation& obs) const {
        if (mode == TrackerMode::NetworkConstrained) {
            if (obs.segment() != e.segment) return false;
            const double sigma = std::sqrt(po.S(0, 0));
            return std::abs(obs.z(0) - po.zhat(0)) <= params.gate.kappa * sigma;
        }
        const Vec2 innov = obs_vector(obs) - po.zhat;
        const double d2 = innov.dot(po.S.inverse() * innov);
        return d2 <= params.gate.gamma_g;
    }

    struct LeafUpdate {
        TrackEstimate est;
        double log_likelihood;
        double belief;
    };

    LeafUpdate update_leaf(const TrackEstimate& e, const Observation& obs) const {
        LeafUpdate out;
        if (e.dim == 2) {
            const UpdateOutcome u = update(om, e.hybrid(), obs);
            out.est = TrackEstimate::from_hybrid(u.estimate);
            out.log_likelihood = u.log_likelihood;
            out.belief = obs.belief(e.segment);
        } else {
            const Vec2 z = obs_vector(obs);
            const Mat2 S = e.cov.topLeftCorner<2, 2>() + R2;
            const Mat2 Sinv = S.inverse();
            const Eigen::Matrix<double, 4, 2> K =
                e.cov.leftCols<2>() * Sinv;  // H = [I2 0]
            const Vec2 innov = z - e.mean.head<2>();
            out.est = e;
            out.est.mean = e.mean + K * innov;
            out.est.cov = e.cov - K * e.cov.topRows<2>();
            out.est.cov = 0.5 * (out.est.cov + out.est.cov.transpose()).eval();
            out.log_likelihood = -std::log(2.0 * std::numbers::pi) -
                                 0.5 * std::log(S.determinant()) -
                                 0.5 * innov.dot(Sinv * innov);
            out.belief = 1.0;
        }
        return out;
    }

    TrackEstimate init_estimate(const Observation& obs) const {
        if (mode == TrackerMode::NetworkConstrained) {
            const HybridEstimate h =
                init_track(*net, om, obs, KinematicState{0.0, 0.0}, nc_init_cov);
            return TrackEstimate::from_hybrid(h);
        }
        TrackEstimate e;
        e.dim = 4;
        e.mean.head<2>() = obs_vector(obs);
        e.mean.tail<2>().setZero();
        e.cov.setZero();
        e.cov.topLeftCorner<2, 2>() = free_init_pos_cov;
        e.cov(2, 2) = e.cov(3, 3) = free_init_vel_var;
        e.segment = kInvalidSegment;
        return e;
    }

    // ---- hypothesis expansion over per-leaf replacements ----
    //
    // replacements[tree_id][leaf_id] -> surviving children ids (empty = the
    // leaf died, the tree drops out of the hypothesis).
    void expand_hypotheses(
        const std::unordered_map<int,
                                 std::unordered_map<std::int64_t,
                                                    std::vector<std::int64_t>>>&
            replacements) {
        if (replacements.empty()) return;
        std::vector<GlobalHypothesis> expanded;
        for (const auto& h : hyps) {
            std::vector<GlobalHypothesis> partial{GlobalHypothesis{}};
            partial[0].selection.reserve(h.selection.size());
            for (const auto& [tree, leaf] : h.selection) {
                const auto rt = replacements.find(tree);
                const std::vector<std::int64_t>* children = nullptr;
                if (rt != replacements.end()) {
                    const auto it = rt->second.find(leaf);
                    if (it != rt->second.end()) children = &it->second;
                }
                if (!children) {
                    for (auto& p : partial) p.selection.emplace_back(tree, leaf);
                } else if (children->empty()) {
                    // exited: drop the tree from the hypothesis
                } else if (children->size() == 1) {
                    for (auto& p : partial)
                        p.selection.emplace_back(tree, (*children)[0]);
                } else {
                    std::vector<GlobalHypothesis> next;
                    next.reserve(partial.size() * children->size());
                    for (const auto& p : partial) {
                        for (std::int64_t c : *children) {
                            next.push_back(p);
                            next.back().selection.emplace_back(tree, c);
                        }
                    }
                    partial = std::move(next);
                }
            }
            for (auto& p : partial) expanded.push_back(std::move(p));
        }
        hyps = std::move(expanded);
        dedupe_and_rank(8 * params.max_hyp_per_cluster);
    }

    // Sorts hypotheses by (log_prob desc, selection lex asc), removes
    // duplicates, truncates to cap.
    void dedupe_and_rank(int cap) {
        std::vector<std::pair<double, int>> order;
        order.reserve(hyps.size());
        for (int i = 0; i < static_cast<int>(hyps.size()); ++i)
            order.emplace_back(hyp_log_prob(hyps[i]), i);
        std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return hyps[a.second].selection < hyps[b.second].selection;
        });
        std::vector<GlobalHypothesis> kept;
        std::unordered_set<std::size_t> seen;
        for (const auto& [lp, idx] : order) {
            const std::size_t h = selection_hash(hyps[idx].selection);
            bool dup = false;
            if (seen.count(h)) {
                for (const auto& k : kept)
                    if (k.selection == hyps[idx].selection) {
                        dup = true;
                        break;
                    }
            }
            if (dup) continue;
            seen.insert(h);
            kept.push_back(std::move(hyps[idx]));
            if (static_cast<int>(kept.size()) >= cap) break;
        }
        hyps = std::move(kept);
        if (hyps.empty()) hyps.push_back(GlobalHypothesis{});
    }

    // ---- time update ----

    void predict_step() {
        std::unordered_map<int, std::unordered_map<std::int64_t,
                                                   std::vector<std::int64_t>>>
            replacements;
        for (auto& tree : trees) {
            std::vector<TrackLeaf> added;
            std::vector<std::int64_t> dead;
            for (auto& leaf : tree.leaves) {
                if (mode == TrackerMode::FreeSpace) {
                    leaf.est.mean = F4 * leaf.est.mean;
                    leaf.est.cov = F4 * leaf.est.cov * F4.transpose() + Q4;
                    leaf.est.cov =
                        0.5 * (leaf.est.cov + leaf.est.cov.transpose()).eval();
                    leaf.score = score_predict(leaf.score, params, 0.0);
                    continue;
                }
                const PredictOutcome out = predict(*net, mm, leaf.est.hybrid());
                if (out.exited) {
                    dead.push_back(leaf.id);
                    replacements[tree.id][leaf.id] = {};
                    continue;
                }
                if (out.branches.size() == 1) {
                    const auto& br = out.branches[0];
                    const bool moved = br.est.segment != leaf.est.segment;
                    leaf.est = TrackEstimate::from_hybrid(br.est);
                    leaf.score =
                        score_predict(leaf.score, params, br.log_transition);
                    if (moved)
                        leaf.events.push_back({time + 1, TrackEvent::Kind::Transition,
                                               br.est.segment});
                    continue;
                }
                std::vector<std::int64_t> children;
                for (const auto& br : out.branches) {
                    TrackLeaf child = leaf;
                    child.id = next_leaf_id++;
                    child.est = TrackEstimate::from_hybrid(br.est);
                    child.score =
                        score_predict(leaf.score, params, br.log_transition);
                    if (br.est.segment != leaf.est.segment)
                        child.events.push_back({time + 1,
                                                TrackEvent::Kind::Transition,
                                                br.est.segment});
                    children.push_back(child.id);
                    added.push_back(std::move(child));
                }
                dead.push_back(leaf.id);
                replacements[tree.id][leaf.id] = std::move(children);
            }
            if (!dead.empty()) {
                std::erase_if(tree.leaves, [&](const TrackLeaf& l) {
                    return std::find(dead.begin(), dead.end(), l.id) != dead.end();
                });
            }
            for (auto& l : added) tree.leaves.push_back(std::move(l));
        }
        std::erase_if(trees, [](const TrackTree& t) { return t.leaves.empty(); });
        rebuild_tree_index();
        expand_hypotheses(replacements);
        time += 1;
    }

    void predict_to(int t) {
        if (time == kNoTime) {
            time = t;
            return;
        }
        if (t < time) throw std::invalid_argument("tracker: time went backwards");
        while (time < t) predict_step();
    }

    // ---- corner-case splitting near junctions ----

    void split_near_junctions(const Scan& scan) {
        if (mode != TrackerMode::NetworkConstrained) return;
        std::unordered_map<int, std::unordered_map<std::int64_t,
                                                   std::vector<std::int64_t>>>
            replacements;
        for (auto& tree : trees) {
            std::vector<TrackLeaf> added;
            for (auto& leaf : tree.leaves) {
                const HybridEstimate h = leaf.est.hybrid();
                if (mass_past_end(*net, h) <= params.leak_threshold) continue;
                const auto parts = split_near_junction(*net, h, params.leak_threshold);
                if (parts.size() <= 1) continue;

                bool wanted = params.always_split;
                if (!wanted) {
                    // Split only when an observation could associate with a
                    // leaked copy on an adjacent segment.
                    for (std::size_t i = 1; i < parts.size() && !wanted; ++i) {
                        TrackEstimate copy = TrackEstimate::from_hybrid(parts[i].est);
                        const PredObs po = predicted_obs(copy);
                        for (const auto& obs : scan.observations) {
                            if (obs.segment() != copy.segment) continue;
                            if (leaf_gates(copy, po, obs)) {
                                wanted = true;
                                break;
                            }
                        }
                    }
                }
                if (!wanted) continue;

                std::vector<std::int64_t> group;
                group.push_back(leaf.id);  // the retained branch keeps its id
                leaf.score += parts[0].log_transition;
                for (std::size_t i = 1; i < parts.size(); ++i) {
                    TrackLeaf child = leaf;
                    child.id = next_leaf_id++;
                    child.est = TrackEstimate::from_hybrid(parts[i].est);
                    child.score = leaf.score - parts[0].log_transition +
                                  parts[i].log_transition;
                    child.events.push_back({scan.time, TrackEvent::Kind::Transition,
                                            parts[i].est.segment});
                    group.push_back(child.id);
                    added.push_back(std::move(child));
                }
                replacements[tree.id][leaf.id] = std::move(group);
            }
            for (auto& l : added) tree.leaves.push_back(std::move(l));
        }
        expand_hypotheses(replacements);
    }

    // ---- scan processing ----

    ScanStats process_scan(const Scan& scan) {
        for (const auto& iv : scan.footprint)
            if (!net->valid(iv.segment))
                throw std::invalid_argument("scan: footprint on unknown segment");
        for (const auto& obs : scan.observations)
            if (!net->valid(obs.segment()))
                throw std::invalid_argument("scan: observation on unknown segment");

        predict_to(scan.time);

        const int n_obs = static_cast<int>(scan.observations.size());
        std::vector<std::int64_t> obs_gid(n_obs);
        for (int i = 0; i < n_obs; ++i) obs_gid[i] = next_obs_gid++;

        split_near_junctions(scan);

        // Gating at leaf level; clustering at tree level.
        struct LeafInfo {
            int tree_id;
            std::int64_t leaf_id;
            PredObs po;
            std::vector<int> gated;  // observation indices
            bool in_footprint;
        };
        std::vector<LeafInfo> leaf_infos;
        std::unordered_map<std::int64_t, int> leaf_info_index;
        std::vector<std::pair<int, int>> tree_obs_pairs;
        std::vector<int> tree_ids;
        for (const auto& tree : trees) {
            tree_ids.push_back(tree.id);
            std::set<int> tree_gated;
            for (const auto& leaf : tree.leaves) {
                LeafInfo info;
                info.tree_id = tree.id;
                info.leaf_id = leaf.id;
                info.po = predicted_obs(leaf.est);
                info.in_footprint = inside_footprint(leaf.est, scan);
                for (int o = 0; o < n_obs; ++o)
                    if (leaf_gates(leaf.est, info.po, scan.observations[o])) {
                        info.gated.push_back(o);
                        tree_gated.insert(o);
                    }
                leaf_info_index[leaf.id] = static_cast<int>(leaf_infos.size());
                leaf_infos.push_back(std::move(info));
            }
            for (int o : tree_gated) tree_obs_pairs.emplace_back(tree.id, o);
        }

        std::vector<int> obs_ids(n_obs);
        for (int i = 0; i < n_obs; ++i) obs_ids[i] = i;
        const Clustering clustering =
            build_clusters(tree_obs_pairs, tree_ids, obs_ids);

        // Forced misses: trees in observation-free clusters take the miss
        // penalty in place (no branching decision exists for them).
        std::unordered_set<int> clustered_trees;
        int obs_clusters = 0;
        for (const auto& c : clustering.clusters) {
            if (c.obs_ids.empty()) continue;
            ++obs_clusters;
            for (int t : c.track_ids) clustered_trees.insert(t);
        }
        const double miss_penalty = std::log1p(-params.p_detect);
        for (auto& tree : trees) {
            if (clustered_trees.count(tree.id)) continue;
            for (auto& leaf : tree.leaves) {
                const LeafInfo& info =
                    leaf_infos[leaf_info_index.at(leaf.id)];
                if (!info.in_footprint) continue;
                leaf.score += miss_penalty;
                leaf.events.push_back({scan.time, TrackEvent::Kind::Miss,
                                       scan.sensor});
            }
        }

        // Per-cluster assignment options, solved once per distinct prior
        // projection.
        struct Option {
            double delta;  // score increment of this cluster decision
            // per cluster obs: claiming tree id, or -1 when extraneous
            std::vector<int> claim;
        };
        struct ClusterWork {
            const Cluster* cluster;
            // projection key (leaf id per cluster tree; -1 if tree absent)
            std::map<std::vector<std::int64_t>, std::vector<Option>> options;
        };
        std::vector<ClusterWork> work;
        for (const auto& c : clustering.clusters)
            if (!c.obs_ids.empty()) work.push_back({&c, {}});

        const double ln_gamma_nt = std::log(params.gamma_nt);

        // Cache of per-(leaf, obs) measurement updates.
        std::map<std::pair<std::int64_t, int>, LeafUpdate> update_cache;
        auto leaf_update = [&](std::int64_t leaf_id, int tree_id,
                               int o) -> const LeafUpdate& {
            const auto key = std::make_pair(leaf_id, o);
            auto it = update_cache.find(key);
            if (it != update_cache.end()) return it->second;
            TrackTree& tree = trees[tree_index_cache.at(tree_id)];
            const TrackLeaf* leaf = tree.find_leaf(leaf_id);
            LeafUpdate u = update_leaf(leaf->est, scan.observations[o]);
            return update_cache.emplace(key, std::move(u)).first->second;
        };

        auto solve_projection = [&](ClusterWork& cw,
                                    const std::vector<std::int64_t>& key) {
            if (cw.options.count(key)) return;
            const Cluster& c = *cw.cluster;
            const int n_cobs = static_cast<int>(c.obs_ids.size());
            std::vector<int> present_trees;
            std::vector<std::int64_t> present_leaves;
            for (std::size_t i = 0; i < c.track_ids.size(); ++i) {
                if (key[i] < 0) continue;
                present_trees.push_back(c.track_ids[i]);
                present_leaves.push_back(key[i]);
            }
            const int nt = static_cast<int>(present_trees.size());

            Eigen::MatrixXd hit_inc =
                Eigen::MatrixXd::Constant(nt, n_cobs, -kInfeasible);
            std::vector<double> miss_inc(nt, 0.0);
            for (int r = 0; r < nt; ++r) {
                const LeafInfo& info =
                    leaf_infos[leaf_info_index.at(present_leaves[r])];
                if (info.in_footprint) miss_inc[r] = miss_penalty;
                for (int oc = 0; oc < n_cobs; ++oc) {
                    const int o = c.obs_ids[oc];
                    if (std::find(info.gated.begin(), info.gated.end(), o) ==
                        info.gated.end())
                        continue;
                    const LeafUpdate& u =
                        leaf_update(present_leaves[r], present_trees[r], o);
                    const double inc =
                        score_update(0.0, params,
                                     Detection{std::exp(u.log_likelihood),
                                               u.belief});
                    hit_inc(r, oc) = inc;
                }
            }
            const CostMatrix cm =
                assemble_costs(hit_inc, miss_inc, ln_gamma_nt, 0.0);
            const LoweredCosts lc = lower(cm);
            const auto assignments =
                murty_kbest(lc.cost, params.max_hyp_per_cluster);

            std::vector<Option> opts;
            for (const auto& a : assignments) {
                Option opt;
                opt.delta = lc.baseline - a.cost;
                opt.claim.assign(n_cobs, -1);
                for (int oc = 0; oc < n_cobs; ++oc)
                    if (a.row_to_col[oc] < nt)
                        opt.claim[oc] = present_trees[a.row_to_col[oc]];
                opts.push_back(std::move(opt));
            }
            cw.options.emplace(key, std::move(opts));
        };

        // Children generation: best-first product of per-cluster options
        // over all prior hypotheses.
        std::vector<double> prior_base(hyps.size());
        std::vector<std::vector<std::vector<std::int64_t>>> prior_keys(
            hyps.size());
        for (std::size_t h = 0; h < hyps.size(); ++h) {
            prior_base[h] = hyp_log_prob(hyps[h]);
            prior_keys[h].resize(work.size());
            for (std::size_t w = 0; w < work.size(); ++w) {
                const Cluster& c = *work[w].cluster;
                std::vector<std::int64_t> key(c.track_ids.size(), -1);
                for (std::size_t i = 0; i < c.track_ids.size(); ++i) {
                    const auto it = std::lower_bound(
                        hyps[h].selection.begin(), hyps[h].selection.end(),
                        std::make_pair(c.track_ids[i],
                                       std::numeric_limits<std::int64_t>::min()));
                    if (it != hyps[h].selection.end() &&
                        it->first == c.track_ids[i])
                        key[i] = it->second;
                }
                prior_keys[h][w] = std::move(key);
                solve_projection(work[w], prior_keys[h][w]);
            }
        }

        std::vector<GlobalHypothesis> children;
        std::map<std::pair<std::int64_t, int>, std::int64_t> hit_children;
        std::unordered_map<std::int64_t, std::int64_t> miss_children;

        auto hit_child = [&](int tree_id, std::int64_t leaf_id,
                             int o) -> std::int64_t {
            const auto key = std::make_pair(leaf_id, o);
            auto it = hit_children.find(key);
            if (it != hit_children.end()) return it->second;
            TrackTree& tree = trees[tree_index_cache.at(tree_id)];
            const TrackLeaf* parent = tree.find_leaf(leaf_id);
            const LeafUpdate& u = leaf_update(leaf_id, tree_id, o);
            TrackLeaf child = *parent;
            child.id = next_leaf_id++;
            child.est = u.est;
            child.score = score_update(
                parent->score, params,
                Detection{std::exp(u.log_likelihood), u.belief});
            child.n_hits = parent->n_hits + 1;
            child.events.push_back({scan.time, TrackEvent::Kind::Hit,
                                    obs_gid[o]});
            const std::int64_t id = child.id;
            tree.leaves.push_back(std::move(child));
            hit_children.emplace(key, id);
            return id;
        };
        auto miss_child = [&](int tree_id, std::int64_t leaf_id) -> std::int64_t {
            const LeafInfo& info = leaf_infos[leaf_info_index.at(leaf_id)];
            if (!info.in_footprint) return leaf_id;  // unobservable: no penalty
            auto it = miss_children.find(leaf_id);
            if (it != miss_children.end()) return it->second;
            TrackTree& tree = trees[tree_index_cache.at(tree_id)];
            const TrackLeaf* parent = tree.find_leaf(leaf_id);
            TrackLeaf child = *parent;
            child.id = next_leaf_id++;
            child.score = score_update(parent->score, params, std::nullopt);
            child.events.push_back({scan.time, TrackEvent::Kind::Miss,
                                    scan.sensor});
            const std::int64_t id = child.id;
            tree.leaves.push_back(std::move(child));
            miss_children.emplace(leaf_id, id);
            return id;
        };

        if (work.empty()) {
            children = std::move(hyps);
        } else {
            struct Cand {
                double score;
                int prior;
                std::vector<int> combo;
                bool operator<(const Cand& o) const {
                    if (score != o.score) return score < o.score;  // max-heap
                    if (prior != o.prior) return prior > o.prior;
                    return combo > o.combo;
                }
            };
            std::priority_queue<Cand> heap;
            std::vector<std::unordered_set<std::size_t>> visited(hyps.size());
            auto combo_hash = [](const std::vector<int>& c) {
                std::size_t h = 14695981039346656037ull;
                for (int x : c) h = (h ^ static_cast<std::size_t>(x)) * 1099511628211ull;
                return h;
            };
            auto combo_score = [&](int prior, const std::vector<int>& combo,
                                   bool& valid) -> double {
                double s = prior_base[prior];
                valid = true;
                for (std::size_t w = 0; w < work.size(); ++w) {
                    const auto& opts = work[w].options.at(prior_keys[prior][w]);
                    if (combo[w] >= static_cast<int>(opts.size())) {
                        valid = false;
                        return 0.0;
                    }
                    s += opts[combo[w]].delta;
                }
                return s;
            };
            for (std::size_t h = 0; h < hyps.size(); ++h) {
                std::vector<int> zero(work.size(), 0);
                bool valid;
                const double s = combo_score(static_cast<int>(h), zero, valid);
                if (!valid) continue;
                visited[h].insert(combo_hash(zero));
                heap.push({s, static_cast<int>(h), std::move(zero)});
            }

            std::unordered_set<std::size_t> child_hashes;
            std::vector<GlobalHypothesis> emitted;
            while (!heap.empty() &&
                   static_cast<int>(emitted.size()) < params.max_hyp_per_cluster) {
                Cand cand = heap.top();
                heap.pop();

                // Materialize: replace cluster-tree leaves by the decided
                // children, leave the rest of the prior untouched.
                GlobalHypothesis child = hyps[cand.prior];
                for (std::size_t w = 0; w < work.size(); ++w) {
                    const Cluster& c = *work[w].cluster;
                    const auto& key = prior_keys[cand.prior][w];
                    const Option& opt =
                        work[w].options.at(key)[cand.combo[w]];
                    // claimed observations
                    std::unordered_map<int, int> claimed_by;  // tree -> obs
                    for (std::size_t oc = 0; oc < opt.claim.size(); ++oc)
                        if (opt.claim[oc] >= 0)
                            claimed_by[opt.claim[oc]] = c.obs_ids[oc];
                    for (std::size_t i = 0; i < c.track_ids.size(); ++i) {
                        if (key[i] < 0) continue;
                        const int tree_id = c.track_ids[i];
                        std::int64_t new_leaf;
                        const auto cb = claimed_by.find(tree_id);
                        if (cb != claimed_by.end())
                            new_leaf = hit_child(tree_id, key[i], cb->second);
                        else
                            new_leaf = miss_child(tree_id, key[i]);
                        for (auto& sel : child.selection)
                            if (sel.first == tree_id) {
                                sel.second = new_leaf;
                                break;
                            }
                    }
                }
                const std::size_t hsh = selection_hash(child.selection);
                bool dup = false;
                if (child_hashes.count(hsh)) {
                    for (const auto& e : emitted)
                        if (e.selection == child.selection) {
                            dup = true;
                            break;
                        }
                }
                if (!dup) {
                    child_hashes.insert(hsh);
                    emitted.push_back(std::move(child));
                }

                // successors in the option lattice
                for (std::size_t w = 0; w < work.size(); ++w) {
                    std::vector<int> next = cand.combo;
                    next[w] += 1;
                    const std::size_t nh = combo_hash(next);
                    if (visited[cand.prior].count(nh)) continue;
                    bool valid;
                    const double s = combo_score(cand.prior, next, valid);
                    if (!valid) continue;
                    visited[cand.prior].insert(nh);
                    heap.push({s, cand.prior, std::move(next)});
                }
            }
            children = std::move(emitted);
        }

        hyps = std::move(children);
        if (hyps.empty()) hyps.push_back(GlobalHypothesis{});

        // New tracks from observations gated by no existing track.
        for (int o : clustering.unclaimed_obs) {
            TrackTree tree;
            tree.id = next_tree_id++;
            tree.birth_time = scan.time;
            tree.birth_obs = obs_gid[o];
            TrackLeaf root;
            root.id = next_leaf_id++;
            root.est = init_estimate(scan.observations[o]);
            root.score = ln_gamma_nt;
            root.n_hits = 1;
            root.events.push_back({scan.time, TrackEvent::Kind::Hit, obs_gid[o]});
            tree.leaves.push_back(std::move(root));
            const std::int64_t root_id = tree.leaves[0].id;
            const int tree_id = tree.id;
            trees.push_back(std::move(tree));
            for (auto& h : hyps) h.selection.emplace_back(tree_id, root_id);
        }
        rebuild_tree_index();

        prune(scan.time);

        ScanStats stats;
        stats.clusters = obs_clusters;
        stats.trees = static_cast<int>(trees.size());
        stats.hypotheses = static_cast<int>(hyps.size());
        return stats;
    }

    // ---- pruning ----

    void prune(int now) {
        dedupe_and_rank(params.max_hyp_per_cluster);
        if (trees.empty()) return;
        const GlobalHypothesis& best = hyps[0];

        std::unordered_set<std::int64_t> protected_leaves;
        std::unordered_map<int, std::int64_t> best_leaf_of_tree;
        for (const auto& [tree, leaf] : best.selection) {
            protected_leaves.insert(leaf);
            best_leaf_of_tree.emplace(tree, leaf);
        }

        std::unordered_set<std::int64_t> dropped;

        // (a) relative score window per tree
        for (auto& tree : trees) {
            double top = -std::numeric_limits<double>::infinity();
            for (const auto& l : tree.leaves) top = std::max(top, l.score);
            const double floor_score = top - params.min_rel_score;
            std::erase_if(tree.leaves, [&](const TrackLeaf& l) {
                if (protected_leaves.count(l.id)) return false;
                const bool drop = l.score < floor_score;
                if (drop) dropped.insert(l.id);
                return drop;
            });
        }

        // (c) N-scan: keep only the branch consistent with the best global
        // hypothesis at time now - nscan.
        const int cutoff = now - params.nscan;
        for (auto& tree : trees) {
            const auto bit = best_leaf_of_tree.find(tree.id);
            if (bit == best_leaf_of_tree.end()) continue;
            const TrackLeaf* best_leaf = tree.find_leaf(bit->second);
            if (!best_leaf) continue;
            std::vector<TrackEvent> prefix;
            for (const auto& e : best_leaf->events)
                if (e.time <= cutoff) prefix.push_back(e);
            std::erase_if(tree.leaves, [&](const TrackLeaf& l) {
                if (protected_leaves.count(l.id)) return false;
                std::size_t n = 0;
                for (const auto& e : l.events) {
                    if (e.time > cutoff) break;
                    if (n >= prefix.size() || !(e == prefix[n])) {
                        dropped.insert(l.id);
                        return true;
                    }
                    ++n;
                }
                if (n != prefix.size()) {
                    dropped.insert(l.id);
                    return true;
                }
                return false;
            });
        }

        // Drop hypotheses that referenced a pruned leaf.
        if (!dropped.empty()) {
            std::erase_if(hyps, [&](const GlobalHypothesis& h) {
                for (const auto& [tree, leaf] : h.selection)
                    if (dropped.count(leaf)) return true;
                return false;
            });
            if (hyps.empty()) hyps.push_back(GlobalHypothesis{});
        }

        // Leaves referenced by no surviving hypothesis can never be selected
        // again; drop them, then empty trees.
        std::unordered_set<std::int64_t> referenced;
        for (const auto& h : hyps)
            for (const auto& [tree, leaf] : h.selection) referenced.insert(leaf);
        for (auto& tree : trees)
            std::erase_if(tree.leaves, [&](const TrackLeaf& l) {
                return !referenced.count(l.id);
            });
        std::erase_if(trees, [](const TrackTree& t) { return t.leaves.empty(); });
        rebuild_tree_index();
    }
};

// ---------------------------------------------------------------
// Public facade
// ---------------------------------------------------------------

Tracker::Tracker(TrackerMode mode, const RoadNetwork& net, const MotionModel& mm,
                 const ObservationModel& om, const TrackerParams& params)
    : impl_(std::make_unique<Impl>()) {
    params.validate();
    impl_->mode = mode;
    impl_->net = &net;
    impl_->mm = mm;
    impl_->om = om;
    impl_->params = params;

    const double dt = mm.dt;
    const double q2 = mm.q * mm.q;
    impl_->F4.setIdentity();
    impl_->F4(0, 2) = dt;
    impl_->F4(1, 3) = dt;
    impl_->Q4.setZero();
    const double a = q2 * dt * dt * dt / 3.0;
    const double b = q2 * dt * dt / 2.0;
    const double c = q2 * dt;
    impl_->Q4(0, 0) = impl_->Q4(1, 1) = a;
    impl_->Q4(2, 2) = impl_->Q4(3, 3) = c;
    impl_->Q4(0, 2) = impl_->Q4(2, 0) = b;
    impl_->Q4(1, 3) = impl_->Q4(3, 1) = b;
    impl_->R2 = om.sigma * om.sigma * Mat2::Identity();
    impl_->free_init_pos_cov = impl_->R2;
    impl_->free_init_vel_var = om.sigma * om.sigma / 4.0 + 1.0;
    impl_->nc_init_cov = om.R;
    impl_->nc_init_cov(1, 1) += 1.0;  // initial velocity is weakly observed

    impl_->hyps.push_back(GlobalHypothesis{});
}

Tracker::~Tracker() = default;
Tracker::Tracker(Tracker&&) noexcept = default;
Tracker& Tracker::operator=(Tracker&&) noexcept = default;

void Tracker::predict_to(int time) { impl_->predict_to(time); }
ScanStats Tracker::process_scan(const Scan& scan) {
    return impl_->process_scan(scan);
}

std::vector<ConfirmedTrack> Tracker::best_global() const {
    std::vector<ConfirmedTrack> out;
    if (impl_->hyps.empty()) return out;
    for (const auto& [tree_id, leaf_id] : impl_->hyps[0].selection) {
        const TrackTree& tree =
            impl_->trees[impl_->tree_index_cache.at(tree_id)];
        const TrackLeaf* leaf = tree.find_leaf(leaf_id);
        if (!leaf || leaf->n_hits < impl_->params.confirm_hits) continue;
        ConfirmedTrack ct;
        ct.tree_id = tree_id;
        ct.est = leaf->est;
        ct.world = impl_->world(leaf->est);
        ct.existence = existence_probability(leaf->score);
        out.push_back(std::move(ct));
    }
    return out;
}

std::vector<std::pair<int, const TrackLeaf*>> Tracker::best_selection() const {
    std::vector<std::pair<int, const TrackLeaf*>> out;
    if (impl_->hyps.empty()) return out;
    for (const auto& [tree_id, leaf_id] : impl_->hyps[0].selection) {
        const TrackTree& tree =
            impl_->trees[impl_->tree_index_cache.at(tree_id)];
        out.emplace_back(tree_id, tree.find_leaf(leaf_id));
    }
    return out;
}

double Tracker::best_log_prob() const {
    return impl_->hyps.empty() ? 0.0 : impl_->hyp_log_prob(impl_->hyps[0]);
}

double Tracker::hypothesis_log_prob(const GlobalHypothesis& h) const {
    return impl_->hyp_log_prob(h);
}

int Tracker::time() const { return impl_->time; }
int Tracker::num_trees() const { return static_cast<int>(impl_->trees.size()); }
int Tracker::num_hypotheses() const {
    return static_cast<int>(impl_->hyps.size());
}
const std::vector<TrackTree>& Tracker::trees() const { return impl_->trees; }
const std::vector<GlobalHypothesis>& Tracker::hypotheses() const {
    return impl_->hyps;
}
const TrackerParams& Tracker::params() const { return impl_->params; }
TrackerMode Tracker::mode() const { return impl_->mode; }

}  // namespace nctrack
