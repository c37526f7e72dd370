#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nctrack/association.hpp"
#include "nctrack/ncfilter.hpp"
#include "nctrack/network.hpp"
#include "nctrack/scan.hpp"
#include "nctrack/statespace.hpp"

namespace nctrack {

struct TrackerParams {
    double p_detect = 0.95;           // P_D within a sensor's field of view
    double p_survive = 1.0;           // per-step survival probability
    double lambda_fa_density = 0.01;  // false alarms per meter of road
                                      // (free-space mode: per m^2 of view disc)
    double lambda_nt_density = 0.0;   // assumed new-target spatial density
    double gamma_nt = 0.1;            // initial likelihood ratio of a new track
    int max_hyp_per_cluster = 50;     // global hypothesis cap
    double min_rel_score = 4.0;       // per-tree relative score window
    int nscan = 3;                    // N-scan pruning depth (time steps)
    int confirm_hits = 2;             // observation count needed to report
    double leak_threshold = 0.01;     // junction-split trigger mass
    bool always_split = false;        // split at every junction approach instead
                                      // of only when an observation requires it
    Gate gate;

    void validate() const;
};

/// Score after a time update: parent + ln P_S + ln p(transition).
double score_predict(double parent_score, const TrackerParams& p,
                     double log_transition);

struct Detection {
    double gaussian_likelihood = 0.0;  // N(z; zhat, S)
    double segment_belief = 1.0;       // z^delta at the estimate's segment
};

/// Score after a measurement update: miss adds ln(1 - P_D); a detection
/// adds ln(P_D * N * belief / lambda_fa).
double score_update(double parent_score, const TrackerParams& p,
                    const std::optional<Detection>& detection);

/// exp(score) / (1 + exp(score)), overflow-safe.
double existence_probability(double score);

enum class TrackerMode { NetworkConstrained, FreeSpace };

/// Leaf state: 2-dim along-segment kinematics in network-constrained mode,
/// 4-dim planar (x, y, vx, vy) in free-space mode.
struct TrackEstimate {
    int dim = 2;
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
    SegmentId segment = kInvalidSegment;

    HybridEstimate hybrid() const;
    static TrackEstimate from_hybrid(const HybridEstimate& h);
};

struct TrackEvent {
    enum class Kind : std::uint8_t { Hit, Miss, Transition };
    int time = 0;
    Kind kind = Kind::Hit;
    std::int64_t id = 0;  // Hit: observation id; Transition: segment; Miss: sensor

    bool operator==(const TrackEvent&) const = default;
};

/// One track hypothesis: a leaf of a track tree. The event history fully
/// describes the assumed discrete-state transitions and associations.
struct TrackLeaf {
    std::int64_t id = 0;
    TrackEstimate est;
    double score = 0.0;  // log-likelihood ratio
    int n_hits = 0;
    std::vector<TrackEvent> events;
};

struct TrackTree {
    int id = 0;
    int birth_time = 0;
    std::int64_t birth_obs = -1;  // global id of the founding observation
    std::vector<TrackLeaf> leaves;

    const TrackLeaf* find_leaf(std::int64_t leaf_id) const;
};

/// A consistent selection of at most one leaf per track tree. Its
/// log-probability is the sum of the selected leaves' scores (the shared
/// false-alarm constant cancels in ranking and is not materialized).
struct GlobalHypothesis {
    std::vector<std::pair<int, std::int64_t>> selection;  // (tree, leaf), sorted

    bool operator==(const GlobalHypothesis&) const = default;
};

struct ScanStats {
    int clusters = 0;  // association clusters holding observations
    int trees = 0;
    int hypotheses = 0;
};

struct ConfirmedTrack {
    int tree_id = 0;
    TrackEstimate est;
    Point2 world = Point2::Zero();
    double existence = 0.0;
};

/// Track-oriented multiple hypothesis tracker over network-bound targets,
/// or over free 2-D constant-velocity targets in baseline mode. Process
/// scans in nondecreasing time order; sensors reporting at the same time
/// step are folded in sequentially and the time update runs once per step.
class Tracker {
public:
    Tracker(TrackerMode mode, const RoadNetwork& net, const MotionModel& mm,
            const ObservationModel& om, const TrackerParams& params);
    ~Tracker();
    Tracker(Tracker&&) noexcept;
    Tracker& operator=(Tracker&&) noexcept;

    /// Advances the time update to `time` (one step per call of the
    /// configured dt); used directly when no sensor reported at a step.
    void predict_to(int time);

    /// One sensor scan: predicts if the scan starts a new time step, then
    /// gates, clusters, solves the per-cluster assignments, spawns child
    /// leaves and new tracks, rebuilds the global hypotheses and prunes.
    ScanStats process_scan(const Scan& scan);

    /// Confirmed tracks of the highest-probability global hypothesis.
    std::vector<ConfirmedTrack> best_global() const;

    /// Leaves selected by the best hypothesis regardless of confirmation.
    std::vector<std::pair<int, const TrackLeaf*>> best_selection() const;

    double best_log_prob() const;
    double hypothesis_log_prob(const GlobalHypothesis& h) const;

    int time() const;
    int num_trees() const;
    int num_hypotheses() const;
    const std::vector<TrackTree>& trees() const;
    const std::vector<GlobalHypothesis>& hypotheses() const;
    const TrackerParams& params() const;
    TrackerMode mode() const;

    /// JSON document of trees, leaves, scores and hypotheses (debugging
    /// and regression tests).
    std::string snapshot() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace nctrack
