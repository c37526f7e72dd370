#pragma once

#include <utility>
#include <vector>

#include "nctrack/assignment.hpp"
#include "nctrack/network.hpp"
#include "nctrack/statespace.hpp"

namespace nctrack {

/// Statistical gate. The network-constrained tracker gates on the scalar
/// position component; the free-space baseline uses the ellipsoidal form.
struct Gate {
    enum class Mode { Ellipsoidal, Scalar };
    Mode mode = Mode::Scalar;
    double gamma_g = 9.2103403719761836;  // 99% chi-square quantile, 2 dof
    double kappa = 3.0;
};

/// chi-square quantile with 2 degrees of freedom: -2 ln(1 - p).
double chi2_quantile_2dof(double prob);

/// Two-stage network-constrained gate: the observation's discrete state
/// must match the estimate's segment (or, with allow_adjacent, be a direct
/// successor, in which case the innovation is compensated as if the
/// transition had occurred), then the statistical gate must pass.
bool gate(const Gate& g, const Vec2& zhat, const Mat2& S, SegmentId est_segment,
          const Observation& obs, bool allow_adjacent, const RoadNetwork& net);

/// One independent association subproblem: track trees linked by shared
/// gated observations.
struct Cluster {
    std::vector<int> track_ids;  // sorted
    std::vector<int> obs_ids;    // sorted
};

struct Clustering {
    std::vector<Cluster> clusters;   // ordered by smallest member track id
    std::vector<int> unclaimed_obs;  // gated by no track: birth / false-alarm pool
};

/// Connected components of the bipartite track-observation graph. Tracks
/// with no gated observation become singleton clusters; observations gated
/// by no track are returned separately.
Clustering build_clusters(const std::vector<std::pair<int, int>>& gated_pairs,
                          const std::vector<int>& track_ids,
                          const std::vector<int>& obs_ids);

/// Augmented assignment matrix for one cluster. Entries are negated score
/// increments, so minimizing total cost maximizes the summed increments.
///
/// Layout: rows [0, T) are tracks and rows [T, T+O) dispose of observation
/// j as extraneous (new target or false alarm); columns [0, O) are
/// observations and columns [O, O+T) the per-track miss columns.
struct CostMatrix {
    Eigen::MatrixXd cost;
    int n_tracks = 0;
    int n_obs = 0;
};

/// Builds the cluster cost matrix from per-(track, observation) score
/// increments. Non-finite entries of hit_increments mark ungated pairs.
/// The extraneous disposal uses the better of the new-track score and the
/// false-alarm baseline.
CostMatrix assemble_costs(const Eigen::MatrixXd& hit_increments,
                          const std::vector<double>& miss_increments,
                          double new_track_score, double false_alarm_baseline);

/// Row-saturating rectangular reduction of a CostMatrix: one row per
/// observation, columns = tracks then per-observation extraneous slots.
/// Track claims are priced relative to that track's miss so unassigned
/// tracks implicitly miss; `baseline` is the summed miss increment (score
/// units). A solution's score increment is baseline - assignment cost.
struct LoweredCosts {
    Eigen::MatrixXd cost;
    double baseline = 0.0;
};

LoweredCosts lower(const CostMatrix& m);

}  // namespace nctrack
