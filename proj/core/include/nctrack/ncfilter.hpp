#pragma once

#include <vector>

#include "nctrack/network.hpp"
#include "nctrack/statespace.hpp"

namespace nctrack {

/// One discrete-state alternative produced by a time update.
struct PredictBranch {
    HybridEstimate est;
    double log_transition;  // ln p(segment sequence | previous segment)
};

/// Result of a conditional time update. When the predicted mean runs past
/// the end of a sink segment the target leaves the tracking volume:
/// exited=true and branches is empty. Otherwise exp(log_transition) over
/// the branches sums to 1.
struct PredictOutcome {
    std::vector<PredictBranch> branches;
    bool exited = false;
};

struct UpdateOutcome {
    HybridEstimate estimate;
    double log_likelihood;  // ln N(z; zhat, S)
    Vec2 innovation;
    Mat2 innovation_cov;
};

/// Kalman time update conditioned on the discrete state. A predicted mean
/// past the segment end opens one branch per successor, with the traveled
/// distance compensated (position -= L) and the covariance carried
/// unchanged across the transition. Compensation repeats while the mean is
/// still past the next segment's end (depth capped at 5 segments per step,
/// unreachable at pedestrian speeds on well-formed networks).
PredictOutcome predict(const RoadNetwork& net, const MotionModel& mm,
                       const HybridEstimate& est);

/// Standard Kalman measurement update; the discrete state never changes
/// here. Requires the observation to allow the estimate's segment.
UpdateOutcome update(const ObservationModel& om, const HybridEstimate& est,
                     const Observation& obs);

/// Probability mass of the position marginal beyond the segment end.
double mass_past_end(const RoadNetwork& net, const HybridEstimate& est);

/// Corner-case handling near a junction: if the Gaussian position mass
/// beyond the segment end exceeds leak_threshold, returns the original
/// estimate plus one copy per successor re-expressed on that successor
/// (as if a transition had occurred), with the probability split by tail
/// mass times the transition probability. Far from a junction returns just
/// the original with log-probability 0. Moments are never altered; only
/// the probability is split.
std::vector<PredictBranch> split_near_junction(const RoadNetwork& net,
                                               const HybridEstimate& est,
                                               double leak_threshold);

/// Starts a track from an observation: the measurement fixes position and
/// speed (H is invertible), missing components take defaults, and the
/// covariance is the configured initial covariance.
HybridEstimate init_track(const RoadNetwork& net, const ObservationModel& om,
                          const Observation& obs,
                          const KinematicState& defaults, const Mat2& init_cov);

}  // namespace nctrack
