#pragma once

#include <Eigen/Dense>
#include <vector>

#include "nctrack/network.hpp"

namespace nctrack {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Along-segment kinematics: position (m from segment start) and signed
/// velocity (m/s, positive toward the segment end).
struct KinematicState {
    double position = 0.0;
    double velocity = 0.0;

    Vec2 vec() const { return Vec2(position, velocity); }
    static KinematicState from_vec(const Vec2& v) { return {v(0), v(1)}; }
};

/// Gaussian over the along-segment kinematics paired with the discrete
/// segment the target is on.
struct HybridEstimate {
    Vec2 mean = Vec2::Zero();        // (position, velocity)
    Mat2 cov = Mat2::Zero();
    SegmentId segment = kInvalidSegment;
};

/// Linear constant-velocity motion model, discretized at dt.
struct MotionModel {
    Mat2 F;
    Mat2 Q;
    double dt = 1.0;
    double q = 0.0;  // process noise intensity (m)
};

/// Linear observation model: both along-segment position and speed are
/// measured directly.
struct ObservationModel {
    Mat2 H;
    Mat2 R;
    double sigma = 0.0;  // position noise std (m)
};

/// One along-segment measurement together with the discrete-state
/// information the sensor attaches to it.
struct Observation {
    Vec2 z = Vec2::Zero();  // (position, speed)
    std::vector<std::pair<SegmentId, double>> segment_belief;

    /// Highest-probability segment; the shipped simulator emits exactly
    /// one entry with probability 1.
    SegmentId segment() const;
    double belief(SegmentId s) const;
};

/// F = [[1, dt], [0, 1]], Q = q^2 [[dt^3/3, dt^2/2], [dt^2/2, dt]].
MotionModel make_cv_model(double dt, double q);

/// H = I, R = diag(sigma^2, sigma^2/4).
ObservationModel make_obs_model(double sigma);

/// World position of a hybrid estimate. Out-of-range mean positions
/// (transient overshoot between predict and transition handling) are
/// clamped to the segment; this affects reporting only, never filtering.
Point2 to_world(const RoadNetwork& net, const HybridEstimate& est);

}  // namespace nctrack
