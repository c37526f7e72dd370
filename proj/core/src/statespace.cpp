#include "nctrack/statespace.hpp"

#include <algorithm>
#include <stdexcept>

namespace nctrack {

SegmentId Observation::segment() const {
    if (segment_belief.empty())
        throw std::invalid_argument("observation: empty segment belief");
    auto it = std::max_element(
        segment_belief.begin(), segment_belief.end(),
        [](const auto& a, const auto& b) { return a.second < b.second; });
    return it->first;
}

double Observation::belief(SegmentId s) const {
    for (const auto& [seg, p] : segment_belief)
        if (seg == s) return p;
    return 0.0;
}

MotionModel make_cv_model(double dt, double q) {
    if (!(dt > 0.0)) throw std::invalid_argument("make_cv_model: dt must be > 0");
    if (!(q > 0.0)) throw std::invalid_argument("make_cv_model: q must be > 0");
    MotionModel m;
    m.dt = dt;
    m.q = q;
    m.F << 1.0, dt, 0.0, 1.0;
    const double q2 = q * q;
    m.Q << q2 * dt * dt * dt / 3.0, q2 * dt * dt / 2.0,
           q2 * dt * dt / 2.0,      q2 * dt;
    return m;
}

ObservationModel make_obs_model(double sigma) {
    if (!(sigma > 0.0))
        throw std::invalid_argument("make_obs_model: sigma must be > 0");
    ObservationModel m;
    m.sigma = sigma;
    m.H = Mat2::Identity();
    m.R << sigma * sigma, 0.0, 0.0, sigma * sigma / 4.0;
    return m;
}

Point2 to_world(const RoadNetwork& net, const HybridEstimate& est) {
    const double len = net.length(est.segment);
    const double along = std::clamp(est.mean(0), 0.0, len);
    return net.embed(est.segment, along);
}

}  // namespace nctrack
