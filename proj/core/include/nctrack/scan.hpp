#pragma once

#include <vector>

#include "nctrack/network.hpp"
#include "nctrack/statespace.hpp"

namespace nctrack {

/// Along-road interval [lo, hi] on one segment covered by a sensor.
struct FootprintInterval {
    SegmentId segment = kInvalidSegment;
    double lo = 0.0;
    double hi = 0.0;
};

using Footprint = std::vector<FootprintInterval>;

double footprint_length(const Footprint& fp);
bool footprint_covers(const Footprint& fp, SegmentId segment, double along);

/// One sensor's report at one time step. A reported scan with no
/// observations carries negative information (the sensor looked and saw
/// nothing); an unreported scan is never delivered to the tracker.
struct Scan {
    int time = 0;
    int sensor = 0;
    Footprint footprint;
    std::vector<Observation> observations;
    bool is_reported = true;
    Point2 sensor_pos = Point2::Zero();  // sensor world position
    double fov = 30.0;                   // half-length of the field of view (m)
};

}  // namespace nctrack
