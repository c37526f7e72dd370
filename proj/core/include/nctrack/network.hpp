#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace nctrack {

using Point2 = Eigen::Vector2d;

/// Index of a road segment (a vertex of the network graph).
using SegmentId = std::int32_t;
inline constexpr SegmentId kInvalidSegment = -1;

struct Transition {
    SegmentId to;
    double p;
};

/// One directed road piece, embedded as a straight line in the plane.
struct Segment {
    Point2 start;
    Point2 end;
    double length;  // == |end - start|, always > 0
};

/// Directed graph of road segments with per-segment transition
/// probabilities. Immutable after construction; safe to share across
/// threads.
class RoadNetwork {
public:
    RoadNetwork(std::vector<Segment> segments,
                std::vector<std::vector<Transition>> transitions);

    int size() const { return static_cast<int>(segments_.size()); }
    bool valid(SegmentId s) const { return s >= 0 && s < size(); }

    const Segment& segment(SegmentId s) const;
    double length(SegmentId s) const { return segment(s).length; }

    /// Outgoing transitions of `s`; empty for a sink segment (targets
    /// leaving through a sink exit the tracking volume).
    const std::vector<Transition>& successors(SegmentId s) const;

    /// Incoming segments of `s` (derived; used by the sensor footprint walk).
    const std::vector<SegmentId>& predecessors(SegmentId s) const;

    /// World position at `along` meters from the segment start.
    /// `along` must lie in [0, length(s)].
    Point2 embed(SegmentId s, double along) const;

    /// Sum of all segment lengths.
    double total_length() const { return total_length_; }

private:
    std::vector<Segment> segments_;
    std::vector<std::vector<Transition>> transitions_;
    std::vector<std::vector<SegmentId>> predecessors_;
    double total_length_ = 0.0;
};

/// Parses and validates a network config document (JSON text, schema
/// "nctrack-network-v1"). Rows in `transitions` may omit "p"; omitted
/// probabilities share the remaining mass of their source segment
/// equally. Throws std::runtime_error with the offending segment named
/// on any validation failure.
RoadNetwork load_network(const std::string& text);

/// Reads the document from a file path.
RoadNetwork load_network_file(const std::string& path);

}  // namespace nctrack
