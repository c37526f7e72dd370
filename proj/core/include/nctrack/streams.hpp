#pragma once

#include <iosfwd>
#include <string>

#include "nctrack/sim.hpp"

namespace nctrack {

/// Line-delimited record streams: one JSON object per line. Doubles are
/// serialized round-trip exactly, so replaying an exported stream
/// reproduces the live run bit for bit.
void write_truth(std::ostream& out, const GroundTruth& truth);
void write_scans(std::ostream& out, const std::vector<Scan>& scans);

GroundTruth read_truth(std::istream& in, const RoadNetwork& net);
std::vector<Scan> read_scans(std::istream& in);

GroundTruth read_truth_file(const std::string& path, const RoadNetwork& net);
std::vector<Scan> read_scans_file(const std::string& path);

}  // namespace nctrack
