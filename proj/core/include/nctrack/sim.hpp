#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nctrack/network.hpp"
#include "nctrack/scan.hpp"
#include "nctrack/statespace.hpp"

namespace nctrack {

using Rng = std::mt19937_64;

struct SpeedDist {
    double mean = 0.0;
    double sd = 0.0;
};

struct ScenarioConfig {
    std::string name;
    std::string network;  // path of the network document
    int duration = 100;

    struct InitialTarget {
        SegmentId segment = 0;
        double position = 0.0;
        double speed = 1.415;
    };
    std::vector<InitialTarget> initial_targets;
    int random_initial_targets = 0;

    SpeedDist target_speed{1.415, 0.215};
    int sensor_count = 10;
    SpeedDist sensor_speed{12.3, 1.5};
    double fov_half_length = 30.0;
    double p_detect = 0.95;
    double clutter_rate = 0.6;         // expected false observations per scan
    double birth_rate = 0.0;           // expected new targets per time step
    double empty_scan_fraction = 1.0;  // probability an empty scan is reported
    double dt = 1.0;
    double process_noise_q = 0.1;
    double obs_sigma = 0.5;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// Exact (noise-free representation) state of one live target.
struct TruthTarget {
    int id = 0;
    SegmentId segment = kInvalidSegment;
    double position = 0.0;
    double velocity = 0.0;
};

struct TruthRecord {
    int time = 0;
    int id = 0;
    SegmentId segment = kInvalidSegment;
    double position = 0.0;
    double velocity = 0.0;
    Point2 world = Point2::Zero();
};

struct GroundTruth {
    std::vector<std::vector<TruthRecord>> by_step;

    std::vector<Point2> world_points(int step) const;
};

struct SensorState {
    int id = 0;
    SegmentId segment = kInvalidSegment;
    double position = 0.0;
    double speed = 0.0;
    // Successor the sensor will take at the current segment's end; chosen
    // on segment entry so the footprint can look past the junction.
    SegmentId committed_next = kInvalidSegment;
};

/// Advances every target by one constant-velocity step with sampled
/// process noise, sampling segment transitions at segment ends. Targets
/// running off a sink (or backwards past the segment start) are removed.
void step_targets(std::vector<TruthTarget>& targets, const RoadNetwork& net,
                  double dt, double q, Rng& rng);

/// Along-road field of view: the interval within fov meters of graph
/// distance ahead and behind the sensor. The forward walk follows the
/// sensor's committed successor at its current junction and the first
/// listed successor beyond; the backward walk follows first listed
/// predecessors. Total covered length never exceeds 2*fov.
Footprint sensor_footprint(const RoadNetwork& net, const SensorState& sensor,
                           double fov);

/// One sensor report: in-footprint targets detected with probability
/// p_detect (measurement noise per the observation model), plus
/// Poisson(clutter_rate) false observations placed uniformly on the
/// footprint with speed uniform in [-2, 2] m/s. Empty scans are reported
/// with probability empty_scan_fraction.
Scan generate_scan(const std::vector<TruthTarget>& targets,
                   const SensorState& sensor, const ScenarioConfig& cfg,
                   const RoadNetwork& net, int time, Rng& rng);

/// Poisson(birth_rate) new targets at uniform positions over the network,
/// heading toward the segment end with speed ~ N(target_speed).
void spawn_births(std::vector<TruthTarget>& targets, int& next_id,
                  const ScenarioConfig& cfg, const RoadNetwork& net, Rng& rng);

/// Samples a uniform position over the total road length.
std::pair<SegmentId, double> uniform_network_position(const RoadNetwork& net,
                                                      Rng& rng);

/// Full scenario generation: ground truth and the reported scan stream,
/// both bit-reproducible for a given seed.
struct SimOutput {
    GroundTruth truth;
    std::vector<Scan> scans;  // reported scans, ordered by (time, sensor)
};

SimOutput simulate(const RoadNetwork& net, const ScenarioConfig& cfg);

/// Parses a scenario document (JSON, schema "nctrack-scenario-v1").
ScenarioConfig scenario_from_json(const std::string& text);
std::string scenario_to_json(const ScenarioConfig& cfg);

/// Resolves the data directory (NCTRACK_DATA_DIR env var, falling back to
/// the build-time location).
std::string data_dir();

/// Loads a scenario preset: "1", "2", "3a" or "3b". A non-negative
/// sensor_count or empty_scan_fraction overrides the preset value.
std::pair<ScenarioConfig, RoadNetwork> build_scenario(
    const std::string& preset, int sensor_count = -1,
    double empty_scan_fraction = -1.0);

}  // namespace nctrack
