#include "nctrack/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace nctrack {

void ScenarioConfig::validate() const {
    if (duration < 1) throw std::invalid_argument("scenario: duration must be >= 1");
    if (sensor_count < 0) throw std::invalid_argument("scenario: sensor_count < 0");
    if (clutter_rate < 0.0 || birth_rate < 0.0)
        throw std::invalid_argument("scenario: rates must be >= 0");
    if (empty_scan_fraction < 0.0 || empty_scan_fraction > 1.0)
        throw std::invalid_argument("scenario: empty_scan_fraction outside [0, 1]");
    if (!(p_detect > 0.0 && p_detect <= 1.0))
        throw std::invalid_argument("scenario: p_detect outside (0, 1]");
    if (!(dt > 0.0) || !(process_noise_q > 0.0) || !(obs_sigma > 0.0))
        throw std::invalid_argument("scenario: dt, q and sigma must be > 0");
    if (!(fov_half_length > 0.0))
        throw std::invalid_argument("scenario: fov_half_length must be > 0");
}

std::vector<Point2> GroundTruth::world_points(int step) const {
    std::vector<Point2> out;
    if (step < 0 || step >= static_cast<int>(by_step.size())) return out;
    out.reserve(by_step[step].size());
    for (const auto& r : by_step[step]) out.push_back(r.world);
    return out;
}

namespace {

SegmentId sample_successor(const RoadNetwork& net, SegmentId seg, Rng& rng) {
    const auto& succ = net.successors(seg);
    if (succ.empty()) return kInvalidSegment;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double u = u01(rng);
    double acc = 0.0;
    for (const auto& t : succ) {
        acc += t.p;
        if (u <= acc) return t.to;
    }
    return succ.back().to;
}

}  // namespace

void step_targets(std::vector<TruthTarget>& targets, const RoadNetwork& net,
                  double dt, double q, Rng& rng) {
    // Cholesky factor of the CV process noise, shared by all targets.
    const double q2 = q * q;
    Eigen::Matrix2d Q;
    Q << q2 * dt * dt * dt / 3.0, q2 * dt * dt / 2.0,
         q2 * dt * dt / 2.0,      q2 * dt;
    const Eigen::Matrix2d L = Q.llt().matrixL();
    std::normal_distribution<double> n01(0.0, 1.0);

    std::vector<TruthTarget> kept;
    kept.reserve(targets.size());
    for (TruthTarget t : targets) {
        const Vec2 noise = L * Vec2(n01(rng), n01(rng));
        t.position += t.velocity * dt + noise(0);
        t.velocity += noise(1);

        bool alive = true;
        int depth = 0;
        while (t.position > net.length(t.segment)) {
            const SegmentId next = sample_successor(net, t.segment, rng);
            if (next == kInvalidSegment || ++depth > 8) {
                alive = false;  // sink: the target leaves the volume
                break;
            }
            t.position -= net.length(t.segment);
            t.segment = next;
        }
        if (t.position < 0.0) alive = false;  // reversed out of the segment
        if (alive) kept.push_back(t);
    }
    targets = std::move(kept);
}

Footprint sensor_footprint(const RoadNetwork& net, const SensorState& sensor,
                           double fov) {
    std::map<SegmentId, std::vector<std::pair<double, double>>> spans;
    auto add = [&](SegmentId seg, double lo, double hi) {
        if (hi - lo > 1e-12) spans[seg].emplace_back(lo, hi);
    };

    // Forward: remainder of the current segment, then along the committed
    // successor, then first listed successors.
    {
        SegmentId seg = sensor.segment;
        double pos = sensor.position;
        double remaining = fov;
        for (int depth = 0; depth < 16 && remaining > 1e-12; ++depth) {
            const double len = net.length(seg);
            const double hi = std::min(len, pos + remaining);
            add(seg, pos, hi);
            remaining -= hi - pos;
            if (hi < len || remaining <= 1e-12) break;
            SegmentId next = kInvalidSegment;
            if (depth == 0 && sensor.committed_next != kInvalidSegment)
                next = sensor.committed_next;
            else if (!net.successors(seg).empty())
                next = net.successors(seg).front().to;
            if (next == kInvalidSegment) break;
            seg = next;
            pos = 0.0;
        }
    }

    // Backward mirror over predecessors.
    {
        SegmentId seg = sensor.segment;
        double pos = sensor.position;
        double remaining = fov;
        for (int depth = 0; depth < 16 && remaining > 1e-12; ++depth) {
            const double lo = std::max(0.0, pos - remaining);
            add(seg, lo, pos);
            remaining -= pos - lo;
            if (lo > 0.0 || remaining <= 1e-12) break;
            const auto& preds = net.predecessors(seg);
            if (preds.empty()) break;
            seg = preds.front();
            pos = net.length(seg);
        }
    }

    Footprint fp;
    for (auto& [seg, list] : spans) {
        std::sort(list.begin(), list.end());
        double lo = list[0].first, hi = list[0].second;
        for (std::size_t i = 1; i < list.size(); ++i) {
            if (list[i].first <= hi + 1e-12) {
                hi = std::max(hi, list[i].second);
            } else {
                fp.push_back({seg, lo, hi});
                lo = list[i].first;
                hi = list[i].second;
            }
        }
        fp.push_back({seg, lo, hi});
    }
    return fp;
}

Scan generate_scan(const std::vector<TruthTarget>& targets,
                   const SensorState& sensor, const ScenarioConfig& cfg,
                   const RoadNetwork& net, int time, Rng& rng) {
    Scan scan;
    scan.time = time;
    scan.sensor = sensor.id;
    scan.footprint = sensor_footprint(net, sensor, cfg.fov_half_length);
    scan.sensor_pos = net.embed(sensor.segment, sensor.position);
    scan.fov = cfg.fov_half_length;

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);

    for (const auto& t : targets) {
        if (!footprint_covers(scan.footprint, t.segment, t.position)) continue;
        if (u01(rng) > cfg.p_detect) continue;
        Observation obs;
        obs.z = Vec2(t.position + cfg.obs_sigma * n01(rng),
                     t.velocity + 0.5 * cfg.obs_sigma * n01(rng));
        obs.segment_belief = {{t.segment, 1.0}};
        scan.observations.push_back(std::move(obs));
    }

    std::poisson_distribution<int> clutter_count(cfg.clutter_rate);
    const int n_clutter = clutter_count(rng);
    const double total = footprint_length(scan.footprint);
    for (int i = 0; i < n_clutter && total > 0.0; ++i) {
        double d = u01(rng) * total;
        SegmentId seg = scan.footprint.front().segment;
        double along = scan.footprint.front().lo;
        for (const auto& iv : scan.footprint) {
            const double len = iv.hi - iv.lo;
            if (d <= len) {
                seg = iv.segment;
                along = iv.lo + d;
                break;
            }
            d -= len;
        }
        Observation obs;
        obs.z = Vec2(along, -2.0 + 4.0 * u01(rng));
        obs.segment_belief = {{seg, 1.0}};
        scan.observations.push_back(std::move(obs));
    }

    scan.is_reported =
        !scan.observations.empty() || u01(rng) < cfg.empty_scan_fraction;
    return scan;
}

std::pair<SegmentId, double> uniform_network_position(const RoadNetwork& net,
                                                      Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, net.total_length());
    double d = u(rng);
    for (SegmentId s = 0; s < net.size(); ++s) {
        const double len = net.length(s);
        if (d <= len) return {s, d};
        d -= len;
    }
    return {static_cast<SegmentId>(net.size() - 1),
            net.length(static_cast<SegmentId>(net.size() - 1))};
}

void spawn_births(std::vector<TruthTarget>& targets, int& next_id,
                  const ScenarioConfig& cfg, const RoadNetwork& net, Rng& rng) {
    if (cfg.birth_rate <= 0.0) return;
    std::poisson_distribution<int> count(cfg.birth_rate);
    std::normal_distribution<double> speed(cfg.target_speed.mean,
                                           cfg.target_speed.sd);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
        const auto [seg, along] = uniform_network_position(net, rng);
        TruthTarget t;
        t.id = next_id++;
        t.segment = seg;
        t.position = along;
        t.velocity = speed(rng);
        targets.push_back(t);
    }
}

SimOutput simulate(const RoadNetwork& net, const ScenarioConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.rng_seed);
    std::normal_distribution<double> n01(0.0, 1.0);

    SimOutput out;
    out.truth.by_step.resize(cfg.duration);

    std::vector<TruthTarget> targets;
    int next_id = 0;
    for (const auto& it : cfg.initial_targets) {
        if (!net.valid(it.segment))
            throw std::invalid_argument("scenario: initial target on unknown segment");
        targets.push_back({next_id++, it.segment, it.position, it.speed});
    }
    for (int i = 0; i < cfg.random_initial_targets; ++i) {
        const auto [seg, along] = uniform_network_position(net, rng);
        targets.push_back({next_id++, seg, along,
                           cfg.target_speed.mean + cfg.target_speed.sd * n01(rng)});
    }

    std::vector<SensorState> sensors(cfg.sensor_count);
    for (int i = 0; i < cfg.sensor_count; ++i) {
        auto& s = sensors[i];
        s.id = i;
        const auto [seg, along] = uniform_network_position(net, rng);
        s.segment = seg;
        s.position = along;
        s.speed = cfg.sensor_speed.mean + cfg.sensor_speed.sd * n01(rng);
        s.committed_next = sample_successor(net, seg, rng);
    }

    auto advance_sensor = [&](SensorState& s) {
        s.position += s.speed * cfg.dt;
        int depth = 0;
        while (s.position > net.length(s.segment)) {
            if (s.committed_next == kInvalidSegment || ++depth > 8) {
                // Off the network: respawn uniformly to keep the fleet size.
                const auto [seg, along] = uniform_network_position(net, rng);
                s.segment = seg;
                s.position = along;
                s.committed_next = sample_successor(net, seg, rng);
                return;
            }
            s.position -= net.length(s.segment);
            s.segment = s.committed_next;
            s.committed_next = sample_successor(net, s.segment, rng);
        }
    };

    for (int k = 0; k < cfg.duration; ++k) {
        if (k > 0) {
            step_targets(targets, net, cfg.dt, cfg.process_noise_q, rng);
            spawn_births(targets, next_id, cfg, net, rng);
            for (auto& s : sensors) advance_sensor(s);
        }
        auto& recs = out.truth.by_step[k];
        for (const auto& t : targets) {
            TruthRecord r;
            r.time = k;
            r.id = t.id;
            r.segment = t.segment;
            r.position = t.position;
            r.velocity = t.velocity;
            r.world = net.embed(t.segment, std::clamp(t.position, 0.0,
                                                      net.length(t.segment)));
            recs.push_back(r);
        }
        for (const auto& s : sensors) {
            Scan scan = generate_scan(targets, s, cfg, net, k, rng);
            if (scan.is_reported) out.scans.push_back(std::move(scan));
        }
    }
    return out;
}

}  // namespace nctrack
