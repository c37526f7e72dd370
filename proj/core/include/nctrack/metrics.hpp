#pragma once

#include <vector>

#include "nctrack/network.hpp"

namespace nctrack {

struct GospaParams {
    double c = 8.0;  // cutoff (m)
    double p = 2.0;  // exponent
};

/// One evaluation of the metric. `localization` is the p-powered sum over
/// matched pairs, so total^p == localization + (c^p/2)(missed + false).
struct GospaResult {
    double total = 0.0;
    double localization = 0.0;
    int missed = 0;
    int false_targets = 0;
};

/// Exact GOSPA between truth and estimated 2-D point sets: optimal
/// assignment over the cutoff-distance^p matrix, pairs at distance >= c
/// left unmatched at cost c^p/2 per element.
GospaResult gospa(const std::vector<Point2>& truth,
                  const std::vector<Point2>& estimates,
                  const GospaParams& params);

/// Mean number of steps each confirmed track id persists in the reported
/// hypothesis. `tracks == 0` flags the degenerate no-track case.
struct TrackLengthStats {
    double mean = 0.0;
    int tracks = 0;
};

TrackLengthStats track_length_stats(
    const std::vector<std::vector<int>>& confirmed_ids_by_step);

/// Per-step bundle carried into the run summary.
struct StepMetrics {
    GospaResult gospa;
    double trees = 0.0;
    double clusters = 0.0;
    double hypotheses = 0.0;
};

/// Totals of one tracker run over a scenario.
struct RunSummary {
    int steps = 0;
    double gospa_sum = 0.0;         // sum of per-step totals
    double localization_sum = 0.0;  // summed p-powered localization ("NLE")
    long missed_sum = 0;
    long false_sum = 0;
    double track_length_mean = 0.0;
    int confirmed_tracks = 0;
    double trees_mean = 0.0;
    double clusters_mean = 0.0;
    double hypotheses_mean = 0.0;
};

RunSummary run_summary(const std::vector<StepMetrics>& steps,
                       const TrackLengthStats& lengths);

}  // namespace nctrack
