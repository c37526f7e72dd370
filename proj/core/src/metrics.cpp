#include "nctrack/metrics.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "nctrack/assignment.hpp"

namespace nctrack {

GospaResult gospa(const std::vector<Point2>& truth,
                  const std::vector<Point2>& estimates,
                  const GospaParams& params) {
    if (!(params.c > 0.0) || !(params.p >= 1.0))
        throw std::invalid_argument("gospa: require c > 0 and p >= 1");
    const int n = static_cast<int>(truth.size());
    const int m = static_cast<int>(estimates.size());
    const double cp = std::pow(params.c, params.p);

    GospaResult out;
    if (n == 0 && m == 0) return out;

    // Rows: truth points (each matched to an estimate or to its own
    // unmatched slot). Entries are d^p - c^p so that leaving a pair
    // unmatched (2 * c^p/2) is the zero baseline; pairs at d >= c are
    // never matched, fixing the decomposition.
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(n, m + n, kInfeasible);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            const double d = (truth[i] - estimates[j]).norm();
            if (d < params.c) cost(i, j) = std::pow(d, params.p) - cp;
        }
        cost(i, m + i) = 0.0;
    }

    int matched = 0;
    if (n > 0) {
        const auto sol = solve_assignment(cost);
        if (!sol) throw std::logic_error("gospa: assignment infeasible");
        for (int i = 0; i < n; ++i) {
            const int j = sol->row_to_col[i];
            if (j >= m) continue;
            ++matched;
            const double d = (truth[i] - estimates[j]).norm();
            out.localization += std::pow(d, params.p);
        }
    }
    out.missed = n - matched;
    out.false_targets = m - matched;
    const double powered =
        out.localization + 0.5 * cp * (out.missed + out.false_targets);
    out.total = std::pow(powered, 1.0 / params.p);
    return out;
}

TrackLengthStats track_length_stats(
    const std::vector<std::vector<int>>& confirmed_ids_by_step) {
    std::map<int, int> steps_per_id;
    for (const auto& step : confirmed_ids_by_step)
        for (int id : step) steps_per_id[id] += 1;
    TrackLengthStats out;
    out.tracks = static_cast<int>(steps_per_id.size());
    if (out.tracks == 0) return out;
    long total = 0;
    for (const auto& [id, n] : steps_per_id) total += n;
    out.mean = static_cast<double>(total) / out.tracks;
    return out;
}

RunSummary run_summary(const std::vector<StepMetrics>& steps,
                       const TrackLengthStats& lengths) {
    RunSummary s;
    s.steps = static_cast<int>(steps.size());
    for (const auto& st : steps) {
        s.gospa_sum += st.gospa.total;
        s.localization_sum += st.gospa.localization;
        s.missed_sum += st.gospa.missed;
        s.false_sum += st.gospa.false_targets;
        s.trees_mean += st.trees;
        s.clusters_mean += st.clusters;
        s.hypotheses_mean += st.hypotheses;
    }
    if (s.steps > 0) {
        s.trees_mean /= s.steps;
        s.clusters_mean /= s.steps;
        s.hypotheses_mean /= s.steps;
    }
    s.track_length_mean = lengths.mean;
    s.confirmed_tracks = lengths.tracks;
    return s;
}

}  // namespace nctrack
