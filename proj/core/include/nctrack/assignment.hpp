#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <vector>

namespace nctrack {

/// Marks a forbidden (row, col) pair in an assignment problem.
inline constexpr double kInfeasible = std::numeric_limits<double>::infinity();

struct Assignment {
    std::vector<int> row_to_col;
    double cost = 0.0;
};

/// Minimum-cost assignment of every row to a distinct column (rows <=
/// cols; shortest-augmenting-path with potentials). Entries equal to
/// kInfeasible are unassignable. Returns nullopt when no complete
/// assignment exists.
std::optional<Assignment> solve_assignment(const Eigen::MatrixXd& cost);

/// The k lowest-cost complete assignments in ascending cost order via
/// Murty partitioning. Exact: infeasible pairs are never approximated by
/// large finite costs. Equal-cost assignments are ordered
/// lexicographically by their row_to_col vector, matching brute-force
/// enumeration. Returns fewer than k entries when fewer assignments
/// exist; an infeasible matrix yields an empty list.
std::vector<Assignment> murty_kbest(const Eigen::MatrixXd& cost, int k);

}  // namespace nctrack
