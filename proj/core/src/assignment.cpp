#include "nctrack/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace nctrack {

namespace {

// Canonical total: entries summed in row order, so identical assignments
// always produce bit-identical costs (ties must compare exactly).
double canonical_cost(const Eigen::MatrixXd& cost, const std::vector<int>& a) {
    double total = 0.0;
    for (int i = 0; i < static_cast<int>(a.size()); ++i) total += cost(i, a[i]);
    return total;
}

}  // namespace

std::optional<Assignment> solve_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const int m = static_cast<int>(cost.cols());
    if (n == 0) return Assignment{{}, 0.0};
    if (n > m) return std::nullopt;

    const double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials; p[j] = row matched to column j.
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = -1;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if (!(delta < inf)) return std::nullopt;  // no augmenting path
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    Assignment out;
    out.row_to_col.assign(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] != 0) out.row_to_col[p[j] - 1] = j - 1;
    for (int i = 0; i < n; ++i)
        if (out.row_to_col[i] < 0 || cost(i, out.row_to_col[i]) == kInfeasible)
            return std::nullopt;
    out.cost = canonical_cost(cost, out.row_to_col);
    return out;
}

namespace {

struct MurtyNode {
    std::vector<std::pair<int, int>> forced;     // (row, col) fixed in this node
    std::vector<std::pair<int, int>> forbidden;  // (row, col) excluded
    std::vector<int> solution;                   // node's optimal full assignment
    double cost = 0.0;

    // min-queue order: (cost, lexicographic solution)
    bool worse_than(const MurtyNode& o) const {
        if (cost != o.cost) return cost > o.cost;
        return solution > o.solution;
    }
};

struct NodeCmp {
    bool operator()(const MurtyNode& a, const MurtyNode& b) const {
        return a.worse_than(b);
    }
};

// Solves the node's restricted problem; returns false if infeasible.
bool solve_node(const Eigen::MatrixXd& cost, MurtyNode& node) {
    const int n = static_cast<int>(cost.rows());
    const int m = static_cast<int>(cost.cols());

    std::vector<char> row_fixed(n, 0), col_fixed(m, 0);
    for (const auto& [r, c] : node.forced) {
        row_fixed[r] = 1;
        col_fixed[c] = 1;
        if (cost(r, c) == kInfeasible) return false;
    }

    std::vector<int> free_rows, free_cols;
    for (int i = 0; i < n; ++i)
        if (!row_fixed[i]) free_rows.push_back(i);
    for (int j = 0; j < m; ++j)
        if (!col_fixed[j]) free_cols.push_back(j);

    Eigen::MatrixXd sub(free_rows.size(), free_cols.size());
    for (std::size_t a = 0; a < free_rows.size(); ++a)
        for (std::size_t b = 0; b < free_cols.size(); ++b)
            sub(a, b) = cost(free_rows[a], free_cols[b]);
    for (const auto& [r, c] : node.forbidden) {
        const auto ri = std::find(free_rows.begin(), free_rows.end(), r);
        const auto ci = std::find(free_cols.begin(), free_cols.end(), c);
        if (ri != free_rows.end() && ci != free_cols.end())
            sub(ri - free_rows.begin(), ci - free_cols.begin()) = kInfeasible;
    }

    const auto res = solve_assignment(sub);
    if (!res) return false;

    node.solution.assign(n, -1);
    for (const auto& [r, c] : node.forced) node.solution[r] = c;
    for (std::size_t a = 0; a < free_rows.size(); ++a)
        node.solution[free_rows[a]] = free_cols[res->row_to_col[a]];
    node.cost = canonical_cost(cost, node.solution);
    return true;
}

}  // namespace

std::vector<Assignment> murty_kbest(const Eigen::MatrixXd& cost, int k) {
    if (k < 1) throw std::invalid_argument("murty_kbest: k must be >= 1");
    std::vector<Assignment> out;
    if (cost.rows() == 0) {
        out.push_back({{}, 0.0});
        return out;
    }

    std::priority_queue<MurtyNode, std::vector<MurtyNode>, NodeCmp> queue;
    MurtyNode root;
    if (solve_node(cost, root)) queue.push(std::move(root));

    std::vector<MurtyNode> collected;
    while (!queue.empty()) {
        // Keep draining exact cost ties past k so the final
        // (cost, lexicographic) sort matches brute-force order.
        if (static_cast<int>(collected.size()) >= k &&
            queue.top().cost > collected[k - 1].cost)
            break;
        MurtyNode node = queue.top();
        queue.pop();
        collected.push_back(node);  // pop order is nondecreasing in cost

        // Partition the node's solution space around its optimum.
        std::vector<int> free_rows;
        std::vector<char> row_fixed(cost.rows(), 0);
        for (const auto& [r, c] : node.forced) row_fixed[r] = 1;
        for (int i = 0; i < cost.rows(); ++i)
            if (!row_fixed[i]) free_rows.push_back(i);

        MurtyNode base = node;
        base.solution.clear();
        for (std::size_t t = 0; t < free_rows.size(); ++t) {
            MurtyNode child = base;
            child.forbidden.emplace_back(free_rows[t], node.solution[free_rows[t]]);
            for (std::size_t u = 0; u < t; ++u)
                child.forced.emplace_back(free_rows[u], node.solution[free_rows[u]]);
            if (solve_node(cost, child)) queue.push(std::move(child));
        }
    }

    std::sort(collected.begin(), collected.end(),
              [](const MurtyNode& a, const MurtyNode& b) { return b.worse_than(a); });
    const int take = std::min<int>(k, static_cast<int>(collected.size()));
    out.reserve(take);
    for (int i = 0; i < take; ++i)
        out.push_back({std::move(collected[i].solution), collected[i].cost});
    return out;
}

}  // namespace nctrack
