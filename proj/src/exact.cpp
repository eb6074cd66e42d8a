#include "pins/exact.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace pins {

namespace {

// Spanning-tree basis over m row nodes [0, m) and n column nodes [m, m + n).
class TreeBasis {
 public:
  TreeBasis(const Instance& inst)
      : m_(inst.m()), n_(inst.n()), adj_(m_ + n_), flow_(m_ * n_, 0.0), basic_(m_ * n_, false) {}

  std::size_t m() const { return m_; }
  std::size_t n() const { return n_; }
  std::size_t cell(std::size_t i, std::size_t j) const { return i * n_ + j; }
  bool is_basic(std::size_t c) const { return basic_[c]; }
  double flow(std::size_t c) const { return flow_[c]; }
  const std::vector<double>& flows() const { return flow_; }

  void add(std::size_t c) {
    basic_[c] = true;
    const std::size_t i = c / n_, col = m_ + c % n_;
    adj_[i].push_back({col, c});
    adj_[col].push_back({i, c});
  }

  void remove(std::size_t c) {
    basic_[c] = false;
    flow_[c] = 0.0;
    const std::size_t i = c / n_, col = m_ + c % n_;
    for (std::size_t node : {i, col}) {
      auto& edges = adj_[node];
      edges.erase(std::find_if(edges.begin(), edges.end(), [c](const Edge& e) { return e.cell == c; }));
    }
  }

  // Northwest-corner start: m + n - 1 cells, degenerate ones carry zero flow.
  void northwest_corner(const Marginals& marg) {
    std::vector<double> supply(marg.a), demand(marg.b);
    std::size_t i = 0, j = 0;
    while (true) {
      const double x = std::min(supply[i], demand[j]);
      add(cell(i, j));
      flow_[cell(i, j)] = x;
      supply[i] -= x;
      demand[j] -= x;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (j == n_ - 1 || (i < m_ - 1 && supply[i] <= demand[j]))
        ++i;
      else
        ++j;
    }
  }

  // Recomputes basic flows from the marginals by peeling leaves of the tree,
  // so conservation holds to rounding regardless of pivot history.
  void rebalance(const Marginals& marg) {
    std::vector<double> excess(m_ + n_);
    for (std::size_t i = 0; i < m_; ++i) excess[i] = marg.a[i];
    for (std::size_t j = 0; j < n_; ++j) excess[m_ + j] = -marg.b[j];
    std::vector<std::size_t> degree(m_ + n_);
    std::vector<std::size_t> leaves;
    for (std::size_t v = 0; v < m_ + n_; ++v) {
      degree[v] = adj_[v].size();
      if (degree[v] == 1) leaves.push_back(v);
    }
    std::vector<bool> done_edge(m_ * n_, false);
    while (!leaves.empty()) {
      const std::size_t v = leaves.back();
      leaves.pop_back();
      if (degree[v] != 1) continue;
      const auto it = std::find_if(adj_[v].begin(), adj_[v].end(),
                                   [&](const Edge& e) { return !done_edge[e.cell]; });
      const Edge e = *it;
      done_edge[e.cell] = true;
      // Flow runs row -> column; a row leaf ships its excess out.
      const double x = v < m_ ? excess[v] : -excess[v];
      flow_[e.cell] = std::max(0.0, x);
      excess[v] = 0.0;
      excess[e.node] += v < m_ ? x : -x;
      degree[v] = 0;
      if (--degree[e.node] == 1) leaves.push_back(e.node);
    }
  }

  void potentials(const CostMatrix& cost, std::vector<double>& u, std::vector<double>& v) const {
    u.assign(m_, 0.0);
    v.assign(n_, 0.0);
    std::vector<bool> seen(m_ + n_, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (const auto& e : adj_[node]) {
        if (seen[e.node]) continue;
        seen[e.node] = true;
        const std::size_t i = e.cell / n_, j = e.cell % n_;
        if (node < m_)
          v[j] = cost(i, j) - u[i];
        else
          u[i] = cost(i, j) - v[j];
        stack.push_back(e.node);
      }
    }
  }

  // Tree path from row node `from` to column node `to`, as cells in order.
  std::vector<std::size_t> path(std::size_t from, std::size_t to) const {
    std::vector<std::size_t> parent_cell(m_ + n_, kNone), parent(m_ + n_, kNone);
    std::vector<std::size_t> stack{from};
    parent[from] = from;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      if (node == to) break;
      for (const auto& e : adj_[node]) {
        if (parent[e.node] != kNone) continue;
        parent[e.node] = node;
        parent_cell[e.node] = e.cell;
        stack.push_back(e.node);
      }
    }
    std::vector<std::size_t> cells;
    for (std::size_t node = to; node != from; node = parent[node]) cells.push_back(parent_cell[node]);
    std::reverse(cells.begin(), cells.end());
    return cells;
  }

 private:
  struct Edge {
    std::size_t node;
    std::size_t cell;
  };
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::size_t m_, n_;
  std::vector<std::vector<Edge>> adj_;
  std::vector<double> flow_;
  std::vector<bool> basic_;
};

}  // namespace

ExactSolution solve_exact(const Instance& inst, const ExactSettings& settings) {
  validate_instance(inst);
  const std::size_t m = inst.m();
  const std::size_t n = inst.n();
  const auto& cost = inst.cost;

  double scale = 1.0;
  for (double c : cost.values()) scale = std::max(scale, std::abs(c));
  const double tol = settings.optimality_tol * scale;

  TreeBasis basis(inst);
  basis.northwest_corner(inst.marginals);
  basis.rebalance(inst.marginals);

  const std::size_t dantzig_budget = settings.dantzig_pivots_per_node * (m + n);
  const std::size_t total_budget = dantzig_budget + settings.bland_pivot_factor * m * n * (m + n);

  ExactSolution out;
  std::vector<double> u, v;
  for (;;) {
    basis.potentials(cost, u, v);
    const bool bland = out.pivots >= dantzig_budget;
    out.used_bland = out.used_bland || bland;

    std::size_t entering = m * n;
    double best = -tol;
    for (std::size_t i = 0; i < m && !(bland && entering < m * n); ++i) {
      const auto crow = cost.row(i);
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t c = i * n + j;
        if (basis.is_basic(c)) continue;
        const double r = crow[j] - u[i] - v[j];
        if (r < best) {
          best = r;
          entering = c;
          if (bland) break;
        }
      }
    }
    if (entering == m * n) break;
    if (out.pivots >= total_budget)
      throw Error(ErrorCode::DegenerateCycling, "network simplex exceeded its pivot budget");

    const std::size_t ei = entering / n, ej = entering % n;
    const auto cycle = basis.path(ei, m + ej);
    // Cells at even positions of the path lose flow.
    double theta = std::numeric_limits<double>::infinity();
    std::size_t leaving = m * n;
    for (std::size_t k = 0; k < cycle.size(); k += 2) {
      const double f = std::max(0.0, basis.flow(cycle[k]));
      if (f < theta || (f == theta && cycle[k] < leaving)) {
        theta = f;
        leaving = cycle[k];
      }
    }
    basis.remove(leaving);
    basis.add(entering);
    basis.rebalance(inst.marginals);
    ++out.pivots;
  }

  basis.rebalance(inst.marginals);
  basis.potentials(cost, u, v);
  DenseMatrix flows(m, n, basis.flows());
  out.plan = TransportPlan::from_linear(flows);
  CompensatedSum total;
  double min_reduced = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      total.add(cost(i, j) * flows(i, j));
      min_reduced = std::min(min_reduced, cost(i, j) - u[i] - v[j]);
    }
  }
  out.cost = total.value();
  out.min_reduced_cost = min_reduced;
  out.row_potentials = std::move(u);
  out.col_potentials = std::move(v);
  return out;
}

Assignment brute_force_assignment(const CostMatrix& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw Error(ErrorCode::DimensionMismatch, "assignment needs a square cost");
  if (n == 0) throw Error(ErrorCode::DimensionMismatch, "assignment needs n >= 1");
  if (n > 8) throw Error(ErrorCode::TooLarge, "brute force limited to n <= 8");

  std::vector<std::size_t> sigma(n);
  std::iota(sigma.begin(), sigma.end(), 0);
  Assignment best;
  double best_sum = std::numeric_limits<double>::infinity();
  do {
    CompensatedSum s;
    for (std::size_t i = 0; i < n; ++i) s.add(cost(i, sigma[i]));
    // Strict comparison keeps the lexicographically first minimizer.
    if (s.value() < best_sum) {
      best_sum = s.value();
      best.permutation = sigma;
    }
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  best.cost = best_sum / static_cast<double>(n);
  return best;
}

}  // namespace pins
