#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "pins/core.hpp"

namespace pins {

/// Lagrange multipliers (f, g) of the row and column marginal constraints.
struct DualPotentials {
  std::vector<double> f;
  std::vector<double> g;

  static DualPotentials zeros(std::size_t m, std::size_t n) {
    return {std::vector<double>(m, 0.0), std::vector<double>(n, 0.0)};
  }

  std::size_t size() const { return f.size() + g.size(); }

  friend bool operator==(const DualPotentials&, const DualPotentials&) = default;
};

struct SinkhornSettings {
  double eta = 1e-2;
  int max_iters = 50000;
  double tol = 6.3e-4;  // on marginal_violation
};

// X_ij = exp((f_i + g_j - C_ij) / eta - 1), returned as log entries.
TransportPlan plan_from_potentials(const DualPotentials& pot, const CostMatrix& cost, double eta);

// <a, f> + <b, g> - eta * sum_ij X_ij(f, g). Throws Overflow when an
// exponent exceeds 700.
double dual_objective(const DualPotentials& pot, const Marginals& marg, const CostMatrix& cost,
                      double eta);

// (a - X e, b - X^T e).
DualPotentials dual_gradient(const DualPotentials& pot, const Marginals& marg,
                             const CostMatrix& cost, double eta);

// One f-update followed by one g-update, computed with log-sum-exp.
DualPotentials sinkhorn_sweep(const DualPotentials& pot, const Marginals& marg,
                              const CostMatrix& cost, double eta);

// Separate halves of a sweep, exposed for tests of the per-update contract.
void sinkhorn_update_f(DualPotentials& pot, const Marginals& marg, const CostMatrix& cost,
                       double eta);
void sinkhorn_update_g(DualPotentials& pot, const Marginals& marg, const CostMatrix& cost,
                       double eta);

struct SinkhornRecord {
  int iteration = 0;  // number of sweeps applied before this state
  double elapsed_s = 0.0;
  double dual_objective = 0.0;
  double marginal_violation = 0.0;
  double primal_cost = 0.0;  // <C, X> against the instance's own cost
};

struct SinkhornResult {
  DualPotentials potentials;
  std::vector<SinkhornRecord> trace;
  bool converged = false;
  int sweeps = 0;
};

// Runs sweeps on the effective cost until marginal_violation <= tol or the
// sweep budget is spent. The trace holds one record per visited state,
// including the initial one.
SinkhornResult run_sinkhorn(const Instance& inst, const CostMatrix& effective_cost,
                            const SinkhornSettings& settings, DualPotentials init);

}  // namespace pins
