#pragma once

#include <cstddef>
#include <vector>

#include "pins/core.hpp"

namespace pins {

struct ExactSolution {
  TransportPlan plan;  // vertex plan; non-basic cells are exact zeros
  double cost = 0.0;
  std::vector<double> row_potentials;  // u, with u_i + v_j = C_ij on basic cells
  std::vector<double> col_potentials;  // v
  double min_reduced_cost = 0.0;       // over all cells, >= -1e-9 at optimality
  std::size_t pivots = 0;
  bool used_bland = false;
};

struct ExactSettings {
  // Pivots under the largest-violation rule before switching to Bland's rule,
  // as a multiple of m + n.
  std::size_t dantzig_pivots_per_node = 50;
  // Hard budget, as a multiple of m * n (m + n) after the switch.
  std::size_t bland_pivot_factor = 20;
  double optimality_tol = 1e-12;
};

// Transportation simplex on the bipartite spanning-tree basis.
// Throws DegenerateCycling if the pivot budget is exceeded.
ExactSolution solve_exact(const Instance& inst, const ExactSettings& settings = {});

struct Assignment {
  std::vector<std::size_t> permutation;  // row i is matched to column permutation[i]
  double cost = 0.0;                     // (1/n) sum_i C_{i, sigma(i)}
};

// Exhaustive minimum over all permutations, n <= 8 (TooLarge otherwise).
// Ties resolve to the lexicographically smallest permutation.
Assignment brute_force_assignment(const CostMatrix& cost);

}  // namespace pins
