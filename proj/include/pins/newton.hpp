#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pins/core.hpp"
#include "pins/sinkhorn.hpp"

namespace pins {

/// Compressed-row sparse matrix.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nonzeros() const { return values.size(); }

  // y = A x
  void multiply(std::span<const double> x, std::span<double> y) const;
  // y = A^T x
  void multiply_transpose(std::span<const double> x, std::span<double> y) const;

  DenseMatrix to_dense() const;
};

/// The dual Hessian [[diag(d_row), B], [B^T, diag(d_col)]], where for the
/// unsparsified matrix d_row = -(X e)/eta, d_col = -(X^T e)/eta, B = -X/eta.
struct BlockHessian {
  std::vector<double> d_row;
  std::vector<double> d_col;
  CsrMatrix off_block;
  double eta = 1.0;

  std::size_t m() const { return d_row.size(); }
  std::size_t n() const { return d_col.size(); }
  std::size_t dim() const { return m() + n(); }

  // y = H v, v and y of length m + n.
  void apply(std::span<const double> v, std::span<double> y) const;
  DenseMatrix to_dense() const;
  // Nonzero fraction of the full (m+n)^2 matrix.
  double nonzero_fraction() const;
};

struct NewtonSettings {
  double rho = 0.1;  // keep-fraction of the off-diagonal block
  int max_iters = 20;
  double grad_tol = 1e-8;  // on ||grad P||_1
  double cg_tol = 1e-10;   // relative residual
  int cg_max_iters = 2000;
  double armijo_c = 1e-4;
  double backtrack_factor = 0.5;
  int max_backtracks = 40;
  // Tikhonov damping relative to the largest diagonal magnitude.
  double damping = 1e-10;
};

void validate(const NewtonSettings& settings);

BlockHessian assemble_hessian(const DualPotentials& pot, const CostMatrix& cost, double eta);

// Keeps the ceil(rho m n) largest-magnitude off-block entries (ties go to the
// smaller (row, col)); diagonals are untouched.
BlockHessian sparsify(const BlockHessian& h, double rho);

// ceil(rho m n), the off-block entry budget of sparsify.
std::size_t sparsify_keep_count(double rho, std::size_t m, std::size_t n);

struct CgResult {
  std::vector<double> solution;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

// Solves (-H + mu I) x = rhs by conjugate gradients. Passing rhs = grad P
// yields the Newton ascent direction (equivalently H x = -grad P).
// Throws BreakdownDetected on a nonpositive curvature direction.
CgResult cg_solve(const BlockHessian& h, std::span<const double> rhs, double tol, int max_iters,
                  double mu);

/// Concave objective for line search along ascent directions.
class AscentObjective {
 public:
  virtual ~AscentObjective() = default;
  virtual double value(const DualPotentials& x) const = 0;
  virtual DualPotentials gradient(const DualPotentials& x) const = 0;
  // value(x + alpha d) - value(x); overrides may evaluate it without
  // cancellation.
  virtual double increase(const DualPotentials& x, const DualPotentials& d, double alpha) const;
};

/// The entropic dual P on a given (possibly shifted) cost.
class EntropicDual final : public AscentObjective {
 public:
  EntropicDual(const Marginals& marg, const CostMatrix& cost, double eta)
      : marg_(marg), cost_(cost), eta_(eta) {}

  double value(const DualPotentials& x) const override;
  DualPotentials gradient(const DualPotentials& x) const override;
  double increase(const DualPotentials& x, const DualPotentials& d, double alpha) const override;

 private:
  const Marginals& marg_;
  const CostMatrix& cost_;
  double eta_;
};

// Inner product of stacked (f, g) vectors.
double dot(const DualPotentials& x, const DualPotentials& y);
DualPotentials axpy(const DualPotentials& x, double alpha, const DualPotentials& d);

// Largest alpha in {1, beta, beta^2, ...} with
// P(x + alpha d) >= P(x) + c alpha <grad P(x), d>.
// Throws NotAscentDirection or LineSearchFailed.
double line_search(const AscentObjective& objective, const DualPotentials& pot,
                   const DualPotentials& dir, const NewtonSettings& settings);

struct NewtonRecord {
  int iteration = 0;
  double elapsed_s = 0.0;
  double dual_objective = 0.0;
  double grad_norm = 0.0;  // ||grad P||_1, equal to the plan's marginal violation
  double primal_cost = 0.0;
  std::size_t offblock_nnz = 0;
  int cg_iterations = 0;
  double alpha = 0.0;
  bool gradient_step = false;
};

enum class NewtonStatus { Converged, BudgetExhausted, Stalled };
const char* to_string(NewtonStatus status);

struct NewtonResult {
  DualPotentials potentials;
  std::vector<NewtonRecord> trace;
  NewtonStatus status = NewtonStatus::BudgetExhausted;
};

// assemble -> sparsify -> CG -> line search -> update, until ||grad P||_1 <=
// grad_tol or the iteration budget is spent. Falls back to a gradient step
// when the Newton direction is rejected; stalls if that fails too.
NewtonResult newton_phase(const Instance& inst, const CostMatrix& effective_cost,
                          const NewtonSettings& settings, double eta, DualPotentials init);

// Off block from the exact vertex plan, diagonals from the Sinkhorn-phase
// plan, both scaled by -1/eta.
BlockHessian reference_hessian(const TransportPlan& exact_plan,
                               const TransportPlan& sinkhorn_plan, double eta);

// Entrywise 1-norm of the difference of two Hessians of equal shape.
double hessian_distance_l1(const BlockHessian& lhs, const BlockHessian& rhs);

}  // namespace pins
