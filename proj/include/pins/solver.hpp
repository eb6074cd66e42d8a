#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pins/core.hpp"
#include "pins/newton.hpp"
#include "pins/sinkhorn.hpp"

namespace pins {

enum class Mode {
  Pins,          // proximal outer loop, Sinkhorn then sparse Newton per subproblem
  NewtonNoEppa,  // one Sinkhorn + Newton pass on the raw cost
  SinkhornEppa,  // proximal outer loop, Sinkhorn only
  SinkhornOnly,  // plain Sinkhorn on the raw cost
};

const char* to_string(Mode mode);
Mode parse_mode(const std::string& name);  // InvalidArgument on unknown names

enum class SolveStatus { Converged, BudgetExhausted, Stalled };
const char* to_string(SolveStatus status);

struct SolverConfig {
  Mode mode = Mode::Pins;
  double eta = 1e-2;
  int max_outer = 500;
  double outer_rel_tol = 1e-4;
  SinkhornSettings sinkhorn;  // sinkhorn.eta is overwritten by `eta`
  NewtonSettings newton;
  // Reuse the previous subproblem's potentials instead of zeros.
  bool warm_start = false;
  // Build C^0 from log(a b^T). When false the first subproblem uses C itself.
  bool shift_first_cost = true;

  // Defaults for each mode, following the reference experiment settings.
  static SolverConfig defaults(Mode mode);
};

void validate(const SolverConfig& config);

enum class Phase { Sinkhorn, Newton };
const char* to_string(Phase phase);

struct TraceRecord {
  Phase phase = Phase::Sinkhorn;
  int outer_k = 0;
  int inner_t = 0;
  double elapsed_s = 0.0;
  double primal_cost = 0.0;     // <C, X> with the original cost
  double dual_objective = 0.0;  // of the current subproblem
  double marginal_violation = 0.0;
  std::optional<double> err_vs_exact;
  std::optional<std::size_t> offblock_nnz;  // Newton records only
};

// Summary of one outer iteration: the plan X^{k+1} it produced.
struct OuterRecord {
  int outer_k = 0;
  double primal_cost = 0.0;
  double marginal_violation = 0.0;
  bool subproblem_stalled = false;
  TransportPlan plan;  // kept only when SolveOptions::keep_outer_plans is set
};

struct SolveOptions {
  std::optional<double> oracle_cost;
  bool keep_outer_plans = false;
};

struct SolveReport {
  TransportPlan plan;
  double cost = 0.0;
  double marginal_violation = 0.0;
  SolveStatus status = SolveStatus::BudgetExhausted;
  std::vector<TraceRecord> trace;
  std::vector<OuterRecord> outer;
  SolverConfig config;
  double wall_time_s = 0.0;
  int outer_iterations = 0;
};

// C - eta * log(X^k), computed from the stored log entries.
CostMatrix update_cost(const CostMatrix& cost, const TransportPlan& prev_plan, double eta);

// |cost_curr - cost_prev| <= rel_tol * max(1, |cost_prev|)
bool outer_stop(double cost_prev, double cost_curr, double rel_tol);

SolveReport pins_solve(const Instance& inst, const SolverConfig& config,
                       const SolveOptions& options = {});

}  // namespace pins
