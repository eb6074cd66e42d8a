#include "pins/solver.hpp"

#include <chrono>

namespace pins {

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::Pins: return "pins";
    case Mode::NewtonNoEppa: return "newton_no_eppa";
    case Mode::SinkhornEppa: return "sinkhorn_eppa";
    case Mode::SinkhornOnly: return "sinkhorn_only";
  }
  return "unknown";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::Pins, Mode::NewtonNoEppa, Mode::SinkhornEppa, Mode::SinkhornOnly})
    if (name == to_string(m)) return m;
  throw Error(ErrorCode::InvalidArgument, "unknown mode '" + name + "'");
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::BudgetExhausted: return "budget_exhausted";
    case SolveStatus::Stalled: return "stalled";
  }
  return "unknown";
}

const char* to_string(Phase phase) { return phase == Phase::Sinkhorn ? "sinkhorn" : "newton"; }

namespace {

bool uses_outer_loop(Mode mode) { return mode == Mode::Pins || mode == Mode::SinkhornEppa; }
bool uses_newton(Mode mode) { return mode == Mode::Pins || mode == Mode::NewtonNoEppa; }

}  // namespace

SolverConfig SolverConfig::defaults(Mode mode) {
  SolverConfig c;
  c.mode = mode;
  switch (mode) {
    case Mode::Pins:
      break;
    case Mode::NewtonNoEppa:
      c.max_outer = 1;
      c.shift_first_cost = false;
      c.newton.max_iters = 50;
      break;
    case Mode::SinkhornEppa:
      c.sinkhorn.max_iters = 5000;
      c.sinkhorn.tol = 1e-8;
      break;
    case Mode::SinkhornOnly:
      c.max_outer = 1;
      c.shift_first_cost = false;
      c.sinkhorn.tol = 1e-8;
      break;
  }
  return c;
}

void validate(const SolverConfig& config) {
  if (!(config.eta > 0.0)) throw Error(ErrorCode::InvalidArgument, "eta must be > 0");
  if (config.max_outer < 1) throw Error(ErrorCode::InvalidArgument, "max_outer must be >= 1");
  if (!(config.outer_rel_tol > 0.0))
    throw Error(ErrorCode::InvalidArgument, "outer_rel_tol must be > 0");
  if (config.sinkhorn.max_iters < 0 || !(config.sinkhorn.tol > 0.0))
    throw Error(ErrorCode::InvalidArgument, "invalid Sinkhorn budget or tolerance");
  validate(config.newton);
}

CostMatrix update_cost(const CostMatrix& cost, const TransportPlan& prev_plan, double eta) {
  if (cost.rows() != prev_plan.rows() || cost.cols() != prev_plan.cols())
    throw Error(ErrorCode::DimensionMismatch, "update_cost: plan dims differ from cost");
  CostMatrix shifted(cost.rows(), cost.cols());
  const auto logs = prev_plan.log_entries().values();
  const auto c = cost.values();
  auto out = shifted.values();
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (!std::isfinite(logs[k]))
      throw Error(ErrorCode::InvalidArgument, "update_cost: previous plan has a zero entry");
    out[k] = c[k] - eta * logs[k];
  }
  return shifted;
}

bool outer_stop(double cost_prev, double cost_curr, double rel_tol) {
  return std::abs(cost_curr - cost_prev) <= rel_tol * std::max(1.0, std::abs(cost_prev));
}

SolveReport pins_solve(const Instance& inst, const SolverConfig& config, const SolveOptions& options) {
  validate_instance(inst);
  validate(config);
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const auto seconds_since_start = [&] {
    return std::chrono::duration<double>(Clock::now() - start).count();
  };

  SolveReport report;
  report.config = config;
  const Mode mode = config.mode;
  const int outer_budget = uses_outer_loop(mode) ? config.max_outer : 1;
  SinkhornSettings sinkhorn = config.sinkhorn;
  sinkhorn.eta = config.eta;

  const auto error_of = [&](double cost) -> std::optional<double> {
    if (!options.oracle_cost) return std::nullopt;
    return std::abs(cost - *options.oracle_cost);
  };

  TransportPlan plan = TransportPlan::product(inst.marginals);
  double cost_prev = transport_cost(inst.cost, plan);
  DualPotentials pot = DualPotentials::zeros(inst.m(), inst.n());
  int consecutive_stalls = 0;
  SolveStatus status = SolveStatus::BudgetExhausted;

  for (int k = 0; k < outer_budget; ++k) {
    const bool shift = uses_outer_loop(mode) && (k > 0 || config.shift_first_cost);
    const CostMatrix shifted = shift ? update_cost(inst.cost, plan, config.eta) : CostMatrix{};
    const CostMatrix& cost_k = shift ? shifted : inst.cost;

    DualPotentials init = config.warm_start ? pot : DualPotentials::zeros(inst.m(), inst.n());
    const double sinkhorn_offset = seconds_since_start();
    auto phase_one = run_sinkhorn(inst, cost_k, sinkhorn, std::move(init));
    for (const auto& r : phase_one.trace) {
      TraceRecord rec;
      rec.phase = Phase::Sinkhorn;
      rec.outer_k = k;
      rec.inner_t = r.iteration;
      rec.elapsed_s = sinkhorn_offset + r.elapsed_s;
      rec.primal_cost = r.primal_cost;
      rec.dual_objective = r.dual_objective;
      rec.marginal_violation = r.marginal_violation;
      rec.err_vs_exact = error_of(r.primal_cost);
      report.trace.push_back(rec);
    }
    pot = std::move(phase_one.potentials);

    bool stalled = false;
    NewtonStatus newton_status = NewtonStatus::Converged;
    if (uses_newton(mode)) {
      const double newton_offset = seconds_since_start();
      auto phase_two = newton_phase(inst, cost_k, config.newton, config.eta, std::move(pot));
      // Newton records continue the inner counter after the Sinkhorn sweeps;
      // record 0 repeats the hand-off state.
      for (const auto& r : phase_two.trace) {
        TraceRecord rec;
        rec.phase = Phase::Newton;
        rec.outer_k = k;
        rec.inner_t = phase_one.sweeps + r.iteration;
        rec.elapsed_s = newton_offset + r.elapsed_s;
        rec.primal_cost = r.primal_cost;
        rec.dual_objective = r.dual_objective;
        rec.marginal_violation = r.grad_norm;
        rec.err_vs_exact = error_of(r.primal_cost);
        rec.offblock_nnz = r.offblock_nnz;
        report.trace.push_back(rec);
      }
      pot = std::move(phase_two.potentials);
      newton_status = phase_two.status;
      stalled = newton_status == NewtonStatus::Stalled;
    }

    plan = plan_from_potentials(pot, cost_k, config.eta);
    const double cost_curr = transport_cost(inst.cost, plan);
    OuterRecord outer;
    outer.outer_k = k;
    outer.primal_cost = cost_curr;
    outer.marginal_violation = marginal_violation(plan, inst.marginals);
    outer.subproblem_stalled = stalled;
    if (options.keep_outer_plans) outer.plan = plan;
    report.outer.push_back(std::move(outer));
    report.outer_iterations = k + 1;

    if (!uses_outer_loop(mode)) {
      if (mode == Mode::SinkhornOnly)
        status = phase_one.converged ? SolveStatus::Converged : SolveStatus::BudgetExhausted;
      else if (newton_status == NewtonStatus::Converged)
        status = SolveStatus::Converged;
      else
        status = stalled ? SolveStatus::Stalled : SolveStatus::BudgetExhausted;
      break;
    }

    consecutive_stalls = stalled ? consecutive_stalls + 1 : 0;
    if (consecutive_stalls >= 2) {
      status = SolveStatus::Stalled;
      break;
    }
    if (outer_stop(cost_prev, cost_curr, config.outer_rel_tol)) {
      status = SolveStatus::Converged;
      break;
    }
    cost_prev = cost_curr;
  }

  report.cost = transport_cost(inst.cost, plan);
  report.marginal_violation = marginal_violation(plan, inst.marginals);
  report.plan = std::move(plan);
  report.status = status;
  report.wall_time_s = seconds_since_start();
  return report;
}

}  // namespace pins
