#include "pins/sinkhorn.hpp"

#include <algorithm>
#include <chrono>
#include <limits>

namespace pins {

namespace {

void check_dims(const DualPotentials& pot, const CostMatrix& cost) {
  if (pot.f.size() != cost.rows() || pot.g.size() != cost.cols())
    throw Error(ErrorCode::DimensionMismatch, "potentials do not match cost dims");
}

void check_eta(double eta) {
  if (!(eta > 0.0)) throw Error(ErrorCode::InvalidArgument, "eta must be > 0");
}

// Per-row quantities of the plan X(f, g) gathered in one pass.
struct RowPass {
  std::vector<double> log_row_sums;
  std::vector<CompensatedSum> col_sums;
  CompensatedSum mass;
  CompensatedSum cost;
};

// log(X e)_i by log-sum-exp with per-row max shift. When `report_cost` is set,
// also accumulates column sums, total mass and <report_cost, X>.
RowPass row_pass(const DualPotentials& pot, const CostMatrix& cost, double eta,
                 const CostMatrix* report_cost) {
  const std::size_t m = cost.rows();
  const std::size_t n = cost.cols();
  RowPass out;
  out.log_row_sums.resize(m);
  if (report_cost) out.col_sums.resize(n);
  std::vector<double> shifted(n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto crow = cost.row(i);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      shifted[j] = (pot.g[j] - crow[j]) / eta;
      peak = std::max(peak, shifted[j]);
    }
    CompensatedSum row;
    CompensatedSum row_cost;
    const double base = pot.f[i] / eta - 1.0 + peak;
    const double scale = report_cost ? std::exp(base) : 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(shifted[j] - peak);
      row.add(e);
      if (report_cost) {
        out.col_sums[j].add(scale * e);
        row_cost.add((*report_cost)(i, j) * e);
      }
    }
    out.log_row_sums[i] = base + std::log(row.value());
    if (report_cost) {
      out.mass.add(scale * row.value());
      out.cost.add(scale * row_cost.value());
    }
  }
  return out;
}

std::vector<double> log_col_sums(const DualPotentials& pot, const CostMatrix& cost, double eta) {
  const std::size_t m = cost.rows();
  const std::size_t n = cost.cols();
  std::vector<double> peak(n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < m; ++i) {
    const auto crow = cost.row(i);
    for (std::size_t j = 0; j < n; ++j) peak[j] = std::max(peak[j], (pot.f[i] - crow[j]) / eta);
  }
  std::vector<CompensatedSum> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto crow = cost.row(i);
    for (std::size_t j = 0; j < n; ++j) acc[j].add(std::exp((pot.f[i] - crow[j]) / eta - peak[j]));
  }
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j)
    out[j] = pot.g[j] / eta - 1.0 + peak[j] + std::log(acc[j].value());
  return out;
}

void apply_f_update(DualPotentials& pot, const Marginals& marg, std::span<const double> log_rows,
                    double eta) {
  for (std::size_t i = 0; i < pot.f.size(); ++i)
    pot.f[i] += eta * (std::log(marg.a[i]) - log_rows[i]);
}

}  // namespace

TransportPlan plan_from_potentials(const DualPotentials& pot, const CostMatrix& cost, double eta) {
  check_eta(eta);
  check_dims(pot, cost);
  DenseMatrix logs(cost.rows(), cost.cols());
  for (std::size_t i = 0; i < cost.rows(); ++i)
    for (std::size_t j = 0; j < cost.cols(); ++j)
      logs(i, j) = (pot.f[i] + pot.g[j] - cost(i, j)) / eta - 1.0;
  return TransportPlan(std::move(logs));
}

// Evaluated in long double: the exponent (f + g - C) / eta is large for small
// eta, and forming it in double puts ~1e-14 relative error on each entry, far
// above the per-sweep gain once Sinkhorn has settled. The result is then
// effectively correctly rounded, so comparisons between iterates are exact.
double dual_objective(const DualPotentials& pot, const Marginals& marg, const CostMatrix& cost,
                      double eta) {
  check_eta(eta);
  check_dims(pot, cost);
  using LD = long double;
  LD mass = 0.0L;
  for (std::size_t i = 0; i < cost.rows(); ++i) {
    for (std::size_t j = 0; j < cost.cols(); ++j) {
      const LD arg = (static_cast<LD>(pot.f[i]) + pot.g[j] - cost(i, j)) / eta - 1.0L;
      if (arg > 700.0L) throw Error(ErrorCode::Overflow, "dual exponent exceeds 700");
      if (arg >= kLogFloor) mass += std::exp(arg);
    }
  }
  LD linear = 0.0L;
  for (std::size_t i = 0; i < pot.f.size(); ++i) linear += static_cast<LD>(marg.a[i]) * pot.f[i];
  for (std::size_t j = 0; j < pot.g.size(); ++j) linear += static_cast<LD>(marg.b[j]) * pot.g[j];
  return static_cast<double>(linear - eta * mass);
}

DualPotentials dual_gradient(const DualPotentials& pot, const Marginals& marg,
                             const CostMatrix& cost, double eta) {
  check_eta(eta);
  check_dims(pot, cost);
  const std::size_t m = cost.rows();
  const std::size_t n = cost.cols();
  std::vector<CompensatedSum> rows(m), cols(n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double arg = (pot.f[i] + pot.g[j] - cost(i, j)) / eta - 1.0;
      if (arg > 700.0) throw Error(ErrorCode::Overflow, "dual exponent exceeds 700");
      const double x = exp_clamped(arg);
      rows[i].add(x);
      cols[j].add(x);
    }
  }
  DualPotentials grad{std::vector<double>(m), std::vector<double>(n)};
  for (std::size_t i = 0; i < m; ++i) grad.f[i] = marg.a[i] - rows[i].value();
  for (std::size_t j = 0; j < n; ++j) grad.g[j] = marg.b[j] - cols[j].value();
  return grad;
}

void sinkhorn_update_f(DualPotentials& pot, const Marginals& marg, const CostMatrix& cost,
                       double eta) {
  check_eta(eta);
  check_dims(pot, cost);
  const auto pass = row_pass(pot, cost, eta, nullptr);
  apply_f_update(pot, marg, pass.log_row_sums, eta);
}

void sinkhorn_update_g(DualPotentials& pot, const Marginals& marg, const CostMatrix& cost,
                       double eta) {
  check_eta(eta);
  check_dims(pot, cost);
  const auto logs = log_col_sums(pot, cost, eta);
  for (std::size_t j = 0; j < pot.g.size(); ++j)
    pot.g[j] += eta * (std::log(marg.b[j]) - logs[j]);
}

DualPotentials sinkhorn_sweep(const DualPotentials& pot, const Marginals& marg,
                              const CostMatrix& cost, double eta) {
  DualPotentials next = pot;
  sinkhorn_update_f(next, marg, cost, eta);
  sinkhorn_update_g(next, marg, cost, eta);
  return next;
}

SinkhornResult run_sinkhorn(const Instance& inst, const CostMatrix& effective_cost,
                            const SinkhornSettings& settings, DualPotentials init) {
  check_eta(settings.eta);
  check_dims(init, effective_cost);
  if (effective_cost.rows() != inst.m() || effective_cost.cols() != inst.n())
    throw Error(ErrorCode::DimensionMismatch, "effective cost does not match instance");

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const double eta = settings.eta;
  const auto& marg = inst.marginals;

  SinkhornResult result;
  result.potentials = std::move(init);
  auto& pot = result.potentials;
  for (int t = 0;; ++t) {
    // The row pass both measures the current state and drives the f-update.
    const auto pass = row_pass(pot, effective_cost, eta, &inst.cost);
    CompensatedSum viol;
    for (std::size_t i = 0; i < inst.m(); ++i)
      viol.add(std::abs(marg.a[i] - std::exp(pass.log_row_sums[i])));
    for (std::size_t j = 0; j < inst.n(); ++j)
      viol.add(std::abs(marg.b[j] - pass.col_sums[j].value()));

    CompensatedSum dual;
    dual.add(dot(marg.a, pot.f));
    dual.add(dot(marg.b, pot.g));
    dual.add(-eta * pass.mass.value());

    SinkhornRecord rec;
    rec.iteration = t;
    rec.elapsed_s = std::chrono::duration<double>(Clock::now() - start).count();
    rec.dual_objective = dual.value();
    rec.marginal_violation = viol.value();
    rec.primal_cost = pass.cost.value();
    result.trace.push_back(rec);
    result.sweeps = t;

    if (rec.marginal_violation <= settings.tol) {
      result.converged = true;
      break;
    }
    if (t >= settings.max_iters) break;

    apply_f_update(pot, marg, pass.log_row_sums, eta);
    sinkhorn_update_g(pot, marg, effective_cost, eta);
  }
  return result;
}

}  // namespace pins
