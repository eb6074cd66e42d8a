#include "pins/newton.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <tuple>

namespace pins {

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (std::size_t i = 0; i < rows; ++i) {
    CompensatedSum acc;
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) acc.add(values[k] * x[col_idx[k]]);
    y[i] = acc.value();
  }
}

void CsrMatrix::multiply_transpose(std::span<const double> x, std::span<double> y) const {
  std::vector<CompensatedSum> acc(cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) acc[col_idx[k]].add(values[k] * x[i]);
  for (std::size_t j = 0; j < cols; ++j) y[j] = acc[j].value();
}

DenseMatrix CsrMatrix::to_dense() const {
  DenseMatrix d(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) d(i, col_idx[k]) = values[k];
  return d;
}

void BlockHessian::apply(std::span<const double> v, std::span<double> y) const {
  const std::size_t mm = m();
  const std::size_t nn = n();
  if (v.size() != mm + nn || y.size() != mm + nn)
    throw Error(ErrorCode::DimensionMismatch, "BlockHessian::apply: vector length");
  const auto vf = v.first(mm);
  const auto vg = v.subspan(mm);
  auto yf = y.first(mm);
  auto yg = y.subspan(mm);
  off_block.multiply(vg, yf);
  off_block.multiply_transpose(vf, yg);
  for (std::size_t i = 0; i < mm; ++i) yf[i] += d_row[i] * vf[i];
  for (std::size_t j = 0; j < nn; ++j) yg[j] += d_col[j] * vg[j];
}

DenseMatrix BlockHessian::to_dense() const {
  const std::size_t mm = m();
  DenseMatrix d(dim(), dim());
  for (std::size_t i = 0; i < mm; ++i) d(i, i) = d_row[i];
  for (std::size_t j = 0; j < n(); ++j) d(mm + j, mm + j) = d_col[j];
  for (std::size_t i = 0; i < mm; ++i) {
    for (std::size_t k = off_block.row_ptr[i]; k < off_block.row_ptr[i + 1]; ++k) {
      const std::size_t j = off_block.col_idx[k];
      d(i, mm + j) = off_block.values[k];
      d(mm + j, i) = off_block.values[k];
    }
  }
  return d;
}

double BlockHessian::nonzero_fraction() const {
  std::size_t count = 2 * off_block.nonzeros();
  for (double v : d_row) count += v != 0.0;
  for (double v : d_col) count += v != 0.0;
  const double total = static_cast<double>(dim()) * static_cast<double>(dim());
  return static_cast<double>(count) / total;
}

void validate(const NewtonSettings& s) {
  if (!(s.rho > 0.0 && s.rho <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "rho must lie in (0, 1]");
  if (!(s.armijo_c > 0.0 && s.armijo_c < 0.5))
    throw Error(ErrorCode::InvalidArgument, "armijo_c must lie in (0, 0.5)");
  if (!(s.backtrack_factor > 0.0 && s.backtrack_factor < 1.0))
    throw Error(ErrorCode::InvalidArgument, "backtrack_factor must lie in (0, 1)");
  if (s.max_iters < 0 || s.cg_max_iters < 1 || s.max_backtracks < 1 || !(s.grad_tol > 0.0) ||
      !(s.cg_tol > 0.0) || !(s.damping >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "invalid Newton budget or tolerance");
}

namespace {

// Hessian of the dual at pot together with the plan's row and column sums.
struct Assembly {
  BlockHessian hessian;
  std::vector<double> row_sums;
  std::vector<double> col_sums;
  double mass = 0.0;
  double primal_cost = 0.0;  // against report_cost when provided
};

Assembly assemble(const DualPotentials& pot, const CostMatrix& cost, double eta,
                  const CostMatrix* report_cost) {
  if (!(eta > 0.0)) throw Error(ErrorCode::InvalidArgument, "eta must be > 0");
  if (pot.f.size() != cost.rows() || pot.g.size() != cost.cols())
    throw Error(ErrorCode::DimensionMismatch, "potentials do not match cost dims");
  const std::size_t m = cost.rows();
  const std::size_t n = cost.cols();
  Assembly out;
  auto& h = out.hessian;
  h.eta = eta;
  h.off_block.rows = m;
  h.off_block.cols = n;
  h.off_block.row_ptr.assign(1, 0);
  std::vector<CompensatedSum> cols(n);
  CompensatedSum mass, primal;
  out.row_sums.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    CompensatedSum row;
    for (std::size_t j = 0; j < n; ++j) {
      const double arg = (pot.f[i] + pot.g[j] - cost(i, j)) / eta - 1.0;
      if (arg < kLogFloor) continue;
      const double x = std::exp(arg);
      row.add(x);
      cols[j].add(x);
      if (report_cost) primal.add((*report_cost)(i, j) * x);
      h.off_block.col_idx.push_back(j);
      h.off_block.values.push_back(-x / eta);
    }
    h.off_block.row_ptr.push_back(h.off_block.col_idx.size());
    out.row_sums[i] = row.value();
    mass.add(row.value());
  }
  out.col_sums.resize(n);
  for (std::size_t j = 0; j < n; ++j) out.col_sums[j] = cols[j].value();
  h.d_row.resize(m);
  h.d_col.resize(n);
  for (std::size_t i = 0; i < m; ++i) h.d_row[i] = -out.row_sums[i] / eta;
  for (std::size_t j = 0; j < n; ++j) h.d_col[j] = -out.col_sums[j] / eta;
  out.mass = mass.value();
  out.primal_cost = primal.value();
  return out;
}

// e^s - 1 - s, accurate near zero.
double exp_excess(double s) {
  if (std::abs(s) < 1e-2) {
    const double s2 = s * s;
    return s2 * (0.5 + s * (1.0 / 6.0 + s * (1.0 / 24.0 + s * (1.0 / 120.0 + s / 720.0))));
  }
  return std::expm1(s) - s;
}

}  // namespace

BlockHessian assemble_hessian(const DualPotentials& pot, const CostMatrix& cost, double eta) {
  return assemble(pot, cost, eta, nullptr).hessian;
}

std::size_t sparsify_keep_count(double rho, std::size_t m, std::size_t n) {
  if (!(rho > 0.0 && rho <= 1.0)) throw Error(ErrorCode::InvalidArgument, "rho must lie in (0, 1]");
  // The 1e-9 guard keeps products like 0.1 * 2500 from rounding up.
  const double budget = std::ceil(rho * static_cast<double>(m) * static_cast<double>(n) - 1e-9);
  return static_cast<std::size_t>(std::max(0.0, budget));
}

BlockHessian sparsify(const BlockHessian& h, double rho) {
  const auto& b = h.off_block;
  const std::size_t keep = sparsify_keep_count(rho, b.rows, b.cols);
  if (keep >= b.nonzeros()) return h;

  struct Cell {
    double magnitude;
    std::size_t row, col;
    double value;
  };
  std::vector<Cell> cells;
  cells.reserve(b.nonzeros());
  for (std::size_t i = 0; i < b.rows; ++i)
    for (std::size_t k = b.row_ptr[i]; k < b.row_ptr[i + 1]; ++k)
      cells.push_back({std::abs(b.values[k]), i, b.col_idx[k], b.values[k]});

  const auto larger = [](const Cell& x, const Cell& y) {
    if (x.magnitude != y.magnitude) return x.magnitude > y.magnitude;
    return std::tie(x.row, x.col) < std::tie(y.row, y.col);
  };
  std::nth_element(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(keep), cells.end(), larger);
  cells.resize(keep);
  std::sort(cells.begin(), cells.end(),
            [](const Cell& x, const Cell& y) { return std::tie(x.row, x.col) < std::tie(y.row, y.col); });

  BlockHessian out;
  out.d_row = h.d_row;
  out.d_col = h.d_col;
  out.eta = h.eta;
  out.off_block.rows = b.rows;
  out.off_block.cols = b.cols;
  out.off_block.row_ptr.assign(b.rows + 1, 0);
  out.off_block.col_idx.reserve(keep);
  out.off_block.values.reserve(keep);
  for (const auto& c : cells) {
    ++out.off_block.row_ptr[c.row + 1];
    out.off_block.col_idx.push_back(c.col);
    out.off_block.values.push_back(c.value);
  }
  for (std::size_t i = 0; i < b.rows; ++i) out.off_block.row_ptr[i + 1] += out.off_block.row_ptr[i];
  return out;
}

CgResult cg_solve(const BlockHessian& h, std::span<const double> rhs, double tol, int max_iters,
                  double mu) {
  const std::size_t dim = h.dim();
  if (rhs.size() != dim) throw Error(ErrorCode::DimensionMismatch, "cg_solve: rhs length");
  for (double v : rhs)
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "cg_solve: rhs not finite");

  // A = -H + mu I
  std::vector<double> tmp(dim);
  const auto apply_a = [&](std::span<const double> v, std::span<double> out) {
    h.apply(v, tmp);
    for (std::size_t k = 0; k < dim; ++k) out[k] = -tmp[k] + mu * v[k];
  };

  CgResult result;
  result.solution.assign(dim, 0.0);
  auto& x = result.solution;
  const double bnorm = std::sqrt(dot(rhs, rhs));
  if (bnorm == 0.0) {
    result.converged = true;
    return result;
  }

  std::vector<double> r(rhs.begin(), rhs.end());
  std::vector<double> p = r;
  std::vector<double> ap(dim);
  double rs = dot(r, r);
  for (int it = 0; it < max_iters; ++it) {
    apply_a(p, ap);
    const double curvature = dot(p, ap);
    if (!(curvature > 0.0))
      throw Error(ErrorCode::BreakdownDetected, "nonpositive curvature in CG; retry with damping");
    const double step = rs / curvature;
    for (std::size_t k = 0; k < dim; ++k) {
      x[k] += step * p[k];
      r[k] -= step * ap[k];
    }
    result.iterations = it + 1;
    double rs_next = dot(r, r);
    if (std::sqrt(rs_next) <= tol * bnorm) {
      // Confirm against the true residual; restart from it on drift.
      apply_a(x, ap);
      for (std::size_t k = 0; k < dim; ++k) r[k] = rhs[k] - ap[k];
      rs_next = dot(r, r);
      if (std::sqrt(rs_next) <= tol * bnorm) {
        result.converged = true;
        result.relative_residual = std::sqrt(rs_next) / bnorm;
        return result;
      }
      p = r;
      rs = rs_next;
      continue;
    }
    const double beta = rs_next / rs;
    for (std::size_t k = 0; k < dim; ++k) p[k] = r[k] + beta * p[k];
    rs = rs_next;
  }
  apply_a(x, ap);
  for (std::size_t k = 0; k < dim; ++k) r[k] = rhs[k] - ap[k];
  result.relative_residual = std::sqrt(dot(r, r)) / bnorm;
  result.converged = result.relative_residual <= tol;
  return result;
}

double dot(const DualPotentials& x, const DualPotentials& y) {
  CompensatedSum acc;
  acc.add(dot(x.f, y.f));
  acc.add(dot(x.g, y.g));
  return acc.value();
}

DualPotentials axpy(const DualPotentials& x, double alpha, const DualPotentials& d) {
  if (x.f.size() != d.f.size() || x.g.size() != d.g.size())
    throw Error(ErrorCode::DimensionMismatch, "axpy: shapes differ");
  DualPotentials out = x;
  for (std::size_t i = 0; i < out.f.size(); ++i) out.f[i] += alpha * d.f[i];
  for (std::size_t j = 0; j < out.g.size(); ++j) out.g[j] += alpha * d.g[j];
  return out;
}

double AscentObjective::increase(const DualPotentials& x, const DualPotentials& d,
                                 double alpha) const {
  return value(axpy(x, alpha, d)) - value(x);
}

double EntropicDual::value(const DualPotentials& x) const {
  return dual_objective(x, marg_, cost_, eta_);
}

DualPotentials EntropicDual::gradient(const DualPotentials& x) const {
  return dual_gradient(x, marg_, cost_, eta_);
}

// P(x + alpha d) - P(x) = alpha <grad P(x), d> - eta sum X_ij (e^s - 1 - s)
// with s_ij = alpha (df_i + dg_j) / eta. Both terms are free of cancellation.
double EntropicDual::increase(const DualPotentials& x, const DualPotentials& d,
                              double alpha) const {
  const std::size_t m = cost_.rows();
  const std::size_t n = cost_.cols();
  std::vector<CompensatedSum> rows(m), cols(n);
  CompensatedSum curvature;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double arg = (x.f[i] + x.g[j] - cost_(i, j)) / eta_ - 1.0;
      const double s = alpha * (d.f[i] + d.g[j]) / eta_;
      if (arg + s > 700.0) return -std::numeric_limits<double>::infinity();
      if (arg < kLogFloor) {
        curvature.add(exp_clamped(arg + s));
        continue;
      }
      const double xv = std::exp(arg);
      rows[i].add(xv);
      cols[j].add(xv);
      curvature.add(xv * exp_excess(s));
    }
  }
  CompensatedSum slope;
  for (std::size_t i = 0; i < m; ++i) slope.add((marg_.a[i] - rows[i].value()) * d.f[i]);
  for (std::size_t j = 0; j < n; ++j) slope.add((marg_.b[j] - cols[j].value()) * d.g[j]);
  const double inc = alpha * slope.value() - eta_ * curvature.value();
  return std::isnan(inc) ? -std::numeric_limits<double>::infinity() : inc;
}

double line_search(const AscentObjective& objective, const DualPotentials& pot,
                   const DualPotentials& dir, const NewtonSettings& settings) {
  const double slope = dot(objective.gradient(pot), dir);
  if (!(slope > 0.0))
    throw Error(ErrorCode::NotAscentDirection, "directional derivative is not positive");
  double alpha = 1.0;
  for (int trial = 0; trial < settings.max_backtracks; ++trial) {
    if (objective.increase(pot, dir, alpha) >= settings.armijo_c * alpha * slope) return alpha;
    alpha *= settings.backtrack_factor;
  }
  throw Error(ErrorCode::LineSearchFailed, "no step satisfied the Armijo condition");
}

const char* to_string(NewtonStatus status) {
  switch (status) {
    case NewtonStatus::Converged: return "converged";
    case NewtonStatus::BudgetExhausted: return "budget_exhausted";
    case NewtonStatus::Stalled: return "stalled";
  }
  return "unknown";
}

NewtonResult newton_phase(const Instance& inst, const CostMatrix& effective_cost,
                          const NewtonSettings& settings, double eta, DualPotentials init) {
  validate(settings);
  if (effective_cost.rows() != inst.m() || effective_cost.cols() != inst.n())
    throw Error(ErrorCode::DimensionMismatch, "effective cost does not match instance");
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const auto& marg = inst.marginals;
  const EntropicDual objective(marg, effective_cost, eta);

  NewtonResult result;
  result.potentials = std::move(init);
  auto& pot = result.potentials;
  for (int it = 0;; ++it) {
    auto assembly = assemble(pot, effective_cost, eta, &inst.cost);
    DualPotentials grad{std::vector<double>(inst.m()), std::vector<double>(inst.n())};
    for (std::size_t i = 0; i < inst.m(); ++i) grad.f[i] = marg.a[i] - assembly.row_sums[i];
    for (std::size_t j = 0; j < inst.n(); ++j) grad.g[j] = marg.b[j] - assembly.col_sums[j];

    NewtonRecord rec;
    rec.iteration = it;
    CompensatedSum dual;
    dual.add(dot(marg.a, pot.f));
    dual.add(dot(marg.b, pot.g));
    dual.add(-eta * assembly.mass);
    rec.dual_objective = dual.value();
    rec.grad_norm = norm1(grad.f) + norm1(grad.g);
    rec.primal_cost = assembly.primal_cost;
    rec.offblock_nnz = std::min(assembly.hessian.off_block.nonzeros(),
                                sparsify_keep_count(settings.rho, inst.m(), inst.n()));

    if (rec.grad_norm <= settings.grad_tol) {
      result.status = NewtonStatus::Converged;
    } else if (it >= settings.max_iters) {
      result.status = NewtonStatus::BudgetExhausted;
    } else {
      const auto sparse = sparsify(assembly.hessian, settings.rho);
      double peak = 0.0;
      for (double v : sparse.d_row) peak = std::max(peak, std::abs(v));
      for (double v : sparse.d_col) peak = std::max(peak, std::abs(v));
      const double mu = settings.damping * peak;

      std::vector<double> rhs(grad.f);
      rhs.insert(rhs.end(), grad.g.begin(), grad.g.end());
      DualPotentials dir;
      bool have_dir = false;
      try {
        auto cg = cg_solve(sparse, rhs, settings.cg_tol, settings.cg_max_iters, mu);
        rec.cg_iterations = cg.iterations;
        const auto split = cg.solution.begin() + static_cast<std::ptrdiff_t>(inst.m());
        dir.f.assign(cg.solution.begin(), split);
        dir.g.assign(split, cg.solution.end());
        have_dir = true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::BreakdownDetected) throw;
      }

      double alpha = 0.0;
      if (have_dir) {
        try {
          alpha = line_search(objective, pot, dir, settings);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NotAscentDirection && e.code() != ErrorCode::LineSearchFailed)
            throw;
          have_dir = false;
        }
      }
      if (!have_dir) {
        dir = grad;
        rec.gradient_step = true;
        try {
          alpha = line_search(objective, pot, dir, settings);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NotAscentDirection && e.code() != ErrorCode::LineSearchFailed)
            throw;
          result.status = NewtonStatus::Stalled;
        }
      }
      if (result.status != NewtonStatus::Stalled) {
        rec.alpha = alpha;
        pot = axpy(pot, alpha, dir);
      }
    }
    rec.elapsed_s = std::chrono::duration<double>(Clock::now() - start).count();
    result.trace.push_back(rec);
    if (rec.grad_norm <= settings.grad_tol || it >= settings.max_iters ||
        result.status == NewtonStatus::Stalled)
      break;
  }
  return result;
}

BlockHessian reference_hessian(const TransportPlan& exact_plan, const TransportPlan& sinkhorn_plan,
                               double eta) {
  if (exact_plan.rows() != sinkhorn_plan.rows() || exact_plan.cols() != sinkhorn_plan.cols())
    throw Error(ErrorCode::DimensionMismatch, "reference_hessian: plan dims differ");
  if (!(eta > 0.0)) throw Error(ErrorCode::InvalidArgument, "eta must be > 0");
  const std::size_t m = exact_plan.rows();
  const std::size_t n = exact_plan.cols();
  BlockHessian h;
  h.eta = eta;
  h.d_row = row_sums(sinkhorn_plan);
  h.d_col = col_sums(sinkhorn_plan);
  for (double& v : h.d_row) v = -v / eta;
  for (double& v : h.d_col) v = -v / eta;
  h.off_block.rows = m;
  h.off_block.cols = n;
  h.off_block.row_ptr.assign(1, 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double x = exact_plan.entry(i, j);
      if (x == 0.0) continue;
      h.off_block.col_idx.push_back(j);
      h.off_block.values.push_back(-x / eta);
    }
    h.off_block.row_ptr.push_back(h.off_block.col_idx.size());
  }
  return h;
}

double hessian_distance_l1(const BlockHessian& lhs, const BlockHessian& rhs) {
  if (lhs.m() != rhs.m() || lhs.n() != rhs.n())
    throw Error(ErrorCode::DimensionMismatch, "hessian_distance_l1: shapes differ");
  const auto a = lhs.to_dense();
  const auto b = rhs.to_dense();
  CompensatedSum acc;
  for (std::size_t k = 0; k < a.size(); ++k) acc.add(std::abs(a.values()[k] - b.values()[k]));
  return acc.value();
}

}  // namespace pins
