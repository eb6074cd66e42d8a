#include "pins/core.hpp"

#include <limits>

namespace pins {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositiveMass: return "NonPositiveMass";
    case ErrorCode::MarginalSumMismatch: return "MarginalSumMismatch";
    case ErrorCode::NonFiniteCost: return "NonFiniteCost";
    case ErrorCode::NonPositiveReference: return "NonPositiveReference";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::AllZeroImage: return "AllZeroImage";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::BreakdownDetected: return "BreakdownDetected";
    case ErrorCode::NotAscentDirection: return "NotAscentDirection";
    case ErrorCode::LineSearchFailed: return "LineSearchFailed";
    case ErrorCode::DegenerateCycling: return "DegenerateCycling";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

double sum(std::span<const double> values) {
  CompensatedSum acc;
  for (double v : values) acc.add(v);
  return acc.value();
}

double dot(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(ErrorCode::DimensionMismatch, "dot: vector lengths differ");
  CompensatedSum acc;
  for (std::size_t i = 0; i < x.size(); ++i) acc.add(x[i] * y[i]);
  return acc.value();
}

double norm1(std::span<const double> x) {
  CompensatedSum acc;
  for (double v : x) acc.add(std::abs(v));
  return acc.value();
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw Error(ErrorCode::DimensionMismatch, "matrix data size does not match dims");
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

namespace {

void require_positive(const std::vector<double>& v, const char* name) {
  if (v.empty())
    throw Error(ErrorCode::DimensionMismatch, std::string(name) + " is empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0))
      throw Error(ErrorCode::NonPositiveMass,
                  std::string(name) + "[" + std::to_string(i) + "] is not > 0");
  }
}

void normalize_in_place(std::vector<double>& v, const char* name) {
  const double s = sum(v);
  if (!(std::abs(s - 1.0) <= 1e-6))
    throw Error(ErrorCode::MarginalSumMismatch,
                std::string(name) + " sums to " + std::to_string(s));
  for (double& x : v) x /= s;
}

}  // namespace

Marginals Marginals::normalized(std::vector<double> a, std::vector<double> b) {
  require_positive(a, "a");
  require_positive(b, "b");
  normalize_in_place(a, "a");
  normalize_in_place(b, "b");
  return Marginals{std::move(a), std::move(b)};
}

TransportPlan TransportPlan::from_linear(const DenseMatrix& entries) {
  DenseMatrix logs(entries.rows(), entries.cols());
  for (std::size_t i = 0; i < entries.rows(); ++i) {
    for (std::size_t j = 0; j < entries.cols(); ++j) {
      const double x = entries(i, j);
      if (x < 0.0 || !std::isfinite(x))
        throw Error(ErrorCode::InvalidArgument, "plan entries must be finite and >= 0");
      logs(i, j) = x == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(x);
    }
  }
  return TransportPlan(std::move(logs));
}

TransportPlan TransportPlan::product(const Marginals& marg) {
  DenseMatrix logs(marg.m(), marg.n());
  for (std::size_t i = 0; i < marg.m(); ++i) {
    const double la = std::log(marg.a[i]);
    for (std::size_t j = 0; j < marg.n(); ++j) logs(i, j) = la + std::log(marg.b[j]);
  }
  return TransportPlan(std::move(logs));
}

DenseMatrix TransportPlan::to_linear() const {
  DenseMatrix x(rows(), cols());
  for (std::size_t k = 0; k < x.size(); ++k) x.values()[k] = exp_clamped(log_.values()[k]);
  return x;
}

std::size_t TransportPlan::nonzeros() const {
  std::size_t count = 0;
  for (double l : log_.values())
    if (l >= kLogFloor) ++count;
  return count;
}

void validate_instance(const Instance& inst) {
  const auto& c = inst.cost;
  const auto& marg = inst.marginals;
  if (c.rows() == 0 || c.cols() == 0)
    throw Error(ErrorCode::DimensionMismatch, "cost matrix must be at least 1x1");
  if (marg.m() != c.rows() || marg.n() != c.cols())
    throw Error(ErrorCode::DimensionMismatch, "marginal lengths do not match cost dims");
  require_positive(marg.a, "a");
  require_positive(marg.b, "b");
  for (const auto* v : {&marg.a, &marg.b}) {
    const double s = sum(*v);
    if (!(std::abs(s - 1.0) <= 1e-12))
      throw Error(ErrorCode::MarginalSumMismatch,
                  "marginal sums to " + std::to_string(s));
  }
  for (double x : c.values())
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteCost, "cost entry is not finite");
}

double transport_cost(const CostMatrix& cost, const TransportPlan& plan) {
  if (cost.rows() != plan.rows() || cost.cols() != plan.cols())
    throw Error(ErrorCode::DimensionMismatch, "transport_cost: dims differ");
  CompensatedSum acc;
  const auto logs = plan.log_entries().values();
  const auto cs = cost.values();
  for (std::size_t k = 0; k < cs.size(); ++k) {
    const double x = exp_clamped(logs[k]);
    if (x != 0.0) acc.add(cs[k] * x);
  }
  return acc.value();
}

std::vector<double> row_sums(const TransportPlan& plan) {
  std::vector<double> out(plan.rows());
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    CompensatedSum acc;
    for (double l : plan.log_entries().row(i)) acc.add(exp_clamped(l));
    out[i] = acc.value();
  }
  return out;
}

std::vector<double> col_sums(const TransportPlan& plan) {
  std::vector<CompensatedSum> acc(plan.cols());
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    const auto row = plan.log_entries().row(i);
    for (std::size_t j = 0; j < row.size(); ++j) acc[j].add(exp_clamped(row[j]));
  }
  std::vector<double> out(plan.cols());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = acc[j].value();
  return out;
}

double marginal_violation(const TransportPlan& plan, const Marginals& marg) {
  if (plan.rows() != marg.m() || plan.cols() != marg.n())
    throw Error(ErrorCode::DimensionMismatch, "marginal_violation: dims differ");
  const auto r = row_sums(plan);
  const auto c = col_sums(plan);
  CompensatedSum acc;
  for (std::size_t i = 0; i < r.size(); ++i) acc.add(std::abs(marg.a[i] - r[i]));
  for (std::size_t j = 0; j < c.size(); ++j) acc.add(std::abs(marg.b[j] - c[j]));
  return acc.value();
}

namespace {

// 1 + (d - 1) e^d = sum_{k>=2} (k-1) d^k / k!, nonnegative for all d.
double bregman_kernel(double d) {
  if (std::abs(d) < 0.1) {
    double term = d;  // d^k / k! for k = 1
    double total = 0.0;
    for (int k = 2; k <= 12; ++k) {
      term *= d / k;
      total += (k - 1) * term;
    }
    return total;
  }
  const double em1 = std::expm1(d);
  return d * em1 + (d - em1);
}

}  // namespace

double bregman_divergence(const TransportPlan& x, const TransportPlan& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw Error(ErrorCode::DimensionMismatch, "bregman_divergence: dims differ");
  const auto lx = x.log_entries().values();
  const auto ly = y.log_entries().values();
  CompensatedSum acc;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    if (!std::isfinite(ly[k]))
      throw Error(ErrorCode::NonPositiveReference, "reference plan has a zero entry");
    const double yv = std::exp(ly[k]);
    if (!std::isfinite(lx[k])) {
      // 0 log 0 = 0: the term reduces to y.
      acc.add(yv);
      continue;
    }
    // x (log x - log y) - x + y = y (1 + (d - 1) e^d) with d = log x - log y.
    const double d = lx[k] - ly[k];
    if (d > 30.0) {
      const double xv = std::exp(lx[k]);
      acc.add(xv * (d - 1.0) + yv);
    } else {
      acc.add(yv * bregman_kernel(d));
    }
  }
  return acc.value();
}

}  // namespace pins
