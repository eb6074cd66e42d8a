#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pins {

enum class ErrorCode {
  DimensionMismatch,
  NonPositiveMass,
  MarginalSumMismatch,
  NonFiniteCost,
  NonPositiveReference,
  InvalidArgument,
  Overflow,
  AllZeroImage,
  CountMismatch,
  DimMismatch,
  BreakdownDetected,
  NotAscentDirection,
  LineSearchFailed,
  DegenerateCycling,
  TooLarge,
  ParseError,
  IoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Neumaier-compensated accumulator. All library reductions go through this.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double sum(std::span<const double> values);
double dot(std::span<const double> x, std::span<const double> y);
double norm1(std::span<const double> x);

// exp() for log-domain plan entries: arguments below kLogFloor contribute 0.
inline constexpr double kLogFloor = -700.0;
inline double exp_clamped(double log_value) {
  return log_value < kLogFloor ? 0.0 : std::exp(log_value);
}

/// Dense row-major matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  DenseMatrix transposed() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using CostMatrix = DenseMatrix;

/// Source and target probability vectors.
struct Marginals {
  std::vector<double> a;
  std::vector<double> b;

  // Divides each vector by its sum when that sum is within 1e-6 of one;
  // throws MarginalSumMismatch otherwise and NonPositiveMass on entries <= 0.
  static Marginals normalized(std::vector<double> a, std::vector<double> b);

  std::size_t m() const { return a.size(); }
  std::size_t n() const { return b.size(); }

  friend bool operator==(const Marginals&, const Marginals&) = default;
};

/// Coupling matrix stored as natural-log entries. An entry of -inf is an exact
/// zero (vertex plans from the exact solver carry those).
class TransportPlan {
 public:
  TransportPlan() = default;
  explicit TransportPlan(DenseMatrix log_entries) : log_(std::move(log_entries)) {}

  static TransportPlan from_linear(const DenseMatrix& entries);
  // The product coupling a b^T.
  static TransportPlan product(const Marginals& marg);

  std::size_t rows() const { return log_.rows(); }
  std::size_t cols() const { return log_.cols(); }

  double log_entry(std::size_t i, std::size_t j) const { return log_(i, j); }
  double entry(std::size_t i, std::size_t j) const { return exp_clamped(log_(i, j)); }

  const DenseMatrix& log_entries() const { return log_; }
  DenseMatrix to_linear() const;

  // Number of entries whose linear value is nonzero.
  std::size_t nonzeros() const;

 private:
  DenseMatrix log_;
};

struct Instance {
  CostMatrix cost;
  Marginals marginals;

  std::size_t m() const { return cost.rows(); }
  std::size_t n() const { return cost.cols(); }

  friend bool operator==(const Instance&, const Instance&) = default;
};

void validate_instance(const Instance& inst);

double transport_cost(const CostMatrix& cost, const TransportPlan& plan);

// ||a - X e||_1 + ||b - X^T e||_1
double marginal_violation(const TransportPlan& plan, const Marginals& marg);

// Row sums X e and column sums X^T e of a plan.
std::vector<double> row_sums(const TransportPlan& plan);
std::vector<double> col_sums(const TransportPlan& plan);

// Bregman divergence generated by phi(X) = sum X (log X - 1).
double bregman_divergence(const TransportPlan& x, const TransportPlan& y);

}  // namespace pins
