#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pins/datagen.hpp"
#include "pins/sinkhorn.hpp"
#include "support.hpp"

using namespace pins;
namespace t = pins::testing;

namespace {

const Marginals kUniform2{{0.5, 0.5}, {0.5, 0.5}};

}  // namespace

TEST(PlanFromPotentials, ZeroPotentialsZeroCost) {
  const auto plan = plan_from_potentials(DualPotentials::zeros(2, 3), DenseMatrix(2, 3, 0.0), 1.0);
  for (double v : plan.log_entries().values()) EXPECT_EQ(v, -1.0);
}

TEST(PlanFromPotentials, GaugeInvariance) {
  std::mt19937_64 rng(1);
  const auto c = t::random_matrix(rng, 3, 4, 0.0, 1.0);
  auto pot = t::random_potentials(rng, 3, 4, 0.5);
  const auto base = plan_from_potentials(pot, c, 0.3).to_linear();
  for (auto& f : pot.f) f += 0.75;
  for (auto& g : pot.g) g -= 0.75;
  const auto shifted = plan_from_potentials(pot, c, 0.3).to_linear();
  for (std::size_t k = 0; k < base.size(); ++k)
    EXPECT_NEAR(shifted.values()[k], base.values()[k], 1e-15 * base.values()[k] * 10);
}

TEST(PlanFromPotentials, MatchesExtendedPrecision) {
  std::mt19937_64 rng(2);
  for (double eta : {1.0, 0.1, 0.01}) {
    const auto c = t::random_matrix(rng, 3, 3, 0.0, 1.0);
    const auto pot = t::random_potentials(rng, 3, 3, 0.5 * eta);
    const auto plan = plan_from_potentials(pot, c, eta);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        const double ref = static_cast<double>(t::plan_entry(pot, c, eta, i, j));
        EXPECT_NEAR(plan.entry(i, j), ref, 1e-13 * ref);
      }
  }
}

TEST(DualObjective, ClosedFormPoint) {
  const DenseMatrix c(2, 2, 0.0);
  const auto pot = DualPotentials::zeros(2, 2);
  EXPECT_NEAR(dual_objective(pot, kUniform2, c, 1.0), -4.0 / std::exp(1.0), 1e-15);
  EXPECT_NEAR(dual_objective(pot, kUniform2, c, 1.0), -1.47152, 1e-5);
  const auto grad = dual_gradient(pot, kUniform2, c, 1.0);
  for (double v : t::flatten(grad)) EXPECT_NEAR(v, 0.5 - 2.0 / std::exp(1.0), 1e-15);
  EXPECT_NEAR(grad.f[0], -0.23576, 1e-5);
}

TEST(DualObjective, GaugeInvariance) {
  std::mt19937_64 rng(3);
  const auto inst = t::random_instance(rng, 4, 3);
  auto pot = t::random_potentials(rng, 4, 3, 0.05);
  const double before = dual_objective(pot, inst.marginals, inst.cost, 0.1);
  for (auto& f : pot.f) f -= 0.3;
  for (auto& g : pot.g) g += 0.3;
  EXPECT_NEAR(dual_objective(pot, inst.marginals, inst.cost, 0.1), before, 1e-13);
}

TEST(DualObjective, OverflowOnDivergentPotentials) {
  auto pot = DualPotentials::zeros(2, 2);
  pot.f[0] = 800.0;
  try {
    dual_objective(pot, kUniform2, DenseMatrix(2, 2, 0.0), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Overflow);
  }
}

TEST(DualGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto inst = t::random_instance(rng, 4, 3);
    for (double eta : {1.0, 0.1}) {
      const auto pot = t::random_potentials(rng, 4, 3, 0.3 * eta);
      const auto fd = t::fd_gradient(pot, inst.marginals, inst.cost, eta, 1e-6);
      const auto g = t::flatten(dual_gradient(pot, inst.marginals, inst.cost, eta));
      EXPECT_LE(t::max_rel_dev(g, fd), 1e-6);
    }
  }
}

TEST(SinkhornSweep, FUpdateMatchesRowMarginals) {
  std::mt19937_64 rng(5);
  const auto inst = t::random_instance(rng, 6, 4);
  auto pot = DualPotentials::zeros(6, 4);
  for (int s = 0; s < 20; ++s) {
    sinkhorn_update_f(pot, inst.marginals, inst.cost, 0.05);
    const auto rows = row_sums(plan_from_potentials(pot, inst.cost, 0.05));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(rows[i], inst.marginals.a[i], 1e-14);
    sinkhorn_update_g(pot, inst.marginals, inst.cost, 0.05);
    const auto cols = col_sums(plan_from_potentials(pot, inst.cost, 0.05));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(cols[j], inst.marginals.b[j], 1e-14);
  }
}

TEST(SinkhornSweep, SingleCell) {
  const Marginals one{{1.0}, {1.0}};
  const auto pot = sinkhorn_sweep(DualPotentials::zeros(1, 1), one, DenseMatrix(1, 1, 0.7), 0.2);
  EXPECT_NEAR(plan_from_potentials(pot, DenseMatrix(1, 1, 0.7), 0.2).entry(0, 0), 1.0, 1e-15);
}

TEST(SinkhornSweep, ConstantCostGivesProductPlan) {
  std::mt19937_64 rng(6);
  const auto marg = Marginals::normalized(t::random_simplex(rng, 5), t::random_simplex(rng, 3));
  const DenseMatrix c(5, 3, 0.37);
  const auto pot = sinkhorn_sweep(DualPotentials::zeros(5, 3), marg, c, 0.1);
  const auto plan = plan_from_potentials(pot, c, 0.1);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(plan.entry(i, j), marg.a[i] * marg.b[j], 1e-15);
  EXPECT_LE(marginal_violation(plan, marg), 1e-14);
}

TEST(RunSinkhorn, DefaultsAndZeroStart) {
  const SinkhornSettings s;
  EXPECT_EQ(s.max_iters, 50000);
  EXPECT_DOUBLE_EQ(s.tol, 6.3e-4);
  EXPECT_DOUBLE_EQ(s.eta, 1e-2);
}

TEST(RunSinkhorn, ConvergesMonotonically) {
  const auto inst = gen_synthetic(8, 1);
  SinkhornSettings s;
  s.eta = 0.05;
  const auto res = run_sinkhorn(inst, inst.cost, s, DualPotentials::zeros(8, 8));
  ASSERT_TRUE(res.converged);
  ASSERT_EQ(res.trace.size(), static_cast<std::size_t>(res.sweeps) + 1);
  EXPECT_EQ(res.trace.front().iteration, 0);
  EXPECT_LE(res.trace.back().marginal_violation, s.tol);
  for (std::size_t k = 1; k < res.trace.size(); ++k)
    EXPECT_GE(res.trace[k].dual_objective, res.trace[k - 1].dual_objective - 1e-15);
}

TEST(RunSinkhorn, BudgetRespected) {
  const auto inst = gen_synthetic(10, 2);
  SinkhornSettings s;
  s.eta = 0.01;
  s.tol = 1e-14;
  s.max_iters = 7;
  const auto res = run_sinkhorn(inst, inst.cost, s, DualPotentials::zeros(10, 10));
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.sweeps, 7);
  EXPECT_EQ(res.trace.size(), 8u);
}
