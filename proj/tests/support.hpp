#pragma once

// Independent oracles and seeded generators shared by the tests. Everything
// here is computed directly in long double, without library reductions.

#include <cmath>
#include <random>
#include <vector>

#include "pins/core.hpp"
#include "pins/newton.hpp"
#include "pins/sinkhorn.hpp"

namespace pins::testing {

using LD = long double;

inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t k) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> v(k);
  for (auto& x : v) x = u(rng);
  LD s = 0;
  for (double x : v) s += x;
  for (auto& x : v) x = static_cast<double>(x / s);
  return Marginals::normalized(v, std::vector<double>(1, 1.0)).a;
}

inline DenseMatrix random_matrix(std::mt19937_64& rng, std::size_t m, std::size_t n, double lo,
                                 double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  DenseMatrix c(m, n);
  for (auto& x : c.values()) x = u(rng);
  return c;
}

inline Instance random_instance(std::mt19937_64& rng, std::size_t m, std::size_t n) {
  Instance inst;
  inst.cost = random_matrix(rng, m, n, 0.0, 1.0);
  inst.marginals = Marginals::normalized(random_simplex(rng, m), random_simplex(rng, n));
  return inst;
}

inline DualPotentials random_potentials(std::mt19937_64& rng, std::size_t m, std::size_t n,
                                        double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  DualPotentials p = DualPotentials::zeros(m, n);
  for (auto& x : p.f) x = u(rng);
  for (auto& x : p.g) x = u(rng);
  return p;
}

inline LD plan_entry(const DualPotentials& p, const CostMatrix& c, double eta, std::size_t i,
                     std::size_t j) {
  return std::exp((static_cast<LD>(p.f[i]) + p.g[j] - c(i, j)) / eta - 1.0L);
}

inline LD dual_value(const DualPotentials& p, const Marginals& mg, const CostMatrix& c, double eta) {
  LD v = 0;
  for (std::size_t i = 0; i < p.f.size(); ++i) v += static_cast<LD>(mg.a[i]) * p.f[i];
  for (std::size_t j = 0; j < p.g.size(); ++j) v += static_cast<LD>(mg.b[j]) * p.g[j];
  LD mass = 0;
  for (std::size_t i = 0; i < p.f.size(); ++i)
    for (std::size_t j = 0; j < p.g.size(); ++j) mass += plan_entry(p, c, eta, i, j);
  return v - eta * mass;
}

// Stacked (f, g) as a flat vector and back.
inline std::vector<double> flatten(const DualPotentials& p) {
  std::vector<double> v(p.f);
  v.insert(v.end(), p.g.begin(), p.g.end());
  return v;
}

inline DualPotentials unflatten(const std::vector<double>& v, std::size_t m) {
  return {std::vector<double>(v.begin(), v.begin() + m), std::vector<double>(v.begin() + m, v.end())};
}

// max_k |x_k - y_k| / max(1, max_k |y_k|)
inline double max_rel_dev(const std::vector<double>& x, const std::vector<double>& y) {
  double dev = 0, scale = 1;
  for (std::size_t k = 0; k < x.size(); ++k) {
    dev = std::max(dev, std::abs(x[k] - y[k]));
    scale = std::max(scale, std::abs(y[k]));
  }
  return dev / scale;
}

// Central differences of the dual objective, evaluated in long double.
inline std::vector<double> fd_gradient(const DualPotentials& p, const Marginals& mg,
                                       const CostMatrix& c, double eta, double h) {
  const std::size_t m = p.f.size();
  auto x = flatten(p);
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    auto xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] = static_cast<double>((dual_value(unflatten(xp, m), mg, c, eta) -
                                dual_value(unflatten(xm, m), mg, c, eta)) /
                               (2.0L * h));
  }
  return g;
}

// Central differences of dual_gradient along v.
inline std::vector<double> fd_hessian_vector(const DualPotentials& p, const Marginals& mg,
                                             const CostMatrix& c, double eta,
                                             const std::vector<double>& v, double h) {
  const std::size_t m = p.f.size();
  auto x = flatten(p);
  auto xp = x, xm = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    xp[k] += h * v[k];
    xm[k] -= h * v[k];
  }
  const auto gp = flatten(dual_gradient(unflatten(xp, m), mg, c, eta));
  const auto gm = flatten(dual_gradient(unflatten(xm, m), mg, c, eta));
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (gp[k] - gm[k]) / (2 * h);
  return out;
}

}  // namespace pins::testing
