#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "plugreg/linalg.hpp"

namespace plugreg {

/// Smooth part of a composite objective. `value_grad` is optional and lets
/// losses share work between value and gradient at the same point.
struct ObjectiveHandle {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> grad;
  std::function<std::pair<double, Vec>(const Vec&)> value_grad;
  Index dim = 0;

  std::pair<double, Vec> evaluate(const Vec& theta) const {
    if (value_grad) return value_grad(theta);
    return {value(theta), grad(theta)};
  }
};

/// Feasible set for the solver: all of R^p, or {u : ||u - center||_1 <= radius}.
struct SearchSet {
  enum class Kind { full_space, l1_ball };

  Kind kind = Kind::full_space;
  Vec center;
  double radius = 0.0;

  static SearchSet full() { return {}; }
  static SearchSet l1_ball(Vec center, double radius);

  bool contains(const Vec& v, double slack = 1e-12) const;
  Vec project(const Vec& v) const;
};

struct StepRule {
  enum class Kind { fixed, backtracking };

  Kind kind = Kind::backtracking;
  double eta = 1.0;   // fixed step, or initial step for backtracking
  double beta = 0.5;  // shrink factor, 0 < beta < 1

  static StepRule fixed(double eta) { return {Kind::fixed, eta, 0.5}; }
  static StepRule backtracking(double beta = 0.5, double eta0 = 1.0) {
    return {Kind::backtracking, eta0, beta};
  }
};

struct SolverConfig {
  int max_iters = 10000;
  double tol = 1e-8;  // relative change in the composite objective
  StepRule step = StepRule::backtracking();
  bool acceleration = true;  // ignored (forced off) on l1-ball search sets

  void validate() const;
};

struct SolverDiagnostics {
  int iterations = 0;
  double final_step = 0.0;
  bool converged = false;
  bool init_projected = false;
  bool stalled = false;  // no descent from a plain projected step
  double objective = 0.0;
  Vec init;
};

struct SolveResult {
  Vec theta;
  SolverDiagnostics diagnostics;
};

/// sign(v_j) * max(|v_j| - t, 0). Ties |v_j| == t map to exactly 0.
Vec soft_threshold(const Vec& v, double t);

/// Euclidean projection onto {u : ||u - center||_1 <= radius}.
Vec project_l1_ball(const Vec& v, const Vec& center, double radius);

/// Minimizes f(theta) + lambda * ||theta||_1 over `set`.
///
/// Monotone accelerated proximal gradient with function-value restart. On an
/// l1 ball the prox step (soft-threshold) is followed by the ball projection
/// and momentum is disabled. Every accepted iterate lowers (or keeps) the
/// composite objective; the loop stops once the relative decrease falls below
/// `cfg.tol`. Throws NumericFailure when the loss or gradient is not finite.
SolveResult prox_grad_minimize(const ObjectiveHandle& obj, double lambda, const SearchSet& set,
                               const Vec& init, const SolverConfig& cfg = {});

}  // namespace plugreg
