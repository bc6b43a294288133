#include "plugreg/solver.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "plugreg/errors.hpp"

namespace plugreg {

SearchSet SearchSet::l1_ball(Vec center, double radius) {
  if (!(radius >= 0.0)) throw InvalidArgument("l1 ball radius must be nonnegative");
  return {Kind::l1_ball, std::move(center), radius};
}

bool SearchSet::contains(const Vec& v, double slack) const {
  if (kind == Kind::full_space) return true;
  return (v - center).lpNorm<1>() <= radius + slack;
}

Vec SearchSet::project(const Vec& v) const {
  if (kind == Kind::full_space) return v;
  return project_l1_ball(v, center, radius);
}

void SolverConfig::validate() const {
  if (max_iters <= 0) throw InvalidArgument("max_iters must be positive");
  if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
  if (!(step.eta > 0.0)) throw InvalidArgument("step size must be positive");
  if (step.kind == StepRule::Kind::backtracking && !(step.beta > 0.0 && step.beta < 1.0))
    throw InvalidArgument("backtracking factor must lie in (0, 1)");
}

Vec soft_threshold(const Vec& v, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("soft_threshold: threshold must be nonnegative");
  Vec out(v.size());
  for (Index j = 0; j < v.size(); ++j) {
    const double a = std::abs(v[j]) - t;
    out[j] = a > 0.0 ? std::copysign(a, v[j]) : 0.0;
  }
  return out;
}

Vec project_l1_ball(const Vec& v, const Vec& center, double radius) {
  if (!(radius >= 0.0)) throw InvalidArgument("project_l1_ball: radius must be nonnegative");
  if (center.size() != v.size()) throw InvalidArgument("project_l1_ball: dimension mismatch");
  const Vec w = v - center;
  if (w.lpNorm<1>() <= radius) return v;
  if (radius == 0.0) return center;

  // Simplex projection of |w| (Duchi et al.): find the shift theta so that
  // sum_j max(|w_j| - theta, 0) == radius.
  std::vector<double> mags(static_cast<std::size_t>(w.size()));
  for (Index j = 0; j < w.size(); ++j) mags[static_cast<std::size_t>(j)] = std::abs(w[j]);
  std::sort(mags.begin(), mags.end(), std::greater<>());
  double cumsum = 0.0;
  double shift = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    cumsum += mags[k];
    const double candidate = (cumsum - radius) / static_cast<double>(k + 1);
    if (mags[k] - candidate > 0.0) shift = candidate;
  }
  Vec out(v.size());
  for (Index j = 0; j < w.size(); ++j) {
    const double a = std::abs(w[j]) - shift;
    out[j] = center[j] + (a > 0.0 ? std::copysign(a, w[j]) : 0.0);
  }
  return out;
}

namespace {

void require_finite(double value, const Vec& grad, int iterate) {
  if (!std::isfinite(value)) throw NumericFailure("non-finite loss value", iterate);
  if (!grad.allFinite()) throw NumericFailure("non-finite loss gradient", iterate);
}

}  // namespace

SolveResult prox_grad_minimize(const ObjectiveHandle& obj, double lambda, const SearchSet& set,
                               const Vec& init, const SolverConfig& cfg) {
  cfg.validate();
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be nonnegative");
  if (init.size() != obj.dim) throw InvalidArgument("init has wrong dimension");
  if (set.kind == SearchSet::Kind::l1_ball && set.center.size() != obj.dim)
    throw InvalidArgument("search set center has wrong dimension");

  SolveResult out;
  auto& diag = out.diagnostics;
  diag.init = init;

  Vec x = init;
  if (!set.contains(x)) {
    x = set.project(x);
    diag.init_projected = true;
  }
  const bool accelerate = cfg.acceleration && set.kind == SearchSet::Kind::full_space;
  const bool backtrack = cfg.step.kind == StepRule::Kind::backtracking;

  auto composite = [&](double smooth, const Vec& v) { return smooth + lambda * v.lpNorm<1>(); };

  const double f_x0 = obj.value(x);
  if (!std::isfinite(f_x0)) throw NumericFailure("non-finite loss value", 0);
  double F_x = composite(f_x0, x);

  Vec x_prev = x;
  Vec y = x;
  bool y_is_x = true;
  double momentum = 1.0;
  double eta = cfg.step.eta;

  int it = 0;
  while (it < cfg.max_iters) {
    ++it;
    auto [f_y, g_y] = obj.evaluate(y);
    require_finite(f_y, g_y, it);

    Vec z;
    double f_z = 0.0;
    for (;;) {
      z = set.project(soft_threshold(y - eta * g_y, eta * lambda));
      f_z = obj.value(z);
      if (!std::isfinite(f_z)) throw NumericFailure("non-finite loss value", it);
      if (!backtrack) break;
      const Vec diff = z - y;
      const double model = f_y + g_y.dot(diff) + diff.squaredNorm() / (2.0 * eta);
      if (f_z <= model + 1e-14 * std::abs(f_y)) break;
      eta *= cfg.step.beta;
      if (eta < 1e-300) throw NumericFailure("step size underflow in backtracking", it);
    }

    const double F_z = composite(f_z, z);
    if (F_z <= F_x) {
      const double rel = (F_x - F_z) / std::max(1.0, std::abs(F_x));
      x_prev = std::move(x);
      x = std::move(z);
      F_x = F_z;
      if (rel < cfg.tol) {
        diag.converged = true;
        break;
      }
      if (accelerate) {
        const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
        const double coef = (momentum - 1.0) / next;
        y = x + coef * (x - x_prev);
        momentum = next;
        y_is_x = coef == 0.0;
      } else {
        y = x;
        y_is_x = true;
      }
    } else if (y_is_x) {
      // A plain step from x failed to descend: x is a fixed point of the scheme.
      diag.converged = true;
      diag.stalled = true;
      break;
    } else {
      momentum = 1.0;
      y = x;
      y_is_x = true;
    }
  }

  diag.iterations = it;
  diag.final_step = eta;
  diag.objective = F_x;
  out.theta = std::move(x);
  return out;
}

}  // namespace plugreg
