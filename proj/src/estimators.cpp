#include "plugreg/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "plugreg/errors.hpp"

namespace plugreg {

PenaltyPlan make_penalty_plan(std::size_t n, std::size_t p, std::size_t k_guess, double delta, double U,
                              double g_n, double gamma_guess, double R0) {
  if (n < 1 || p < 1 || k_guess < 1) throw InvalidArgument("penalty plan needs n, p, k >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  if (!(U > 0.0) || !(gamma_guess > 0.0)) throw InvalidArgument("U and gamma must be positive");
  if (!(g_n >= 0.0) || !(R0 >= 0.0)) throw InvalidArgument("g_n and R0 must be nonnegative");

  PenaltyPlan pl;
  pl.n = n;
  pl.p = p;
  pl.k_guess = k_guess;
  pl.delta = delta;
  pl.U = U;
  pl.g_n = g_n;
  pl.gamma_guess = gamma_guess;

  const double nn = static_cast<double>(n), pp = static_cast<double>(p), kk = static_cast<double>(k_guess);
  const double log2p = std::log(2.0 * pp / delta);
  const double U2 = U * U, U3 = U2 * U, U5 = U3 * U2;
  pl.epsilon = U2 * std::sqrt(log2p / (2.0 * nn));
  pl.B = 4.0 * U3;
  pl.L = 3.0 * U3;
  pl.tau = 4.0 * U5 * kk * std::sqrt(2.0 * std::log(pp) / nn) + U3 * std::sqrt(4.0 * log2p / nn);
  pl.R0 = R0;

  const double base = pl.epsilon + pl.B * g_n * g_n;
  const double drift = pl.tau + pl.L * g_n;
  pl.lambda_main = 2.0 * base;
  pl.lambda_pre = 2.0 * (base + drift * R0);
  pl.R1 = 8.0 * kk / gamma_guess * (base + drift * R0);
  pl.lambda_fin = 2.0 * (base + drift * pl.R1);
  return pl;
}

std::size_t default_k_guess(std::size_t n, std::size_t p) {
  const double lp = std::log(std::max<double>(static_cast<double>(p), 2.0));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n)) / lp)));
}

PenaltyPlan PenaltyRule::plan(std::size_t n, std::size_t p, double g_n_estimate, double R0_default) const {
  const double g = g_n.value_or(g_n_estimate);
  PenaltyPlan pl = make_penalty_plan(n, p, k_guess.value_or(default_k_guess(n, p)), delta, U, g, gamma_guess,
                                     R0.value_or(R0_default));
  if (R1) {
    if (!(*R1 > 0.0)) throw ConfigError("R1 must be positive");
    pl.R1 = *R1;
    pl.lambda_fin = 2.0 * (pl.epsilon + pl.B * g * g + (pl.tau + pl.L * g) * pl.R1);
  }
  double lam = 0.0;
  switch (kind) {
    case Kind::theorem:
      return pl;
    case Kind::caption:
      if (!(caption_divisor > 0.0)) throw ConfigError("caption divisor must be positive");
      lam = std::sqrt(std::log(std::max<double>(static_cast<double>(p), 2.0)) /
                      (caption_divisor * static_cast<double>(n)));
      break;
    case Kind::manual:
      if (!(manual >= 0.0)) throw ConfigError("manual lambda must be nonnegative");
      lam = manual;
      break;
  }
  pl.lambda_main = pl.lambda_pre = pl.lambda_fin = lam;
  return pl;
}

void set_support(EstimationResult& r) {
  r.support.clear();
  for (Index j = 0; j < r.theta_hat.size(); ++j)
    if (std::abs(r.theta_hat[j]) > kSupportThreshold) r.support.push_back(j);
}

void attach_truth(EstimationResult& r, const Vec& theta0) {
  if (theta0.size() != r.theta_hat.size()) throw InvalidArgument("truth has wrong dimension");
  const Vec nu = r.theta_hat - theta0;
  r.l1_error = nu.lpNorm<1>();
  r.l2_error = nu.norm();
  r.linf_error = nu.lpNorm<Eigen::Infinity>();
  ConeReport c;
  for (Index j = 0; j < nu.size(); ++j) (theta0[j] != 0.0 ? c.on_support : c.off_support) += std::abs(nu[j]);
  r.cone = c;
}

namespace {

nlohmann::json diag_json(const SolverDiagnostics& d) {
  return {{"iterations", d.iterations},
          {"final_step", d.final_step},
          {"converged", d.converged},
          {"init_projected", d.init_projected},
          {"stalled", d.stalled},
          {"objective", d.objective}};
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

nlohmann::json to_json(const PenaltyPlan& pl) {
  return {{"n", pl.n},           {"p", pl.p},
          {"k_guess", pl.k_guess}, {"delta", pl.delta},
          {"U", pl.U},           {"g_n", pl.g_n},
          {"gamma_guess", pl.gamma_guess}, {"epsilon", pl.epsilon},
          {"B", pl.B},           {"L", pl.L},
          {"tau", pl.tau},       {"R0", pl.R0},
          {"R1", pl.R1},         {"lambda_main", pl.lambda_main},
          {"lambda_pre", pl.lambda_pre}, {"lambda_fin", pl.lambda_fin}};
}

nlohmann::json to_json(const EstimationResult& r) {
  nlohmann::json j;
  j["theta_hat"] = to_std(r.theta_hat);
  j["support"] = r.support;
  j["lambda_used"] = r.lambda_used;
  j["diagnostics"] = diag_json(r.diagnostics);
  nlohmann::json metrics = nlohmann::json::object();
  if (r.l1_error) metrics["l1_error"] = *r.l1_error;
  if (r.l2_error) metrics["l2_error"] = *r.l2_error;
  if (r.linf_error) metrics["linf_error"] = *r.linf_error;
  if (r.cone) metrics["cone"] = {{"off_support_l1", r.cone->off_support}, {"on_support_l1", r.cone->on_support}};
  j["metrics"] = metrics;
  if (r.theta_tilde) j["theta_tilde"] = to_std(*r.theta_tilde);
  if (r.preliminary) j["preliminary_diagnostics"] = diag_json(*r.preliminary);
  if (r.plan) j["penalty_plan"] = to_json(*r.plan);
  return j;
}

EstimationResult second_stage(const CompositeLoss& loss, double lambda, const SearchSet& set, const Vec& init,
                              const SolverConfig& cfg) {
  SolveResult res = prox_grad_minimize(loss.objective(), lambda, set, init, cfg);
  EstimationResult r;
  r.theta_hat = std::move(res.theta);
  r.diagnostics = std::move(res.diagnostics);
  r.lambda_used = lambda;
  r.loss = std::make_shared<const CompositeLoss>(loss);
  set_support(r);
  return r;
}

EstimationResult algorithm1(const CompositeLoss& loss, const PenaltyPlan& plan, const SolverConfig& cfg) {
  if (!loss.moment().monotone_in_t)
    throw ConfigError("Algorithm 1 needs a convex loss (monotone moment); use Algorithm 2");
  EstimationResult r = second_stage(loss, plan.lambda_main, SearchSet::full(), Vec::Zero(loss.dim()), cfg);
  r.plan = plan;
  return r;
}

EstimationResult algorithm2(const CompositeLoss& pre_loss, const CompositeLoss& fin_loss, const PenaltyPlan& plan,
                            const SolverConfig& cfg) {
  if (!(plan.R1 > 0.0)) throw ConfigError("Algorithm 2 needs R1 > 0");
  if (pre_loss.dim() != fin_loss.dim()) throw InvalidArgument("stage losses differ in dimension");
  const Index p = fin_loss.dim();
  const EstimationResult pre =
      second_stage(pre_loss, plan.lambda_pre, SearchSet::l1_ball(Vec::Zero(p), plan.R0), Vec::Zero(p), cfg);
  EstimationResult r =
      second_stage(fin_loss, plan.lambda_fin, SearchSet::l1_ball(pre.theta_hat, plan.R1), pre.theta_hat, cfg);
  r.theta_tilde = pre.theta_hat;
  r.preliminary = pre.diagnostics;
  r.plan = plan;
  return r;
}

CompositeLoss fold_loss(const Dataset& data, AppId app, const NuisanceFit& fit, const std::vector<std::size_t>& rows,
                        const EstimatorConfig& cfg) {
  for (std::size_t i : rows) {
    if (i >= fit.source.size() || fit.source[i] < 0) throw DataError("no nuisance evaluation for row", i);
    const auto& train = fit.models[static_cast<std::size_t>(fit.source[i])].train_folds;
    if (std::find(train.begin(), train.end(), fit.folds.assignment[i]) != train.end())
      throw DataError("nuisance for row was trained on its own fold", i);
  }
  return build_loss(app, data.subset(rows), fit.columns.subset(rows), cfg.corrected, cfg.correction_floor);
}

namespace {

double default_R0(const NuisanceModel& m) {
  const auto it = m.params.find("theta_tilde");
  const double norm = it == m.params.end() ? 0.0 : it->second.lpNorm<1>();
  return 2.0 * std::max(1.0, norm);
}

void require_folds(const FoldPlan& folds, const Dataset& data, int n_folds) {
  if (folds.n_folds != n_folds)
    throw ConfigError("expected " + std::to_string(n_folds) + " folds, got " + std::to_string(folds.n_folds));
  if (folds.assignment.size() != data.rows()) throw ConfigError("fold plan does not match the data");
}

}  // namespace

EstimationResult algorithm1(const Dataset& data, AppId app, const PenaltyRule& rule, const FoldPlan& folds,
                            const EstimatorConfig& cfg) {
  require_folds(folds, data, 2);
  const NuisanceFit fit = build_nuisance(data, app, folds, {{{1}, {0}}}, cfg.first_stage);
  double g_n = 0.0;
  if (rule.needs_g_n())
    g_n = estimate_g_n(data, fit.models[0], fit_nuisance_model(data, app, folds, {0}, cfg.first_stage));
  const auto rows = folds.members(0);
  const CompositeLoss loss = fold_loss(data, app, fit, rows, cfg);
  const PenaltyPlan plan = rule.plan(rows.size(), static_cast<std::size_t>(loss.dim()), g_n, default_R0(fit.models[0]));
  return algorithm1(loss, plan, cfg.solver);
}

EstimationResult algorithm2(const Dataset& data, AppId app, const PenaltyRule& rule, const FoldPlan& folds,
                            const EstimatorConfig& cfg) {
  require_folds(folds, data, 3);
  const NuisanceFit fit = build_nuisance(data, app, folds, {{{0}, {1, 2}}}, cfg.first_stage);
  double g_n = 0.0;
  if (rule.needs_g_n())
    g_n = estimate_g_n(data, fit.models[0], fit_nuisance_model(data, app, folds, {1}, cfg.first_stage));
  const CompositeLoss pre = fold_loss(data, app, fit, folds.members(1), cfg);
  const CompositeLoss fin = fold_loss(data, app, fit, folds.members(2), cfg);
  const PenaltyPlan plan = rule.plan(static_cast<std::size_t>(fin.rows()), static_cast<std::size_t>(fin.dim()), g_n,
                                     default_R0(fit.models[0]));
  return algorithm2(pre, fin, plan, cfg.solver);
}

EstimationResult cross_fit_estimate(const Dataset& data, AppId app, const PenaltyRule& rule, const FoldPlan& folds,
                                    const EstimatorConfig& cfg) {
  require_folds(folds, data, 2);
  const NuisanceFit fit = cross_fit_nuisance(data, app, folds, cfg.first_stage);
  const double g_n = rule.needs_g_n() ? estimate_g_n(data, fit.models[0], fit.models[1]) : 0.0;
  std::vector<std::size_t> rows(data.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const CompositeLoss loss = fold_loss(data, app, fit, rows, cfg);
  const PenaltyPlan plan = rule.plan(rows.size(), static_cast<std::size_t>(loss.dim()), g_n,
                                     std::max(default_R0(fit.models[0]), default_R0(fit.models[1])));
  return algorithm1(loss, plan, cfg.solver);
}

EstimationResult plug_in_estimate(const Dataset& data, AppId app, const NuisanceColumns& gamma,
                                  const PenaltyRule& rule, const EstimatorConfig& cfg) {
  const CompositeLoss loss = build_loss(app, data, gamma, cfg.corrected, cfg.correction_floor);
  const PenaltyPlan plan = rule.plan(data.rows(), static_cast<std::size_t>(loss.dim()), 0.0, 2.0);
  return algorithm1(loss, plan, cfg.solver);
}

}  // namespace plugreg
