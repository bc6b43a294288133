#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "plugreg/applications.hpp"
#include "plugreg/first_stage.hpp"
#include "plugreg/moment.hpp"
#include "plugreg/solver.hpp"

namespace plugreg {

/// Penalty levels and search radii. Every lambda is twice the right-hand side
/// of its lower bound.
struct PenaltyPlan {
  std::size_t n = 0, p = 0, k_guess = 0;
  double delta = 0.05;
  double U = 1.0;
  double g_n = 0.0;
  double gamma_guess = 1.0;

  double epsilon = 0.0;  // U^2 sqrt(log(2p/delta) / (2n))
  double B = 0.0;        // 4 U^3
  double L = 0.0;        // 3 U^3
  double tau = 0.0;      // 4 U^5 k sqrt(2 log p / n) + U^3 sqrt(4 log(2p/delta) / n)
  double R0 = 0.0;
  double R1 = 0.0;
  double lambda_main = 0.0;
  double lambda_pre = 0.0;
  double lambda_fin = 0.0;
};

/// R1 is derived as (8k/gamma)(eps + B g^2 + (tau + L g) R0).
PenaltyPlan make_penalty_plan(std::size_t n, std::size_t p, std::size_t k_guess, double delta, double U,
                              double g_n, double gamma_guess, double R0);

/// ceil(sqrt(n) / log p).
std::size_t default_k_guess(std::size_t n, std::size_t p);

struct ConeReport {
  double off_support = 0.0;  // ||nu_{T^c}||_1
  double on_support = 0.0;   // ||nu_T||_1
  bool in_cone(double slack = 1e-6) const { return off_support <= 3.0 * on_support + slack; }
};

inline constexpr double kSupportThreshold = 1e-10;

struct EstimationResult {
  Vec theta_hat;
  std::vector<Index> support;
  double lambda_used = 0.0;
  SolverDiagnostics diagnostics;
  std::optional<double> l1_error, l2_error, linf_error;
  std::optional<ConeReport> cone;
  // Algorithm 2 only.
  std::optional<Vec> theta_tilde;
  std::optional<SolverDiagnostics> preliminary;
  std::optional<PenaltyPlan> plan;
  std::shared_ptr<const CompositeLoss> loss;  // the loss of the final solve
};

/// Fills support from theta_hat.
void set_support(EstimationResult& r);

/// Error metrics and cone report against the truth (support T = {j : theta0_j != 0}).
void attach_truth(EstimationResult& r, const Vec& theta0);

nlohmann::json to_json(const EstimationResult& r);
nlohmann::json to_json(const PenaltyPlan& plan);

struct EstimatorConfig {
  SolverConfig solver;
  FirstStageConfig first_stage;
  bool corrected = true;  // false: drop the orthogonal correction (IPS / 2SLG)
  double correction_floor = kDefaultCorrectionFloor;
};

/// argmin over `set` of loss + lambda ||.||_1 from `init`.
EstimationResult second_stage(const CompositeLoss& loss, double lambda, const SearchSet& set, const Vec& init,
                              const SolverConfig& cfg);

/// Algorithm 1 on prepared losses: full-space solve from 0 with lambda_main.
EstimationResult algorithm1(const CompositeLoss& loss, const PenaltyPlan& plan, const SolverConfig& cfg);

/// Algorithm 2 on prepared losses: preliminary solve on ||theta||_1 <= R0 with
/// lambda_pre, then ||theta - theta_tilde||_1 <= R1 with lambda_fin from theta_tilde.
EstimationResult algorithm2(const CompositeLoss& pre_loss, const CompositeLoss& fin_loss, const PenaltyPlan& plan,
                            const SolverConfig& cfg);

/// How the data-level estimators pick their penalties once the sample sizes
/// and the first-stage fit are known.
struct PenaltyRule {
  enum class Kind { theorem, caption, manual };
  Kind kind = Kind::caption;
  double manual = 0.0;          // lambda for Kind::manual
  double caption_divisor = 1.0; // caption: sqrt(log p / (divisor * n))
  double U = 1.0;
  double delta = 0.05;
  double gamma_guess = 1.0;
  std::optional<double> g_n;            // estimated from two first-stage fits when unset
  std::optional<std::size_t> k_guess;   // default_k_guess when unset
  std::optional<double> R0;             // 2 max(1, ||theta_tilde||_1) of the first stage when unset
  std::optional<double> R1;             // derived when unset

  bool needs_g_n() const { return kind == Kind::theorem && !g_n; }

  /// Theorem plan; for caption/manual rules every lambda is replaced by the rule's value.
  PenaltyPlan plan(std::size_t n, std::size_t p, double g_n_estimate, double R0_default) const;
};

/// Algorithm 1 on data: nuisance trained on fold 1, loss and solve on fold 0.
EstimationResult algorithm1(const Dataset& data, AppId app, const PenaltyRule& rule, const FoldPlan& folds,
                            const EstimatorConfig& cfg);

/// Algorithm 2 on data with three folds: nuisance on fold 0, preliminary step on
/// fold 1, final step on fold 2.
EstimationResult algorithm2(const Dataset& data, AppId app, const PenaltyRule& rule, const FoldPlan& folds,
                            const EstimatorConfig& cfg);

/// Two-fold cross-fitting with one pooled second-stage solve.
EstimationResult cross_fit_estimate(const Dataset& data, AppId app, const PenaltyRule& rule, const FoldPlan& folds,
                                    const EstimatorConfig& cfg);

/// Second stage on the full sample with nuisance values supplied directly
/// (oracle injection or user-provided columns).
EstimationResult plug_in_estimate(const Dataset& data, AppId app, const NuisanceColumns& gamma,
                                  const PenaltyRule& rule, const EstimatorConfig& cfg);

/// Second-stage loss on `rows` with nuisance values from `fit`.
CompositeLoss fold_loss(const Dataset& data, AppId app, const NuisanceFit& fit,
                        const std::vector<std::size_t>& rows, const EstimatorConfig& cfg);

}  // namespace plugreg
