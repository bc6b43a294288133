#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "plugreg/applications.hpp"
#include "plugreg/dataset.hpp"
#include "plugreg/estimators.hpp"
#include "plugreg/nuisance.hpp"

namespace plugreg {

enum class GamesVariant { dgp1, dgp2 };
enum class Scale { desk, paper };

/// Parameters of the four simulated designs. Field use per model:
///   plr       n, p, k, k_alpha (= k_beta); u ~ N(0, I_p), x = (1, u_1..u_{p-1})
///   logit-te  n, p, k, k_alpha (= k_g), sigma_eta, sigma_u
///   missing   n, p, d_u, k (k_theta), k_alpha (k_u), theta_value, sigma_*
///   games     n, p, k (k_1), k_alpha (k_2), delta1, delta2, sigma_x, variant
struct DGPConfig {
  AppId model = AppId::partially_linear;
  std::size_t n = 2000, p = 100, d_u = 0;
  std::size_t k = 2, k_alpha = 1;
  double sigma_eps = 1.0, sigma_eta = 1.0, sigma_x = 1.0, sigma_u = 1.0;
  double theta_value = 1.0;
  double delta1 = -2.0, delta2 = 0.0;
  GamesVariant variant = GamesVariant::dgp1;
  std::uint64_t seed = 0;
  std::size_t replications = 1;

  void validate() const;
};

DGPConfig preset(AppId model, Scale scale, GamesVariant variant = GamesVariant::dgp1);

/// Simulated sample with its ground truth. `truth` holds the true nuisance
/// values in the model's role layout.
struct SimData {
  Dataset data;
  Vec theta0;
  NuisanceColumns truth;
  double equilibrium_residual = 0.0;  // games: max |g - L(.)| over rows and players
};

SimData gen_partially_linear(const DGPConfig& cfg, std::uint64_t replication);
SimData gen_logistic_te(const DGPConfig& cfg, std::uint64_t replication);
SimData gen_missing_data(const DGPConfig& cfg, std::uint64_t replication);
SimData gen_games(const DGPConfig& cfg, std::uint64_t replication);
SimData generate(const DGPConfig& cfg, std::uint64_t replication);

/// Per-row equilibrium of g1 = L(a1 + g2 d1), g2 = L(a2 + g1 d2) by fixed-point
/// iteration; throws NumericFailure after 1000 sweeps without reaching tol.
std::pair<double, double> games_equilibrium(double a1, double a2, double d1, double d2, double tol = 1e-12);

std::vector<std::string> available_methods(AppId model);
std::vector<std::string> default_methods(AppId model);

struct RunOptions {
  PenaltyRule rule;
  EstimatorConfig estimator;
  bool direct_cv = false;  // 5-fold cross-validated penalty for the Direct baseline
  bool timing = false;     // fill wall_ms; otherwise 0 so output is reproducible
  unsigned threads = 1;
  /// Replaces the injected truth of the oracle methods by g0 + eps (dir - g0).
  std::function<NuisanceColumns(const SimData&)> oracle_direction;
  double oracle_eps = 0.0;
};

/// Caption penalty rule for the model (sqrt(log p / n); games sqrt(log p / 4n)).
PenaltyRule caption_rule(AppId model);

/// One-stage l1-penalized joint regression (plr, logit-te, missing) or 2SLG (games).
EstimationResult baseline_direct(const SimData& sim, AppId model, const RunOptions& opt, std::uint64_t seed,
                                 std::uint64_t replication);

/// Runs `method` on one simulated sample and attaches truth-based metrics.
EstimationResult run_method(const std::string& method, const SimData& sim, AppId model, const RunOptions& opt,
                            std::uint64_t seed, std::uint64_t replication);

struct MethodRecord {
  std::size_t seed = 0;  // replication index
  std::string method;
  bool ok = false;
  std::string error;
  double l1_error = 0.0, l2_error = 0.0, linf_error = 0.0;
  std::size_t support_size = 0;
  double wall_ms = 0.0;
  double lambda_used = 0.0;
  double grad_inf_at_truth = 0.0;  // ||grad L_S(theta0, g-hat)||_inf of the minimized loss
  ConeReport cone;
  double equilibrium_residual = 0.0;
};

struct ReplicationReport {
  DGPConfig config;
  std::vector<std::string> methods;
  std::vector<MethodRecord> records;  // ordered by (seed, method position)
  std::size_t failures = 0;

  std::vector<double> l2(const std::string& method) const;
  std::vector<double> l1(const std::string& method) const;
};

ReplicationReport run_replications(const DGPConfig& cfg, const std::vector<std::string>& methods,
                                   const RunOptions& opt);

/// seed,method,l1_error,l2_error,support_size,wall_ms with %.17g numbers.
void write_csv(const ReplicationReport& rep, std::ostream& os);
std::string to_csv(const ReplicationReport& rep);

/// Medians, quantiles and pairwise differences of l2 errors per method.
nlohmann::json summary_json(const ReplicationReport& rep);

double median(std::vector<double> v);
double quantile(std::vector<double> v, double q);

/// Runs one report per value of `key` (any DGPConfig numeric field name).
std::vector<ReplicationReport> sweep(const DGPConfig& base, const std::string& key, const std::vector<double>& values,
                                     const std::vector<std::string>& methods, const RunOptions& opt);

/// Design used by the diagnostics: the model's desk preset with n = n_mc and
/// p (and d_u) capped at 10.
DGPConfig diagnostic_config(AppId model, std::size_t n_mc, std::uint64_t seed);

/// Nuisance direction g0 + dg for the orthogonality diagnostics:
///   plr       dh = dq = 1
///   logit-te  dq = 1
///   missing   dp = p0 (1 - p0) / 2, dh = 10 x_1 (the scale of h0)
///   games     dg = g0 (1 - g0) / 2, dh = 1
NuisanceColumns perturbation_direction(AppId model, const SimData& sim);

/// Orthogonality slope of the model's loss (naive: correction dropped) on one
/// sample of n_mc rows.
OrthogonalityReport orthogonality_study(AppId model, bool naive, std::size_t n_mc, std::uint64_t seed,
                                        const std::vector<double>& r_grid = {0.05, 0.1, 0.2, 0.4});

/// Largest relative central-difference gradient error of the model's loss over
/// `probes` random (theta, sample) draws with perturbed nuisance values.
double gradient_fd_check(AppId model, int probes, std::uint64_t seed);

/// Sets a DGPConfig field from its textual key; throws ConfigError on unknown keys.
void set_dgp_field(DGPConfig& cfg, const std::string& key, const std::string& value);

}  // namespace plugreg
