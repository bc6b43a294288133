#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "plugreg/applications.hpp"
#include "plugreg/dataset.hpp"
#include "plugreg/nuisance.hpp"
#include "plugreg/solver.hpp"

namespace plugreg {

/// Random partition of rows 0..n-1 into folds whose sizes differ by at most one.
struct FoldPlan {
  int n_folds = 0;
  std::vector<int> assignment;
  std::uint64_t seed = 0;

  std::vector<std::size_t> members(int fold) const;
  std::vector<std::size_t> complement(int fold) const;
  std::vector<std::size_t> members(std::initializer_list<int> folds) const;
};

FoldPlan make_folds(std::size_t n, int n_folds, std::uint64_t seed, std::uint64_t replication = 0);

struct LassoFit {
  Vec coef;
  double objective = 0.0;
  std::vector<Index> support;
  SolverDiagnostics diagnostics;
};

/// argmin (1/n) sum_i w_i (y_i - x_i'a)^2 + lambda ||a||_1 (w = 1 when empty).
LassoFit lasso_linear(const Mat& X, const Vec& y, double lambda, const SolverConfig& cfg = {},
                      const Vec& weights = Vec());

/// argmin (1/n) sum_i softplus(x_i'a) - v_i x_i'a + lambda ||a||_1, v binary.
LassoFit lasso_logistic(const Mat& X, const Vec& v, double lambda, const SolverConfig& cfg = {});

enum class Family { linear, logistic };

/// 2(B^2 + sigma) sqrt(log(2d/delta)/n) for linear and
/// 2(B^2/4 + B/4) sqrt(log(2d/delta)/n) for logistic models.
double first_stage_lambda(std::size_t n, std::size_t d, double delta, double B_bar, double sigma_bar,
                          Family family);

/// Algorithm 1 with an aggressive penalty on an uncorrected, convex loss.
Vec preliminary_theta(const CompositeLoss& uncorrected_loss, double lambda_fs, const SolverConfig& cfg = {});

struct FirstStageConfig {
  enum class Rule { caption, theorem };
  Rule rule = Rule::caption;  // caption: sqrt(log d / (divisor n)); theorem: first_stage_lambda
  double caption_divisor = 1.0;
  double scale = 1.0;         // multiplies the first-stage penalty
  double delta = 0.05;
  double B_bar = 1.0;
  double sigma_bar = 1.0;
  double propensity_clip = 0.01;  // p-hat clipped to [clip, 1 - clip]
  double v_floor = 1e-3;          // V-hat floor for the logistic-TE weights
  int min_rows_per_role = 10;       // each training fold needs >= this many rows per nuisance role
  bool correction_nuisance = true;  // false: skip the fits only the correction uses (h set to 0)
  SolverConfig solver;

  double lambda(std::size_t n, std::size_t d, Family family) const;
};

/// One set of nuisance models trained on `train_folds`, able to evaluate any rows.
struct NuisanceModel {
  std::vector<int> train_folds;
  std::map<std::string, Vec> params;
  std::function<NuisanceColumns(const Dataset&)> predict;
};

/// Cross-fitted nuisance values. `columns` covers every row of the data; row i
/// holds the prediction of models[source[i]] (NaN and source -1 when the row was
/// not evaluated).
struct NuisanceFit {
  NuisanceColumns columns;
  std::vector<NuisanceModel> models;
  std::vector<int> source;
  FoldPlan folds;
};

/// Trains the model's nuisances on the rows of `train_folds`.
NuisanceModel fit_nuisance_model(const Dataset& data, AppId app, const FoldPlan& folds,
                                 const std::vector<int>& train_folds, const FirstStageConfig& cfg);

/// For every entry (train folds, eval folds) trains on the former and fills the latter.
NuisanceFit build_nuisance(const Dataset& data, AppId app, const FoldPlan& folds,
                           const std::vector<std::pair<std::vector<int>, std::vector<int>>>& plan,
                           const FirstStageConfig& cfg);

/// Two-fold swap: each fold evaluated by the model trained on the other.
NuisanceFit cross_fit_nuisance(const Dataset& data, AppId app, const FoldPlan& folds,
                               const FirstStageConfig& cfg);

/// First-stage rate estimate: RMS over rows of the difference between the
/// predictions of two models trained on disjoint folds, divided by sqrt(2)
/// (largest over the nuisance roles).
double estimate_g_n(const Dataset& data, const NuisanceModel& a, const NuisanceModel& b);

/// Polynomial features (x, u, x*u, u^2, x*u^2) used for the missing-data q-regression.
Mat missing_data_features(const Mat& x, const Mat& u);

}  // namespace plugreg
