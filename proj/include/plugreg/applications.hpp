#pragma once

#include <functional>
#include <string>
#include <vector>

#include "plugreg/dataset.hpp"
#include "plugreg/moment.hpp"
#include "plugreg/nuisance.hpp"

namespace plugreg {

enum class AppId { partially_linear, logistic_te, missing_data, games };

/// Column roles and nuisance roles of one model.
///
///   partially_linear  y, tau, x_*, u_*   nuisance h = E[tau|u], q = E[y|u]
///   logistic_te       y, tau, u_*        nuisance pi = E[tau|u], q, V
///   missing_data      y, d, x_*, u_*     nuisance p = Pr(d=1|z), h
///   games             y, v, x_*          nuisance g = E[v|x], h
struct ApplicationSchema {
  AppId id;
  std::string name;  // CLI spelling: plr, logit-te, missing, games
  std::vector<std::string> columns;
  std::vector<std::string> blocks;
  std::vector<std::string> nuisance_roles;
  bool has_correction;
};

const ApplicationSchema& schema(AppId id);
AppId parse_app(const std::string& name);

/// Throws DataError naming every missing column.
void validate_schema(const Dataset& data, AppId id);

/// Dimension of theta for this dataset.
Index target_dim(const Dataset& data, AppId id);

/// Link G with the derivatives the logistic-TE moment needs and its antiderivative.
struct Link {
  std::function<double(double)> G;
  std::function<double(double)> dG;
  std::function<double(double)> integral;  // d/dt integral(t) = G(t)
};
Link logistic_link();

/// Residual u(y, t) of the missing-data moment with dU/dt and U = antiderivative in t.
struct Residual {
  std::function<double(double y, double t)> u;
  std::function<double(double y, double t)> du_dt;
  std::function<double(double y, double t)> integral;
};
Residual difference_residual();  // u = t - y, integral = (t - y)^2 / 2

/// w = (y, tau), gamma = (h, q): m = t - (y - q), K = (y - q - t)^2 / 2.
SingleIndexMoment partially_linear_moment();
/// w = (y), gamma = (pi, q, V): m = (G(t + q) - y) / V.
SingleIndexMoment logistic_te_moment(const Link& link = logistic_link());
/// w = (y, d), gamma = (p, h): m = d u(y, t) / p.
SingleIndexMoment missing_data_moment(const Residual& res = difference_residual());
/// w = (y, v), gamma = (g, h): m = L(t) - y.
SingleIndexMoment games_moment();

/// Generalized residual and the per-row correction of the models that need one
/// (missing_data: R = d - p; games: R = v - g; both with I = -1).
OrthogonalCorrection correction_for(AppId id, const NuisanceColumns& gamma);

/// Per-observation inputs of the model's loss at the given nuisance values.
LossInputs loss_inputs(AppId id, const Dataset& data, const NuisanceColumns& gamma);

/// The model's second-stage loss. `corrected = false` drops the orthogonal
/// correction (the IPS / 2SLG losses); ignored for models without one.
CompositeLoss build_loss(AppId id, const Dataset& data, const NuisanceColumns& gamma,
                         bool corrected = true, double floor = kDefaultCorrectionFloor);

}  // namespace plugreg
