#include "plugreg/applications.hpp"

#include <array>

#include "plugreg/errors.hpp"

namespace plugreg {

namespace {

const std::array<ApplicationSchema, 4> kSchemas = {{
    {AppId::partially_linear, "plr", {"y", "tau"}, {"x", "u"}, {"h", "q"}, false},
    {AppId::logistic_te, "logit-te", {"y", "tau"}, {"u"}, {"pi", "q", "V"}, false},
    {AppId::missing_data, "missing", {"y", "d"}, {"x", "u"}, {"p", "h"}, true},
    {AppId::games, "games", {"y", "v"}, {"x"}, {"g", "h"}, true},
}};

RowMat stack(const Dataset& data, std::initializer_list<const char*> names) {
  RowMat out(static_cast<Index>(data.rows()), static_cast<Index>(names.size()));
  Index j = 0;
  for (const char* name : names) out.col(j++) = data.col(name);
  return out;
}

RowMat gamma_matrix(AppId id, const NuisanceColumns& gamma) {
  const auto& roles = schema(id).nuisance_roles;
  RowMat out(gamma.rows(), static_cast<Index>(roles.size()));
  for (std::size_t k = 0; k < roles.size(); ++k) out.col(static_cast<Index>(k)) = gamma.col(roles[k]);
  return out;
}

}  // namespace

const ApplicationSchema& schema(AppId id) { return kSchemas[static_cast<std::size_t>(id)]; }

AppId parse_app(const std::string& name) {
  for (const auto& s : kSchemas)
    if (s.name == name) return s.id;
  throw ConfigError("unknown model '" + name + "' (expected plr, logit-te, missing or games)");
}

void validate_schema(const Dataset& data, AppId id) {
  const auto& s = schema(id);
  std::string missing;
  for (const auto& c : s.columns)
    if (!data.has(c)) missing += (missing.empty() ? "" : ", ") + c;
  for (const auto& b : s.blocks)
    if (data.block_width(b) == 0) missing += (missing.empty() ? "" : ", ") + b + "_1..";
  if (!missing.empty())
    throw DataError("dataset does not match model '" + s.name + "': missing columns " + missing);
}

Index target_dim(const Dataset& data, AppId id) {
  switch (id) {
    case AppId::partially_linear:
    case AppId::missing_data:
      return static_cast<Index>(data.block_width("x"));
    case AppId::logistic_te:
      return static_cast<Index>(data.block_width("u"));
    case AppId::games:
      return static_cast<Index>(data.block_width("x")) + 1;
  }
  return 0;
}

Link logistic_link() { return {logistic, logistic_deriv, softplus}; }

Residual difference_residual() {
  return {[](double y, double t) { return t - y; }, [](double, double) { return 1.0; },
          [](double y, double t) { return 0.5 * (t - y) * (t - y); }};
}

SingleIndexMoment partially_linear_moment() {
  SingleIndexMoment mo;
  mo.m = [](Row w, double t, Row g) { return t - (w[0] - g[1]); };
  mo.dm_dt = [](Row, double, Row) { return 1.0; };
  mo.K = [](Row w, double t, Row g) {
    const double r = w[0] - g[1] - t;
    return 0.5 * r * r;
  };
  mo.monotone_in_t = true;
  return mo;
}

SingleIndexMoment logistic_te_moment(const Link& link) {
  SingleIndexMoment mo;
  mo.m = [G = link.G](Row w, double t, Row g) { return (G(t + g[1]) - w[0]) / g[2]; };
  mo.dm_dt = [dG = link.dG](Row, double t, Row g) { return dG(t + g[1]) / g[2]; };
  // Antiderivative in t of m, shifted so the standard negative log-likelihood
  // appears when G is logistic: softplus(s) - y s with s = t + q.
  mo.K = [I = link.integral](Row w, double t, Row g) {
    const double s = t + g[1];
    return (I(s) - w[0] * s) / g[2];
  };
  mo.monotone_in_t = true;
  return mo;
}

SingleIndexMoment missing_data_moment(const Residual& res) {
  SingleIndexMoment mo;
  mo.m = [u = res.u](Row w, double t, Row g) { return w[1] * u(w[0], t) / g[0]; };
  mo.dm_dt = [du = res.du_dt](Row w, double t, Row g) { return w[1] * du(w[0], t) / g[0]; };
  mo.K = [U = res.integral](Row w, double t, Row g) { return w[1] * U(w[0], t) / g[0]; };
  mo.monotone_in_t = true;
  return mo;
}

SingleIndexMoment games_moment() {
  SingleIndexMoment mo;
  mo.m = [](Row w, double t, Row) { return logistic(t) - w[0]; };
  mo.dm_dt = [](Row, double t, Row) { return logistic_deriv(t); };
  mo.K = [](Row w, double t, Row) { return softplus(t) - w[0] * t; };
  mo.monotone_in_t = true;
  return mo;
}

OrthogonalCorrection correction_for(AppId id, const NuisanceColumns& gamma) {
  OrthogonalCorrection c;
  c.h = gamma.col("h");
  c.I = Vec::Constant(gamma.rows(), -1.0);
  switch (id) {
    case AppId::missing_data:
      c.R = [](Row w, Row g) { return w[1] - g[0]; };
      break;
    case AppId::games:
      c.R = [](Row w, Row g) { return w[1] - g[0]; };
      break;
    default:
      throw InvalidArgument("model '" + schema(id).name + "' has no orthogonal correction");
  }
  return c;
}

LossInputs loss_inputs(AppId id, const Dataset& data, const NuisanceColumns& gamma) {
  validate_schema(data, id);
  if (gamma.rows() != static_cast<Index>(data.rows()))
    throw DataError("nuisance table covers " + std::to_string(gamma.rows()) + " rows, data has " +
                    std::to_string(data.rows()));
  LossInputs in;
  in.gamma = gamma_matrix(id, gamma);
  switch (id) {
    case AppId::partially_linear: {
      in.w = stack(data, {"y", "tau"});
      const Vec resid = data.col("tau") - gamma.col("h");
      in.lambda = resid.asDiagonal() * data.block("x");
      break;
    }
    case AppId::logistic_te: {
      in.w = stack(data, {"y"});
      const Vec V = gamma.col("V");
      for (Index i = 0; i < V.size(); ++i)
        if (!(V[i] > 0.0)) throw DataError("V must be positive", static_cast<std::size_t>(i));
      const Vec resid = data.col("tau") - gamma.col("pi");
      in.lambda = resid.asDiagonal() * data.block("u");
      break;
    }
    case AppId::missing_data: {
      in.w = stack(data, {"y", "d"});
      const Vec p = gamma.col("p");
      for (Index i = 0; i < p.size(); ++i)
        if (!(p[i] > 0.0)) throw DataError("propensity must be positive", static_cast<std::size_t>(i));
      in.lambda = data.block("x");
      break;
    }
    case AppId::games: {
      in.w = stack(data, {"y", "v"});
      const Mat x = data.block("x");
      in.lambda.resize(x.rows(), x.cols() + 1);
      in.lambda.leftCols(x.cols()) = x;
      in.lambda.col(x.cols()) = gamma.col("g");
      break;
    }
  }
  return in;
}

CompositeLoss build_loss(AppId id, const Dataset& data, const NuisanceColumns& gamma, bool corrected,
                         double floor) {
  LossInputs in = loss_inputs(id, data, gamma);
  switch (id) {
    case AppId::partially_linear:
      return CompositeLoss(partially_linear_moment(), std::move(in));
    case AppId::logistic_te:
      return CompositeLoss(logistic_te_moment(), std::move(in));
    case AppId::missing_data:
      if (!corrected) return CompositeLoss(missing_data_moment(), std::move(in));
      return orthogonalize(missing_data_moment(), correction_for(id, gamma), std::move(in), floor);
    case AppId::games:
      if (!corrected) return CompositeLoss(games_moment(), std::move(in));
      return orthogonalize(games_moment(), correction_for(id, gamma), std::move(in), floor);
  }
  throw InvalidArgument("unknown model");
}

}  // namespace plugreg
