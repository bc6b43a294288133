#include "plugreg/first_stage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plugreg/errors.hpp"
#include "plugreg/rng.hpp"

namespace plugreg {

std::vector<std::size_t> FoldPlan::members(int fold) const { return members({fold}); }

std::vector<std::size_t> FoldPlan::members(std::initializer_list<int> folds) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (std::find(folds.begin(), folds.end(), assignment[i]) != folds.end()) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::complement(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] != fold) out.push_back(i);
  return out;
}

FoldPlan make_folds(std::size_t n, int n_folds, std::uint64_t seed, std::uint64_t replication) {
  if (n_folds < 2) throw ConfigError("need at least two folds");
  if (n < static_cast<std::size_t>(n_folds)) throw ConfigError("fewer rows than folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterRng rng(seed, replication, Stream::folds);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  FoldPlan plan{n_folds, std::vector<int>(n), seed};
  for (std::size_t k = 0; k < n; ++k) plan.assignment[perm[k]] = static_cast<int>(k % n_folds);
  return plan;
}

namespace {

void require_finite_inputs(const Mat& X, const Vec& y) {
  if (X.rows() != y.size()) throw DataError("design and response lengths differ");
  for (Index i = 0; i < X.rows(); ++i)
    if (!X.row(i).allFinite() || !std::isfinite(y[i]))
      throw DataError("non-finite first-stage input", static_cast<std::size_t>(i));
}

LassoFit finish(SolveResult res) {
  LassoFit fit;
  fit.coef = std::move(res.theta);
  fit.objective = res.diagnostics.objective;
  fit.diagnostics = std::move(res.diagnostics);
  for (Index j = 0; j < fit.coef.size(); ++j)
    if (std::abs(fit.coef[j]) > 1e-10) fit.support.push_back(j);
  return fit;
}

std::vector<std::size_t> rows_where(const Vec& v, double value, const std::vector<std::size_t>& among) {
  std::vector<std::size_t> out;
  for (std::size_t i : among)
    if (v[static_cast<Index>(i)] == value) out.push_back(i);
  return out;
}

Mat take_rows(const Mat& m, const std::vector<std::size_t>& rows) {
  Mat out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(static_cast<Index>(rows[k]));
  return out;
}

Vec take(const Vec& v, const std::vector<std::size_t>& rows) {
  Vec out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Index>(k)] = v[static_cast<Index>(rows[k])];
  return out;
}

Vec logistic_of(const Vec& t) { return t.unaryExpr([](double s) { return logistic(s); }); }

Mat hcat(const Mat& a, const Mat& b) {
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

LassoFit lasso_linear(const Mat& X, const Vec& y, double lambda, const SolverConfig& cfg, const Vec& weights) {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be nonnegative");
  require_finite_inputs(X, y);
  if (weights.size() != 0 && weights.size() != y.size()) throw DataError("weights have wrong length");
  const double n = static_cast<double>(X.rows());
  const Vec w = weights.size() ? weights : Vec::Ones(y.size());

  ObjectiveHandle obj;
  obj.dim = X.cols();
  obj.value = [&](const Vec& a) {
    const Vec r = y - X * a;
    const Vec terms = w.cwiseProduct(r.cwiseAbs2());
    return pairwise_mean(as_span(terms));
  };
  obj.grad = [&](const Vec& a) {
    const Vec r = y - X * a;
    return Vec(-2.0 / n * (X.transpose() * w.cwiseProduct(r)));
  };
  obj.value_grad = [&](const Vec& a) {
    const Vec r = y - X * a;
    const Vec wr = w.cwiseProduct(r);
    const Vec terms = wr.cwiseProduct(r);
    return std::pair<double, Vec>{pairwise_mean(as_span(terms)), -2.0 / n * (X.transpose() * wr)};
  };
  return finish(prox_grad_minimize(obj, lambda, SearchSet::full(), Vec::Zero(X.cols()), cfg));
}

LassoFit lasso_logistic(const Mat& X, const Vec& v, double lambda, const SolverConfig& cfg) {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be nonnegative");
  require_finite_inputs(X, v);
  for (Index i = 0; i < v.size(); ++i)
    if (v[i] != 0.0 && v[i] != 1.0) throw DataError("logistic response must be 0 or 1", static_cast<std::size_t>(i));
  const double n = static_cast<double>(X.rows());

  auto value_at = [&](const Vec& t) {
    Vec terms(t.size());
    for (Index i = 0; i < t.size(); ++i) terms[i] = softplus(t[i]) - v[i] * t[i];
    return pairwise_mean(as_span(terms));
  };
  ObjectiveHandle obj;
  obj.dim = X.cols();
  obj.value = [&](const Vec& a) { return value_at(X * a); };
  obj.grad = [&](const Vec& a) { return Vec(X.transpose() * (logistic_of(X * a) - v) / n); };
  obj.value_grad = [&](const Vec& a) {
    const Vec t = X * a;
    return std::pair<double, Vec>{value_at(t), X.transpose() * (logistic_of(t) - v) / n};
  };
  return finish(prox_grad_minimize(obj, lambda, SearchSet::full(), Vec::Zero(X.cols()), cfg));
}

double first_stage_lambda(std::size_t n, std::size_t d, double delta, double B_bar, double sigma_bar,
                          Family family) {
  if (n < 1 || d < 1) throw InvalidArgument("first_stage_lambda needs n, d >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  const double root = std::sqrt(std::log(2.0 * static_cast<double>(d) / delta) / static_cast<double>(n));
  const double coef = family == Family::linear ? B_bar * B_bar + sigma_bar : B_bar * B_bar / 4.0 + B_bar / 4.0;
  return 2.0 * coef * root;
}

double FirstStageConfig::lambda(std::size_t n, std::size_t d, Family family) const {
  if (rule == Rule::theorem) return scale * first_stage_lambda(n, d, delta, B_bar, sigma_bar, family);
  const double dd = std::max<double>(2.0, static_cast<double>(d));
  return scale * std::sqrt(std::log(dd) / (caption_divisor * static_cast<double>(n)));
}

Vec preliminary_theta(const CompositeLoss& uncorrected_loss, double lambda_fs, const SolverConfig& cfg) {
  if (uncorrected_loss.corrected()) throw InvalidArgument("preliminary estimate needs an uncorrected loss");
  if (!uncorrected_loss.moment().monotone_in_t)
    throw InvalidArgument("preliminary estimate needs a convex (monotone) moment");
  return prox_grad_minimize(uncorrected_loss.objective(), lambda_fs, SearchSet::full(),
                            Vec::Zero(uncorrected_loss.dim()), cfg)
      .theta;
}

Mat missing_data_features(const Mat& x, const Mat& u) {
  const Index n = x.rows(), p = x.cols(), du = u.cols();
  Mat out(n, p + du + p * du + du + p * du);
  out.leftCols(p) = x;
  out.middleCols(p, du) = u;
  Index c = p + du;
  for (Index j = 0; j < p; ++j)
    for (Index l = 0; l < du; ++l) out.col(c++) = x.col(j).cwiseProduct(u.col(l));
  out.middleCols(c, du) = u.cwiseAbs2();
  c += du;
  for (Index j = 0; j < p; ++j)
    for (Index l = 0; l < du; ++l) out.col(c++) = x.col(j).cwiseProduct(u.col(l).cwiseAbs2());
  return out;
}

namespace {

NuisanceModel fit_partially_linear(const Dataset& train, const FirstStageConfig& cfg) {
  const Mat x = train.block("x"), u = train.block("u");
  const Vec tau = train.col("tau"), y = train.col("y");
  const std::size_t n = train.rows();
  const Vec beta = lasso_linear(u, tau, cfg.lambda(n, u.cols(), Family::linear), cfg.solver).coef;
  const Mat design = hcat(tau.asDiagonal() * x, u);
  const Vec c = lasso_linear(design, y, cfg.lambda(n, design.cols(), Family::linear), cfg.solver).coef;
  const Vec theta = c.head(x.cols()), alpha = c.tail(u.cols());

  NuisanceModel m;
  m.params = {{"beta", beta}, {"theta_tilde", theta}, {"alpha", alpha}};
  m.predict = [beta, theta, alpha](const Dataset& d) {
    const Mat xd = d.block("x"), ud = d.block("u");
    NuisanceColumns out({"h", "q"}, static_cast<Index>(d.rows()));
    const Vec h = ud * beta;
    out.set("h", h);
    out.set("q", h.cwiseProduct(xd * theta) + ud * alpha);
    return out;
  };
  return m;
}

NuisanceModel fit_logistic_te(const Dataset& train, const FirstStageConfig& cfg) {
  const Mat u = train.block("u");
  const Vec tau = train.col("tau"), y = train.col("y");
  const std::size_t n = train.rows();
  const Vec beta = lasso_linear(u, tau, cfg.lambda(n, u.cols(), Family::linear), cfg.solver).coef;
  const Mat design = hcat(tau.asDiagonal() * u, u);
  const Vec c = lasso_logistic(design, y, cfg.lambda(n, design.cols(), Family::logistic), cfg.solver).coef;
  const Vec theta = c.head(u.cols()), alpha = c.tail(u.cols());
  const double v_floor = cfg.v_floor;

  NuisanceModel m;
  m.params = {{"beta", beta}, {"theta_tilde", theta}, {"alpha", alpha}};
  m.predict = [beta, theta, alpha, v_floor](const Dataset& d) {
    const Mat ud = d.block("u");
    const Vec taud = d.col("tau");
    NuisanceColumns out({"pi", "q", "V"}, static_cast<Index>(d.rows()));
    const Vec pi = ud * beta, ut = ud * theta, ua = ud * alpha;
    out.set("pi", pi);
    out.set("q", pi.cwiseProduct(ut) + ua);
    const Vec idx = taud.cwiseProduct(ut) + ua;
    out.set("V", idx.unaryExpr([v_floor](double s) { return std::max(logistic_deriv(s), v_floor); }));
    return out;
  };
  return m;
}

NuisanceModel fit_missing_data(const Dataset& train, const FirstStageConfig& cfg) {
  const Mat x = train.block("x"), u = train.block("u");
  const Vec d = train.col("d"), y = train.col("y");
  const std::size_t n = train.rows();
  const double clip = cfg.propensity_clip;
  auto propensity = [clip](const Vec& t) {
    return t.unaryExpr([clip](double s) { return std::clamp(logistic(s), clip, 1.0 - clip); });
  };

  const Mat z = hcat(x, u);
  const Vec gam = lasso_logistic(z, d, cfg.lambda(n, z.cols(), Family::logistic), cfg.solver).coef;
  const Vec p_in = propensity(z * gam);

  NuisanceModel m;
  if (!cfg.correction_nuisance) {
    m.params = {{"gamma", gam}};
    m.predict = [gam, propensity](const Dataset& dd) {
      NuisanceColumns out({"p", "h"}, static_cast<Index>(dd.rows()));
      out.set("p", propensity(hcat(dd.block("x"), dd.block("u")) * gam));
      out.set("h", Vec::Zero(static_cast<Index>(dd.rows())));
      return out;
    };
    return m;
  }

  // Preliminary IPS estimate on the training rows.
  NuisanceColumns gin({"p", "h"}, static_cast<Index>(n));
  gin.set("p", p_in);
  gin.set("h", Vec::Zero(static_cast<Index>(n)));
  const CompositeLoss ips = build_loss(AppId::missing_data, train, gin, false);
  const Vec theta = preliminary_theta(ips, cfg.lambda(n, x.cols(), Family::linear), cfg.solver);

  // Weighted regression of x'theta_tilde - y on polynomial features over observed rows.
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto seen = rows_where(d, 1.0, all);
  if (seen.empty()) throw DataError("no observed outcomes in first-stage fold");
  const Mat phi = take_rows(missing_data_features(x, u), seen);
  const Vec target = take(x * theta - y, seen);
  const Vec w = take(p_in, seen).cwiseInverse();
  Vec scale = (phi.colwise().squaredNorm() / static_cast<double>(phi.rows())).cwiseSqrt().transpose();
  for (Index j = 0; j < scale.size(); ++j)
    if (!(scale[j] > 0.0)) scale[j] = 1.0;
  const Mat phi_std = phi * scale.cwiseInverse().asDiagonal();
  const Vec coef_std =
      lasso_linear(phi_std, target, cfg.lambda(seen.size(), phi.cols(), Family::linear), cfg.solver, w).coef;
  const Vec coef = coef_std.cwiseQuotient(scale);

  m.params = {{"gamma", gam}, {"theta_tilde", theta}, {"q_coef", coef}};
  m.predict = [gam, coef, propensity](const Dataset& dd) {
    const Mat xd = dd.block("x"), ud = dd.block("u");
    NuisanceColumns out({"p", "h"}, static_cast<Index>(dd.rows()));
    const Vec p = propensity(hcat(xd, ud) * gam);
    const Vec q = missing_data_features(xd, ud) * coef;
    out.set("p", p);
    out.set("h", -q.cwiseQuotient(p));
    return out;
  };
  return m;
}

NuisanceModel fit_games(const Dataset& train, const FirstStageConfig& cfg) {
  const Mat x = train.block("x");
  const Vec v = train.col("v"), y = train.col("y");
  const std::size_t n = train.rows();
  const Vec gam = lasso_logistic(x, v, cfg.lambda(n, x.cols(), Family::logistic), cfg.solver).coef;
  NuisanceModel m;
  if (!cfg.correction_nuisance) {
    m.params = {{"gamma", gam}};
    m.predict = [gam](const Dataset& d) {
      NuisanceColumns out({"g", "h"}, static_cast<Index>(d.rows()));
      out.set("g", logistic_of(d.block("x") * gam));
      out.set("h", Vec::Zero(static_cast<Index>(d.rows())));
      return out;
    };
    return m;
  }
  const Vec g_in = logistic_of(x * gam);
  Mat design(x.rows(), x.cols() + 1);
  design << x, g_in;
  const Vec theta = lasso_logistic(design, y, cfg.lambda(n, design.cols(), Family::logistic), cfg.solver).coef;

  m.params = {{"gamma", gam}, {"theta_tilde", theta}};
  m.predict = [gam, theta](const Dataset& d) {
    const Mat xd = d.block("x");
    const Index p = xd.cols();
    NuisanceColumns out({"g", "h"}, static_cast<Index>(d.rows()));
    const Vec g = logistic_of(xd * gam);
    const double delta = theta[p];
    const Vec idx = xd * theta.head(p) + delta * g;
    out.set("g", g);
    out.set("h", idx.unaryExpr([delta](double s) { return delta * logistic_deriv(s); }));
    return out;
  };
  return m;
}

}  // namespace

NuisanceModel fit_nuisance_model(const Dataset& data, AppId app, const FoldPlan& folds,
                                 const std::vector<int>& train_folds, const FirstStageConfig& cfg) {
  validate_schema(data, app);
  if (folds.assignment.size() != data.rows()) throw ConfigError("fold plan does not match the data");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.rows(); ++i)
    if (std::find(train_folds.begin(), train_folds.end(), folds.assignment[i]) != train_folds.end())
      rows.push_back(i);
  const std::size_t need = static_cast<std::size_t>(cfg.min_rows_per_role) * schema(app).nuisance_roles.size();
  if (rows.size() < need)
    throw ConfigError("first-stage fold has " + std::to_string(rows.size()) + " rows, need at least " +
                      std::to_string(need));
  const Dataset train = data.subset(rows);
  NuisanceModel m;
  switch (app) {
    case AppId::partially_linear: m = fit_partially_linear(train, cfg); break;
    case AppId::logistic_te: m = fit_logistic_te(train, cfg); break;
    case AppId::missing_data: m = fit_missing_data(train, cfg); break;
    case AppId::games: m = fit_games(train, cfg); break;
  }
  m.train_folds = train_folds;
  return m;
}

NuisanceFit build_nuisance(const Dataset& data, AppId app, const FoldPlan& folds,
                           const std::vector<std::pair<std::vector<int>, std::vector<int>>>& plan,
                           const FirstStageConfig& cfg) {
  NuisanceFit fit;
  fit.folds = folds;
  fit.columns = NuisanceColumns(schema(app).nuisance_roles, static_cast<Index>(data.rows()));
  fit.source.assign(data.rows(), -1);
  for (const auto& [train, eval] : plan) {
    for (int f : eval)
      if (std::find(train.begin(), train.end(), f) != train.end())
        throw ConfigError("a fold cannot both train and evaluate a nuisance model");
    fit.models.push_back(fit_nuisance_model(data, app, folds, train, cfg));
    const int id = static_cast<int>(fit.models.size()) - 1;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.rows(); ++i)
      if (std::find(eval.begin(), eval.end(), folds.assignment[i]) != eval.end()) rows.push_back(i);
    const NuisanceColumns pred = fit.models.back().predict(data.subset(rows));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      fit.columns.set_row(static_cast<Index>(rows[k]), pred, static_cast<Index>(k));
      fit.source[rows[k]] = id;
    }
  }
  return fit;
}

NuisanceFit cross_fit_nuisance(const Dataset& data, AppId app, const FoldPlan& folds,
                               const FirstStageConfig& cfg) {
  if (folds.n_folds != 2) throw ConfigError("cross-fitting uses exactly two folds");
  return build_nuisance(data, app, folds, {{{1}, {0}}, {{0}, {1}}}, cfg);
}

double estimate_g_n(const Dataset& data, const NuisanceModel& a, const NuisanceModel& b) {
  const NuisanceColumns pa = a.predict(data), pb = b.predict(data);
  double worst = 0.0;
  for (const auto& role : pa.roles()) {
    const Vec diff = pa.col(role) - pb.col(role);
    worst = std::max(worst, std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()) / 2.0));
  }
  return worst;
}

}  // namespace plugreg
