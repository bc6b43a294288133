#include "plugreg/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "plugreg/errors.hpp"
#include "plugreg/first_stage.hpp"
#include "plugreg/rng.hpp"

namespace plugreg {

void DGPConfig::validate() const {
  if (n < 4) throw ConfigError("n must be at least 4");
  if (p < 1) throw ConfigError("p must be positive");
  if (k > p) throw ConfigError("k exceeds p");
  const std::size_t width = model == AppId::missing_data ? d_u : p;
  if (k_alpha > width) throw ConfigError("k_alpha exceeds the control dimension");
  if (model == AppId::missing_data && d_u < 1) throw ConfigError("d_u must be positive");
  if (model == AppId::partially_linear && p < 2) throw ConfigError("partially linear design needs p >= 2");
  if (!(sigma_eps > 0.0 && sigma_eta > 0.0 && sigma_x > 0.0 && sigma_u > 0.0))
    throw ConfigError("noise scales must be positive");
  if (model == AppId::games && !(std::abs(delta1 * delta2) / 16.0 < 1.0))
    throw ConfigError("games design needs |delta1 delta2| / 16 < 1");
  if (replications < 1) throw ConfigError("need at least one replication");
}

DGPConfig preset(AppId model, Scale scale, GamesVariant variant) {
  DGPConfig c;
  c.model = model;
  const bool desk = scale == Scale::desk;
  switch (model) {
    case AppId::partially_linear:
      c.n = desk ? 2000 : 5000;
      c.p = desk ? 100 : 200;
      c.k = 2;
      c.k_alpha = 4;
      break;
    case AppId::logistic_te:
      c.n = desk ? 2000 : 5000;
      c.p = desk ? 100 : 2000;
      c.k = 2;
      c.k_alpha = 5;
      c.sigma_eta = 3.0;
      c.sigma_u = 0.5;
      break;
    case AppId::missing_data:
      c.n = desk ? 2000 : 5000;
      c.p = 20;
      c.d_u = 20;
      c.k = 1;
      c.k_alpha = 1;
      c.theta_value = 2.0;
      c.sigma_eta = 0.1;
      c.sigma_x = c.sigma_u = 3.0;
      c.sigma_eps = 1.0;
      break;
    case AppId::games:
      c.n = desk ? 4000 : 10000;
      c.p = desk ? 200 : 1000;
      c.k = 1;
      c.k_alpha = 3;
      c.delta1 = -2.0;
      c.delta2 = variant == GamesVariant::dgp2 ? -3.0 : 0.0;
      c.variant = variant;
      c.sigma_x = 1.0;
      break;
  }
  c.replications = desk ? 100 : 1000;
  return c;
}

namespace {

Mat normal_matrix(CounterRng& rng, std::size_t n, std::size_t p, double sd) {
  Mat m(static_cast<Index>(n), static_cast<Index>(p));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = sd * rng.normal();
  return m;
}

Mat uniform_matrix(CounterRng& rng, std::size_t n, std::size_t p, double half_width) {
  Mat m(static_cast<Index>(n), static_cast<Index>(p));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-half_width, half_width);
  return m;
}

Vec leading_ones(std::size_t dim, std::size_t k, double value = 1.0) {
  Vec v = Vec::Zero(static_cast<Index>(dim));
  v.head(static_cast<Index>(k)).setConstant(value);
  return v;
}

}  // namespace

SimData gen_partially_linear(const DGPConfig& cfg, std::uint64_t rep) {
  cfg.validate();
  CounterRng cov(cfg.seed, rep, Stream::covariates), noise(cfg.seed, rep, Stream::noise),
      treat(cfg.seed, rep, Stream::treatment);
  const std::size_t n = cfg.n, p = cfg.p;
  const Mat u = normal_matrix(cov, n, p, 1.0);
  Mat x(static_cast<Index>(n), static_cast<Index>(p));
  x.col(0).setOnes();
  x.rightCols(static_cast<Index>(p - 1)) = u.leftCols(static_cast<Index>(p - 1));
  const Vec theta0 = leading_ones(p, cfg.k), alpha0 = leading_ones(p, cfg.k_alpha), beta0 = alpha0;

  Vec eta(static_cast<Index>(n)), eps(static_cast<Index>(n));
  for (Index i = 0; i < eta.size(); ++i) eta[i] = treat.normal();
  for (Index i = 0; i < eps.size(); ++i) eps[i] = cfg.sigma_eps * noise.normal();
  const Vec h0 = u * beta0;
  const Vec tau = h0 + eta;
  const Vec xt = x * theta0;
  const Vec y = tau.cwiseProduct(xt) + u * alpha0 + eps;

  SimData s;
  s.data = Dataset(n);
  s.data.add_column("y", y);
  s.data.add_column("tau", tau);
  s.data.add_block("x", x);
  s.data.add_block("u", u);
  s.theta0 = theta0;
  s.truth = NuisanceColumns({"h", "q"}, static_cast<Index>(n));
  s.truth.set("h", h0);
  s.truth.set("q", h0.cwiseProduct(xt) + u * alpha0);
  return s;
}

SimData gen_logistic_te(const DGPConfig& cfg, std::uint64_t rep) {
  cfg.validate();
  CounterRng cov(cfg.seed, rep, Stream::covariates), treat(cfg.seed, rep, Stream::treatment),
      act(cfg.seed, rep, Stream::actions);
  const std::size_t n = cfg.n, p = cfg.p;
  const Mat u = uniform_matrix(cov, n, p, cfg.sigma_u);
  const Vec theta0 = leading_ones(p, cfg.k), alpha0 = leading_ones(p, cfg.k_alpha), beta0 = alpha0;
  const Vec pi0 = u * beta0, ut = u * theta0, ua = u * alpha0;
  Vec tau(static_cast<Index>(n)), y(static_cast<Index>(n)), V0(static_cast<Index>(n));
  for (Index i = 0; i < tau.size(); ++i) {
    tau[i] = pi0[i] + cfg.sigma_eta * treat.normal();
    const double idx = tau[i] * ut[i] + ua[i];
    y[i] = act.bernoulli(logistic(idx)) ? 1.0 : 0.0;
    V0[i] = logistic_deriv(idx);
  }
  SimData s;
  s.data = Dataset(n);
  s.data.add_column("y", y);
  s.data.add_column("tau", tau);
  s.data.add_block("u", u);
  s.theta0 = theta0;
  s.truth = NuisanceColumns({"pi", "q", "V"}, static_cast<Index>(n));
  s.truth.set("pi", pi0);
  s.truth.set("q", pi0.cwiseProduct(ut) + ua);
  s.truth.set("V", V0);
  return s;
}

SimData gen_missing_data(const DGPConfig& cfg, std::uint64_t rep) {
  cfg.validate();
  CounterRng cov(cfg.seed, rep, Stream::covariates), noise(cfg.seed, rep, Stream::noise),
      coefs(cfg.seed, rep, Stream::coefficients), sel(cfg.seed, rep, Stream::selection);
  const std::size_t n = cfg.n, p = cfg.p, du = cfg.d_u;
  const Vec theta0 = leading_ones(p, cfg.k, cfg.theta_value);
  Mat A1 = Mat::Zero(static_cast<Index>(p), static_cast<Index>(du)), A2 = A1;
  for (std::size_t j = 0; j < cfg.k; ++j)
    for (std::size_t l = 0; l < cfg.k_alpha; ++l) {
      A1(static_cast<Index>(j), static_cast<Index>(l)) = coefs.uniform(1.0, 2.0);
      A2(static_cast<Index>(j), static_cast<Index>(l)) = coefs.uniform(1.0, 2.0);
    }
  Vec beta(static_cast<Index>(p)), gam(static_cast<Index>(du));
  for (Index j = 0; j < beta.size(); ++j) beta[j] = coefs.uniform(0.0, 1.0);
  for (Index l = 0; l < gam.size(); ++l) gam[l] = coefs.uniform(2.0, 3.0);

  const Mat x = uniform_matrix(cov, n, p, cfg.sigma_x);
  const Mat u = uniform_matrix(cov, n, du, cfg.sigma_u);
  const double centre = cfg.sigma_u * cfg.sigma_u / 3.0;  // E[u^2] for U(-s, s)
  const Mat u2c = u.array().square() - centre;
  // Heterogeneous effect h(u)_i = theta + A1 u_i + A2 (u_i^2 - E u^2), stored row-wise.
  const Mat H = (A1 * u.transpose() + A2 * u2c.transpose()).transpose().rowwise() + theta0.transpose();
  const Vec xh = (x.array() * H.array()).rowwise().sum();
  const Vec p0 = (cfg.sigma_eta * (x * beta + u * gam)).unaryExpr([](double s) { return logistic(s); });

  Vec y(static_cast<Index>(n)), d(static_cast<Index>(n));
  for (Index i = 0; i < y.size(); ++i) {
    const double yi = xh[i] + cfg.sigma_eps * noise.normal();
    d[i] = sel.bernoulli(p0[i]) ? 1.0 : 0.0;
    y[i] = d[i] == 1.0 ? yi : 0.0;
  }
  const Vec q0 = x * theta0 - xh;  // E[x'theta0 - y | z]

  SimData s;
  s.data = Dataset(n);
  s.data.add_column("y", y);
  s.data.add_column("d", d);
  s.data.add_block("x", x);
  s.data.add_block("u", u);
  s.theta0 = theta0;
  s.truth = NuisanceColumns({"p", "h"}, static_cast<Index>(n));
  s.truth.set("p", p0);
  s.truth.set("h", -q0.cwiseQuotient(p0));
  return s;
}

std::pair<double, double> games_equilibrium(double a1, double a2, double d1, double d2, double tol) {
  double g1 = 0.5, g2 = 0.5;
  for (int it = 0; it < 1000; ++it) {
    g2 = logistic(a2 + g1 * d2);
    g1 = logistic(a1 + g2 * d1);
    const double res = std::max(std::abs(g1 - logistic(a1 + g2 * d1)), std::abs(g2 - logistic(a2 + g1 * d2)));
    if (res < tol) return {g1, g2};
  }
  throw NumericFailure("equilibrium fixed point did not converge", 1000);
}

SimData gen_games(const DGPConfig& cfg, std::uint64_t rep) {
  cfg.validate();
  CounterRng cov(cfg.seed, rep, Stream::covariates), coefs(cfg.seed, rep, Stream::coefficients),
      act(cfg.seed, rep, Stream::actions);
  const std::size_t n = cfg.n, p = cfg.p;
  const double d2 = cfg.variant == GamesVariant::dgp1 ? 0.0 : cfg.delta2;
  const Vec alpha1 = leading_ones(p, cfg.k);
  Vec alpha2 = Vec::Zero(static_cast<Index>(p));
  for (std::size_t j = 0; j < cfg.k_alpha; ++j) alpha2[static_cast<Index>(j)] = coefs.uniform(-2.0, 2.0);

  const Mat x = uniform_matrix(cov, n, p, cfg.sigma_x);
  const Vec a1 = x * alpha1, a2 = x * alpha2;
  Vec y(static_cast<Index>(n)), v(static_cast<Index>(n)), g(static_cast<Index>(n)), h(static_cast<Index>(n));
  double worst = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const auto [g1, g2] = games_equilibrium(a1[i], a2[i], cfg.delta1, d2);
    worst = std::max({worst, std::abs(g1 - logistic(a1[i] + g2 * cfg.delta1)),
                      std::abs(g2 - logistic(a2[i] + g1 * d2))});
    y[i] = act.bernoulli(g1) ? 1.0 : 0.0;
    v[i] = act.bernoulli(g2) ? 1.0 : 0.0;
    g[i] = g2;
    h[i] = cfg.delta1 * logistic_deriv(a1[i] + g2 * cfg.delta1);
  }
  SimData s;
  s.data = Dataset(n);
  s.data.add_column("y", y);
  s.data.add_column("v", v);
  s.data.add_block("x", x);
  s.theta0 = Vec(static_cast<Index>(p + 1));
  s.theta0 << alpha1, cfg.delta1;
  s.truth = NuisanceColumns({"g", "h"}, static_cast<Index>(n));
  s.truth.set("g", g);
  s.truth.set("h", h);
  s.equilibrium_residual = worst;
  return s;
}

SimData generate(const DGPConfig& cfg, std::uint64_t rep) {
  switch (cfg.model) {
    case AppId::partially_linear: return gen_partially_linear(cfg, rep);
    case AppId::logistic_te: return gen_logistic_te(cfg, rep);
    case AppId::missing_data: return gen_missing_data(cfg, rep);
    case AppId::games: return gen_games(cfg, rep);
  }
  throw ConfigError("unknown model");
}

std::vector<std::string> available_methods(AppId model) {
  switch (model) {
    case AppId::partially_linear: return {"direct", "ortho", "ortho_cf", "oracle_ortho", "ortho_alg2"};
    case AppId::logistic_te: return {"direct", "ortho", "ortho_cf", "oracle_ortho", "ortho_alg2"};
    case AppId::missing_data: return {"direct", "ips", "ortho", "oracle_ips", "oracle_ortho", "ortho_alg2"};
    case AppId::games: return {"oracle_lg", "2slg", "2sortho_lg", "ortho_alg2"};
  }
  return {};
}

std::vector<std::string> default_methods(AppId model) {
  switch (model) {
    case AppId::partially_linear: return {"direct", "ortho", "ortho_cf", "oracle_ortho"};
    case AppId::logistic_te: return {"direct", "ortho", "ortho_cf"};
    case AppId::missing_data: return {"direct", "ips", "ortho", "oracle_ips", "oracle_ortho"};
    case AppId::games: return {"oracle_lg", "2slg", "2sortho_lg"};
  }
  return {};
}

PenaltyRule caption_rule(AppId model) {
  PenaltyRule r;
  r.kind = PenaltyRule::Kind::caption;
  r.caption_divisor = model == AppId::games ? 4.0 : 1.0;
  return r;
}

namespace {

enum class DirectLoss { squared, logistic };

struct DirectProblem {
  Mat design;
  Vec response;
  DirectLoss loss;
  Index target = 0;  // theta is the leading block of the coefficients
};

DirectProblem direct_problem(const Dataset& data, AppId model) {
  DirectProblem d;
  switch (model) {
    case AppId::partially_linear: {
      const Mat x = data.block("x"), u = data.block("u");
      d.design.resize(x.rows(), x.cols() + u.cols());
      d.design << data.col("tau").asDiagonal() * x, u;
      d.response = data.col("y");
      d.loss = DirectLoss::squared;
      d.target = x.cols();
      break;
    }
    case AppId::logistic_te: {
      const Mat u = data.block("u");
      d.design.resize(u.rows(), 2 * u.cols());
      d.design << data.col("tau").asDiagonal() * u, u;
      d.response = data.col("y");
      d.loss = DirectLoss::logistic;
      d.target = u.cols();
      break;
    }
    case AppId::missing_data: {
      std::vector<std::size_t> seen;
      const Vec dcol = data.col("d");
      for (Index i = 0; i < dcol.size(); ++i)
        if (dcol[i] == 1.0) seen.push_back(static_cast<std::size_t>(i));
      const Dataset obs = data.subset(seen);
      const Mat x = obs.block("x"), u = obs.block("u");
      d.design.resize(x.rows(), x.cols() + x.cols() * u.cols());
      d.design.leftCols(x.cols()) = x;
      Index c = x.cols();
      for (Index j = 0; j < x.cols(); ++j)
        for (Index l = 0; l < u.cols(); ++l) d.design.col(c++) = x.col(j).cwiseProduct(u.col(l));
      d.response = obs.col("y");
      d.loss = DirectLoss::squared;
      d.target = x.cols();
      break;
    }
    case AppId::games:
      throw InvalidArgument("games direct baseline is 2SLG");
  }
  return d;
}

// Both fits minimize the half-scaled loss used by the second stage:
// (1/2n) sum r^2 + lambda ||.||_1, i.e. lasso_linear at 2 lambda.
Vec fit_direct(const Mat& X, const Vec& y, DirectLoss loss, double lambda, const SolverConfig& cfg) {
  if (loss == DirectLoss::squared) return lasso_linear(X, y, 2.0 * lambda, cfg).coef;
  return lasso_logistic(X, y, lambda, cfg).coef;
}

double holdout_loss(const Mat& X, const Vec& y, DirectLoss loss, const Vec& coef) {
  const Vec t = X * coef;
  double s = 0.0;
  for (Index i = 0; i < t.size(); ++i)
    s += loss == DirectLoss::squared ? 0.5 * (y[i] - t[i]) * (y[i] - t[i]) : softplus(t[i]) - y[i] * t[i];
  return s / static_cast<double>(t.size());
}

Mat rows_of(const Mat& m, const std::vector<std::size_t>& rows) {
  Mat out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(static_cast<Index>(rows[k]));
  return out;
}

Vec rows_of(const Vec& v, const std::vector<std::size_t>& rows) {
  Vec out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Index>(k)] = v[static_cast<Index>(rows[k])];
  return out;
}

constexpr std::uint64_t kCvStreamOffset = 0x1000000000ULL;

}  // namespace

EstimationResult baseline_direct(const SimData& sim, AppId model, const RunOptions& opt, std::uint64_t seed,
                                 std::uint64_t rep) {
  const DirectProblem d = direct_problem(sim.data, model);
  const std::size_t n = static_cast<std::size_t>(d.design.rows());
  const SolverConfig& scfg = opt.estimator.solver;
  double lambda = opt.rule.plan(n, static_cast<std::size_t>(d.target), 0.0, 1.0).lambda_main;

  if (opt.direct_cv) {
    const FoldPlan cv = make_folds(n, 5, seed, rep + kCvStreamOffset);
    const double base = lambda;
    double best = std::numeric_limits<double>::infinity();
    for (double mult : {0.125, 0.25, 0.5, 1.0, 2.0, 4.0}) {
      double score = 0.0;
      for (int f = 0; f < 5; ++f) {
        const auto tr = cv.complement(f), te = cv.members(f);
        const Vec c = fit_direct(rows_of(d.design, tr), rows_of(d.response, tr), d.loss, base * mult, scfg);
        score += holdout_loss(rows_of(d.design, te), rows_of(d.response, te), d.loss, c);
      }
      if (score < best) {
        best = score;
        lambda = base * mult;
      }
    }
  }

  EstimationResult r;
  const Vec coef = fit_direct(d.design, d.response, d.loss, lambda, scfg);
  r.theta_hat = coef.head(d.target);
  r.lambda_used = lambda;
  set_support(r);
  return r;
}

EstimationResult run_method(const std::string& method, const SimData& sim, AppId model, const RunOptions& opt,
                            std::uint64_t seed, std::uint64_t rep) {
  const auto& avail = available_methods(model);
  if (std::find(avail.begin(), avail.end(), method) == avail.end())
    throw ConfigError("method '" + method + "' is not available for model '" + schema(model).name + "'");

  const Dataset& data = sim.data;
  EstimatorConfig est = opt.estimator;
  est.first_stage.caption_divisor = caption_rule(model).caption_divisor;
  const bool naive = method == "ips" || method == "oracle_ips" || method == "2slg" || method == "oracle_lg";
  if (naive) {
    est.corrected = false;
    est.first_stage.correction_nuisance = false;
  }
  auto oracle_truth = [&] {
    if (!opt.oracle_direction) return sim.truth;
    return sim.truth.toward(opt.oracle_direction(sim), opt.oracle_eps);
  };

  EstimationResult r;
  if (method == "direct") {
    r = baseline_direct(sim, model, opt, seed, rep);
  } else if (method.rfind("oracle", 0) == 0) {
    if (sim.truth.rows() != static_cast<Index>(data.rows()))
      throw ConfigError("method '" + method + "' needs the true nuisance values");
    r = plug_in_estimate(data, model, oracle_truth(), opt.rule, est);
  } else if (method == "ortho_alg2") {
    r = algorithm2(data, model, opt.rule, make_folds(data.rows(), 3, seed, rep), est);
  } else if (method == "ortho" && (model == AppId::partially_linear || model == AppId::logistic_te)) {
    r = algorithm1(data, model, opt.rule, make_folds(data.rows(), 2, seed, rep), est);
  } else {
    // ortho_cf, and the cross-fitted pipelines of missing data (ips, ortho) and games (2slg, 2sortho_lg).
    r = cross_fit_estimate(data, model, opt.rule, make_folds(data.rows(), 2, seed, rep), est);
  }
  attach_truth(r, sim.theta0);
  return r;
}

std::vector<double> ReplicationReport::l2(const std::string& method) const {
  std::vector<double> out;
  for (const auto& rec : records)
    if (rec.method == method && rec.ok) out.push_back(rec.l2_error);
  return out;
}

std::vector<double> ReplicationReport::l1(const std::string& method) const {
  std::vector<double> out;
  for (const auto& rec : records)
    if (rec.method == method && rec.ok) out.push_back(rec.l1_error);
  return out;
}

ReplicationReport run_replications(const DGPConfig& cfg, const std::vector<std::string>& methods,
                                   const RunOptions& opt) {
  cfg.validate();
  if (methods.empty()) throw ConfigError("no methods requested");
  const auto& avail = available_methods(cfg.model);
  for (const auto& m : methods)
    if (std::find(avail.begin(), avail.end(), m) == avail.end())
      throw ConfigError("method '" + m + "' is not available for model '" + schema(cfg.model).name + "'");

  const std::size_t R = cfg.replications, M = methods.size();
  std::vector<MethodRecord> records(R * M);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t rep = next++; rep < R; rep = next++) {
      std::optional<SimData> sim;
      std::string gen_error;
      try {
        sim = generate(cfg, rep);
      } catch (const std::exception& e) {
        gen_error = e.what();
      }
      for (std::size_t k = 0; k < M; ++k) {
        MethodRecord& rec = records[rep * M + k];
        rec.seed = rep;
        rec.method = methods[k];
        if (!sim) {
          rec.error = "data generation failed: " + gen_error;
          continue;
        }
        rec.equilibrium_residual = sim->equilibrium_residual;
        const auto t0 = opt.timing ? std::chrono::steady_clock::now() : std::chrono::steady_clock::time_point{};
        try {
          const EstimationResult r = run_method(methods[k], *sim, cfg.model, opt, cfg.seed, rep);
          rec.ok = true;
          rec.l1_error = *r.l1_error;
          rec.l2_error = *r.l2_error;
          rec.linf_error = *r.linf_error;
          rec.support_size = r.support.size();
          rec.lambda_used = r.lambda_used;
          rec.cone = *r.cone;
          if (r.loss) rec.grad_inf_at_truth = r.loss->gradient(sim->theta0).lpNorm<Eigen::Infinity>();
        } catch (const std::exception& e) {
          rec.error = e.what();
        }
        if (opt.timing)
          rec.wall_ms =
              std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      }
    }
  };

  const unsigned T = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(R)));
  if (T == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < T; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ReplicationReport rep;
  rep.config = cfg;
  rep.methods = methods;
  rep.records = std::move(records);
  for (const auto& r : rep.records)
    if (!r.ok) ++rep.failures;
  return rep;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_csv(const ReplicationReport& rep, std::ostream& os) {
  os << "seed,method,l1_error,l2_error,support_size,wall_ms\n";
  for (const auto& r : rep.records) {
    os << r.seed << ',' << r.method << ',';
    if (r.ok)
      os << num(r.l1_error) << ',' << num(r.l2_error) << ',' << r.support_size;
    else
      os << "nan,nan,0";
    os << ',' << num(r.wall_ms) << '\n';
  }
}

std::string to_csv(const ReplicationReport& rep) {
  std::ostringstream os;
  write_csv(rep, os);
  return os.str();
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

namespace {

nlohmann::json describe(const std::vector<double>& v) {
  nlohmann::json j;
  j["count"] = v.size();
  if (v.empty()) return j;
  double mean = 0.0;
  for (double x : v) mean += x / static_cast<double>(v.size());
  j["median"] = median(v);
  j["mean"] = mean;
  j["min"] = quantile(v, 0.0);
  j["max"] = quantile(v, 1.0);
  j["q05"] = quantile(v, 0.05);
  j["q25"] = quantile(v, 0.25);
  j["q75"] = quantile(v, 0.75);
  j["q95"] = quantile(v, 0.95);
  return j;
}

nlohmann::json config_json(const DGPConfig& c) {
  return {{"model", schema(c.model).name}, {"n", c.n}, {"p", c.p}, {"d_u", c.d_u}, {"k", c.k},
          {"k_alpha", c.k_alpha}, {"sigma_eps", c.sigma_eps}, {"sigma_eta", c.sigma_eta},
          {"sigma_x", c.sigma_x}, {"sigma_u", c.sigma_u}, {"theta_value", c.theta_value},
          {"delta1", c.delta1}, {"delta2", c.delta2}, {"dgp", c.variant == GamesVariant::dgp1 ? 1 : 2},
          {"seed", c.seed}, {"replications", c.replications}};
}

}  // namespace

nlohmann::json summary_json(const ReplicationReport& rep) {
  nlohmann::json j;
  j["config"] = config_json(rep.config);
  j["failures"] = rep.failures;
  nlohmann::json methods = nlohmann::json::object();
  for (const auto& m : rep.methods) methods[m] = {{"l2_error", describe(rep.l2(m))}, {"l1_error", describe(rep.l1(m))}};
  j["methods"] = methods;

  // Per-seed differences error_a - error_b (positive: b has the smaller error).
  nlohmann::json pairs = nlohmann::json::object();
  const std::size_t M = rep.methods.size();
  for (std::size_t a = 0; a < M; ++a)
    for (std::size_t b = 0; b < M; ++b) {
      if (a == b) continue;
      std::vector<double> diff;
      for (std::size_t s = 0; s * M < rep.records.size(); ++s) {
        const auto& ra = rep.records[s * M + a];
        const auto& rb = rep.records[s * M + b];
        if (ra.ok && rb.ok) diff.push_back(ra.l2_error - rb.l2_error);
      }
      pairs[rep.methods[a] + "-" + rep.methods[b]] = describe(diff);
    }
  j["pairwise_l2_decrease"] = pairs;
  return j;
}

DGPConfig diagnostic_config(AppId model, std::size_t n_mc, std::uint64_t seed) {
  DGPConfig c = preset(model, Scale::desk);
  c.n = n_mc;
  c.p = std::min<std::size_t>(c.p, 10);
  c.d_u = std::min<std::size_t>(c.d_u, 10);
  c.k_alpha = std::min(c.k_alpha, model == AppId::missing_data ? c.d_u : c.p);
  c.seed = seed;
  return c;
}

NuisanceColumns perturbation_direction(AppId model, const SimData& sim) {
  NuisanceColumns dir = sim.truth;
  switch (model) {
    case AppId::partially_linear:
      dir.set("h", sim.truth.col("h").array() + 1.0);
      dir.set("q", sim.truth.col("q").array() + 1.0);
      break;
    case AppId::logistic_te:
      dir.set("q", sim.truth.col("q").array() + 1.0);
      break;
    case AppId::missing_data: {
      const Vec p0 = sim.truth.col("p");
      dir.set("p", p0.array() + 0.5 * p0.array() * (1.0 - p0.array()));
      dir.set("h", sim.truth.col("h") + 10.0 * sim.data.col("x_1"));
      break;
    }
    case AppId::games: {
      const Vec g0 = sim.truth.col("g");
      dir.set("g", g0.array() + 0.5 * g0.array() * (1.0 - g0.array()));
      dir.set("h", sim.truth.col("h").array() + 1.0);
      break;
    }
  }
  return dir;
}

OrthogonalityReport orthogonality_study(AppId model, bool naive, std::size_t n_mc, std::uint64_t seed,
                                        const std::vector<double>& r_grid) {
  const SimData sim = generate(diagnostic_config(model, n_mc, seed), 0);
  const NuisanceColumns dir = perturbation_direction(model, sim);
  const PerturbedLoss family = [&](double r) {
    return build_loss(model, sim.data, sim.truth.toward(dir, r), !naive);
  };
  return orthogonality_check(family, sim.theta0, r_grid);
}

double gradient_fd_check(AppId model, int probes, std::uint64_t seed) {
  double worst = 0.0;
  for (int i = 0; i < probes; ++i) {
    const auto rep = static_cast<std::uint64_t>(i);
    const SimData sim = generate(diagnostic_config(model, 300, seed), rep);
    const NuisanceColumns gamma = sim.truth.toward(perturbation_direction(model, sim), 0.3);
    const CompositeLoss loss = build_loss(model, sim.data, gamma, true);
    CounterRng rng(seed, rep, Stream::probe);
    Vec theta = sim.theta0;
    for (Index j = 0; j < theta.size(); ++j) theta[j] += rng.normal(0.0, 0.5);

    const Vec g = loss.gradient(theta);
    Vec fd(theta.size());
    for (Index j = 0; j < theta.size(); ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));
      Vec a = theta, b = theta;
      a[j] += h;
      b[j] -= h;
      fd[j] = (loss.value(a) - loss.value(b)) / (a[j] - b[j]);
    }
    worst = std::max(worst, (g - fd).lpNorm<Eigen::Infinity>() / std::max(g.lpNorm<Eigen::Infinity>(), 1e-12));
  }
  return worst;
}

void set_dgp_field(DGPConfig& c, const std::string& key, const std::string& value) {
  auto as_size = [&] {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw ConfigError("bad integer for '" + key + "': " + value);
    return static_cast<std::size_t>(v);
  };
  auto as_double = [&] {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw ConfigError("bad number for '" + key + "': " + value);
    return v;
  };
  try {
    if (key == "n") c.n = as_size();
    else if (key == "p") c.p = as_size();
    else if (key == "d_u") c.d_u = as_size();
    else if (key == "k" || key == "k_theta" || key == "k1") c.k = as_size();
    else if (key == "k_alpha" || key == "k_beta" || key == "k_g" || key == "k_u" || key == "k2") c.k_alpha = as_size();
    else if (key == "sigma_eps") c.sigma_eps = as_double();
    else if (key == "sigma_eta") c.sigma_eta = as_double();
    else if (key == "sigma_x") c.sigma_x = as_double();
    else if (key == "sigma_u") c.sigma_u = as_double();
    else if (key == "theta_value") c.theta_value = as_double();
    else if (key == "delta1") c.delta1 = as_double();
    else if (key == "delta2") c.delta2 = as_double();
    else if (key == "seed") c.seed = as_size();
    else if (key == "reps" || key == "replications") c.replications = as_size();
    else if (key == "dgp") {
      const std::size_t v = as_size();
      if (v != 1 && v != 2) throw ConfigError("dgp must be 1 or 2");
      c.variant = v == 1 ? GamesVariant::dgp1 : GamesVariant::dgp2;
      if (c.variant == GamesVariant::dgp2 && c.delta2 == 0.0) c.delta2 = -3.0;
    } else {
      throw ConfigError("unknown design key '" + key + "'");
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad value for '" + key + "': " + value);
  } catch (const std::out_of_range&) {
    throw ConfigError("value out of range for '" + key + "': " + value);
  }
}

std::vector<ReplicationReport> sweep(const DGPConfig& base, const std::string& key, const std::vector<double>& values,
                                     const std::vector<std::string>& methods, const RunOptions& opt) {
  std::vector<ReplicationReport> out;
  for (double v : values) {
    DGPConfig c = base;
    const bool integral = v == std::floor(v);
    set_dgp_field(c, key, integral ? std::to_string(static_cast<long long>(v)) : num(v));
    out.push_back(run_replications(c, methods, opt));
  }
  return out;
}

}  // namespace plugreg
