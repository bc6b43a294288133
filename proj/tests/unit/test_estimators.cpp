#include "plugreg/errors.hpp"
#include "plugreg/estimators.hpp"
#include "plugreg/simulation.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace plugreg;

namespace {

SolverConfig tight() {
  SolverConfig c;
  c.tol = 1e-14;
  c.max_iters = 200000;
  return c;
}

// Squared-error loss (1/n) sum (y - x'theta)^2 / 2 built from raw parts.
CompositeLoss squared_loss(const Mat& X, const Vec& y, bool monotone = true) {
  SingleIndexMoment mo;
  mo.m = [](Row w, double t, Row) { return t - w[0]; };
  mo.dm_dt = [](Row, double, Row) { return 1.0; };
  mo.K = [](Row w, double t, Row) { return 0.5 * (t - w[0]) * (t - w[0]); };
  mo.monotone_in_t = monotone;
  LossInputs in;
  in.w = RowMat(y.size(), 1);
  in.w.col(0) = y;
  in.gamma = RowMat(y.size(), 0);
  in.lambda = X;
  return CompositeLoss(mo, in);
}

Mat random_matrix(std::mt19937_64& g, Index n, Index p) {
  std::normal_distribution<double> z;
  Mat m(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) m(i, j) = z(g);
  return m;
}

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("penalty plan follows the stated formulas") {
  const std::size_t n = 2500, p = 80, k = 3;
  const double delta = 0.1, U = 1.3, g = 0.05, gam = 0.7, R0 = 4.0;
  const PenaltyPlan pl = make_penalty_plan(n, p, k, delta, U, g, gam, R0);

  const double L2p = std::log(2.0 * 80 / 0.1);
  const double eps = std::pow(U, 2) * std::sqrt(L2p / 5000.0);
  const double B = 4 * std::pow(U, 3), L = 3 * std::pow(U, 3);
  const double tau = 4 * std::pow(U, 5) * 3 * std::sqrt(2 * std::log(80.0) / 2500.0) +
                     std::pow(U, 3) * std::sqrt(4 * L2p / 2500.0);
  const double r1 = 8.0 * 3 / 0.7 * (eps + B * g * g + (tau + L * g) * R0);
  CHECK(pl.epsilon == doctest::Approx(eps).epsilon(1e-13));
  CHECK(pl.B == doctest::Approx(B));
  CHECK(pl.L == doctest::Approx(L));
  CHECK(pl.tau == doctest::Approx(tau).epsilon(1e-13));
  CHECK(pl.R0 == R0);
  CHECK(pl.R1 == doctest::Approx(r1).epsilon(1e-13));
  CHECK(pl.lambda_main == doctest::Approx(2 * (eps + B * g * g)).epsilon(1e-13));
  CHECK(pl.lambda_pre == doctest::Approx(2 * (eps + B * g * g + (tau + L * g) * R0)).epsilon(1e-13));
  CHECK(pl.lambda_fin == doctest::Approx(2 * (eps + B * g * g + (tau + L * g) * r1)).epsilon(1e-13));
  CHECK(pl.lambda_main < pl.lambda_pre);

  CHECK_THROWS_AS(make_penalty_plan(0, p, k, delta, U, g, gam, R0), InvalidArgument);
  CHECK_THROWS_AS(make_penalty_plan(n, p, k, 0.0, U, g, gam, R0), InvalidArgument);
  CHECK_THROWS_AS(make_penalty_plan(n, p, k, delta, -1.0, g, gam, R0), InvalidArgument);
  CHECK_THROWS_AS(make_penalty_plan(n, p, k, delta, U, -0.1, gam, R0), InvalidArgument);
}

TEST_CASE("plan penalties grow with the first-stage error") {
  double prev_main = 0.0, prev_fin = 0.0;
  for (double g : {0.0, 0.01, 0.1, 0.5}) {
    const PenaltyPlan pl = make_penalty_plan(1000, 50, 2, 0.05, 1.0, g, 1.0, 2.0);
    CHECK(pl.lambda_main > prev_main);
    CHECK(pl.lambda_fin > prev_fin);
    prev_main = pl.lambda_main;
    prev_fin = pl.lambda_fin;
  }
}

TEST_CASE("default sparsity guess") {
  CHECK(default_k_guess(2000, 100) == 10);
  CHECK(default_k_guess(4, 1) == 3);  // log p floored at log 2
  CHECK(default_k_guess(1, 1000) == 1);
}

TEST_CASE("rule overrides") {
  PenaltyRule r;
  r.kind = PenaltyRule::Kind::caption;
  PenaltyPlan pl = r.plan(1000, 200, 0.0, 2.0);
  const double cap = std::sqrt(std::log(200.0) / 1000.0);
  CHECK(pl.lambda_main == doctest::Approx(cap));
  CHECK(pl.lambda_pre == pl.lambda_main);
  CHECK(pl.lambda_fin == pl.lambda_main);
  r.caption_divisor = 4.0;
  CHECK(r.plan(1000, 200, 0.0, 2.0).lambda_main == doctest::Approx(cap / 2.0));

  r.kind = PenaltyRule::Kind::manual;
  r.manual = 0.123;
  CHECK(r.plan(1000, 200, 0.0, 2.0).lambda_fin == 0.123);
  r.manual = -1.0;
  CHECK_THROWS_AS(r.plan(1000, 200, 0.0, 2.0), ConfigError);

  PenaltyRule t;
  t.kind = PenaltyRule::Kind::theorem;
  CHECK(t.needs_g_n());
  t.g_n = 0.02;
  CHECK_FALSE(t.needs_g_n());
  t.R1 = 0.5;
  t.k_guess = 4;
  const PenaltyPlan tp = t.plan(1000, 200, 99.0, 3.0);
  CHECK(tp.g_n == 0.02);
  CHECK(tp.k_guess == 4);
  CHECK(tp.R0 == 3.0);
  CHECK(tp.R1 == 0.5);
  CHECK(tp.lambda_fin == doctest::Approx(2 * (tp.epsilon + tp.B * 0.0004 + (tp.tau + tp.L * 0.02) * 0.5)));
}

TEST_CASE("cone report and error metrics") {
  EstimationResult r;
  r.theta_hat = Vec(4);
  r.theta_hat << 1.5, 0.0, -0.25, 0.0;
  Vec t0(4);
  t0 << 1.0, 0.0, 0.0, 2.0;
  attach_truth(r, t0);
  CHECK(*r.l1_error == doctest::Approx(0.5 + 0.25 + 2.0));
  CHECK(*r.l2_error == doctest::Approx(std::sqrt(0.25 + 0.0625 + 4.0)));
  CHECK(*r.linf_error == 2.0);
  CHECK(r.cone->on_support == doctest::Approx(2.5));
  CHECK(r.cone->off_support == doctest::Approx(0.25));
  CHECK(r.cone->in_cone());
  ConeReport c{4.0, 1.0};
  CHECK_FALSE(c.in_cone());
  CHECK_THROWS_AS(attach_truth(r, Vec::Zero(3)), InvalidArgument);
}

TEST_CASE("large penalty gives the zero estimate exactly when the gradient is dominated") {
  std::mt19937_64 g(4);
  const Mat X = random_matrix(g, 120, 6);
  Vec y = X.col(0) - X.col(3);
  const CompositeLoss loss = squared_loss(X, y);
  const double gmax = loss.gradient(Vec::Zero(6)).lpNorm<Eigen::Infinity>();
  const SearchSet full = SearchSet::full();
  CHECK(second_stage(loss, gmax * 1.01, full, Vec::Zero(6), tight()).theta_hat.isZero());
  CHECK_FALSE(second_stage(loss, gmax * 0.9, full, Vec::Zero(6), tight()).theta_hat.isZero());
}

TEST_CASE("algorithm 1 rejects non-convex losses") {
  std::mt19937_64 g(4);
  const Mat X = random_matrix(g, 20, 3);
  const CompositeLoss loss = squared_loss(X, Vec::Zero(20), false);
  CHECK_THROWS_AS(algorithm1(loss, make_penalty_plan(20, 3, 1, 0.05, 1, 0, 1, 1), tight()), ConfigError);
}

TEST_CASE("algorithm 2 iterates stay in their balls") {
  std::mt19937_64 g(12);
  std::normal_distribution<double> z;
  for (int t = 0; t < 10; ++t) {
    const Mat X1 = random_matrix(g, 80, 5), X2 = random_matrix(g, 80, 5);
    Vec beta(5);
    beta << 3, -2, 0, 0, 1;
    Vec y1 = X1 * beta, y2 = X2 * beta;
    for (Index i = 0; i < 80; ++i) y1[i] += z(g), y2[i] += z(g);
    PenaltyPlan pl;
    pl.R0 = 1.0 + 0.5 * t;
    pl.R1 = 0.3 + 0.2 * t;
    pl.lambda_pre = pl.lambda_fin = 0.01;
    const EstimationResult r = algorithm2(squared_loss(X1, y1), squared_loss(X2, y2), pl, tight());
    REQUIRE(r.theta_tilde.has_value());
    CHECK(r.theta_tilde->lpNorm<1>() <= pl.R0 + 1e-9);
    CHECK((r.theta_hat - *r.theta_tilde).lpNorm<1>() <= pl.R1 + 1e-9);
    CHECK(r.preliminary.has_value());
    CHECK(r.lambda_used == 0.01);
  }
  PenaltyPlan bad;
  std::mt19937_64 h(1);
  const Mat X = random_matrix(h, 10, 2);
  CHECK_THROWS_AS(algorithm2(squared_loss(X, Vec::Zero(10)), squared_loss(X, Vec::Zero(10)), bad, tight()),
                  ConfigError);
}

TEST_CASE("algorithm 2 with wide balls and equal losses matches algorithm 1") {
  std::mt19937_64 g(2);
  const Mat X = random_matrix(g, 100, 6);
  Vec y = 2.0 * X.col(1) - X.col(4);
  const CompositeLoss loss = squared_loss(X, y);
  PenaltyPlan pl;
  pl.R0 = pl.R1 = 1e3;
  pl.lambda_main = pl.lambda_pre = pl.lambda_fin = 0.05;
  SolverConfig c = tight();
  c.tol = 1e-15;
  const EstimationResult a1 = algorithm1(loss, pl, c);
  const EstimationResult a2 = algorithm2(loss, loss, pl, c);
  CHECK((a1.theta_hat - a2.theta_hat).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("plug-in estimate recovers a noiseless parameter") {
  DGPConfig c = preset(AppId::partially_linear, Scale::desk);
  c.n = 500;
  c.p = 8;
  c.sigma_eps = 1e-9;
  c.seed = 3;
  const SimData sim = generate(c, 0);
  PenaltyRule rule;
  rule.kind = PenaltyRule::Kind::manual;
  rule.manual = 1e-9;
  EstimatorConfig cfg;
  cfg.solver = tight();
  EstimationResult r = plug_in_estimate(sim.data, AppId::partially_linear, sim.truth, rule, cfg);
  attach_truth(r, sim.theta0);
  CHECK(*r.linf_error < 1e-4);
}

TEST_CASE("fold loss refuses rows scored by their own fold") {
  DGPConfig c = preset(AppId::partially_linear, Scale::desk);
  c.n = 200;
  c.p = 5;
  const SimData sim = generate(c, 0);
  const FoldPlan folds = make_folds(200, 2, 1);
  NuisanceFit fit = build_nuisance(sim.data, AppId::partially_linear, folds, {{{1}, {0}}}, FirstStageConfig{});
  EstimatorConfig cfg;
  CHECK_NOTHROW(fold_loss(sim.data, AppId::partially_linear, fit, folds.members(0), cfg));
  CHECK_THROWS_AS(fold_loss(sim.data, AppId::partially_linear, fit, folds.members(1), cfg), DataError);
  fit.models[0].train_folds = {0};
  CHECK_THROWS_AS(fold_loss(sim.data, AppId::partially_linear, fit, folds.members(0), cfg), DataError);
}

TEST_CASE("data-level estimators check the fold count") {
  DGPConfig c = preset(AppId::partially_linear, Scale::desk);
  c.n = 300;
  c.p = 5;
  const SimData sim = generate(c, 0);
  const EstimatorConfig cfg;
  const PenaltyRule rule;
  CHECK_THROWS_AS(algorithm1(sim.data, AppId::partially_linear, rule, make_folds(300, 3, 0), cfg), ConfigError);
  CHECK_THROWS_AS(algorithm2(sim.data, AppId::partially_linear, rule, make_folds(300, 2, 0), cfg), ConfigError);
  const EstimationResult r2 = algorithm2(sim.data, AppId::partially_linear, rule, make_folds(300, 3, 0), cfg);
  CHECK(r2.theta_tilde.has_value());
  const EstimationResult r1 = algorithm1(sim.data, AppId::partially_linear, rule, make_folds(300, 2, 0), cfg);
  CHECK(r1.theta_hat.size() == 5);
}

TEST_CASE("result json carries the documented fields") {
  DGPConfig c = preset(AppId::partially_linear, Scale::desk);
  c.n = 300;
  c.p = 5;
  const SimData sim = generate(c, 0);
  EstimationResult r =
      algorithm2(sim.data, AppId::partially_linear, PenaltyRule{}, make_folds(300, 3, 0), EstimatorConfig{});
  attach_truth(r, sim.theta0);
  const nlohmann::json j = to_json(r);
  CHECK(j["theta_hat"].size() == 5);
  CHECK(j.contains("support"));
  CHECK(j["lambda_used"].get<double>() == r.lambda_used);
  CHECK(j["metrics"].contains("l2_error"));
  CHECK(j["metrics"]["cone"].contains("off_support_l1"));
  CHECK(j.contains("theta_tilde"));
  CHECK(j.contains("preliminary_diagnostics"));
  for (const char* key : {"epsilon", "tau", "R0", "R1", "lambda_main", "lambda_pre", "lambda_fin"})
    CHECK(j["penalty_plan"].contains(key));
}

}  // TEST_SUITE
