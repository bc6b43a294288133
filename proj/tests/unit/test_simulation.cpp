#include "plugreg/errors.hpp"
#include "plugreg/first_stage.hpp"
#include "plugreg/simulation.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace plugreg;

namespace {

double mean(const Vec& v) { return v.mean(); }

double variance(const Vec& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

DGPConfig tiny(AppId model, std::size_t reps = 3) {
  DGPConfig c = preset(model, Scale::desk);
  c.n = model == AppId::games ? 600 : 400;
  c.p = std::min<std::size_t>(c.p, 12);
  if (c.d_u) c.d_u = std::min<std::size_t>(c.d_u, 4);
  c.k_alpha = std::min(c.k_alpha, model == AppId::missing_data ? c.d_u : c.p);
  c.replications = reps;
  c.seed = 9;
  return c;
}

RunOptions options(AppId model) {
  RunOptions o;
  o.rule = caption_rule(model);
  return o;
}

}  // namespace

TEST_SUITE("simulation") {

TEST_CASE("config validation") {
  DGPConfig c = preset(AppId::partially_linear, Scale::desk);
  CHECK_NOTHROW(c.validate());
  c.k = c.p + 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = preset(AppId::partially_linear, Scale::desk);
  c.sigma_eps = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = preset(AppId::games, Scale::desk, GamesVariant::dgp2);
  c.delta1 = -4.0;
  c.delta2 = -4.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = preset(AppId::missing_data, Scale::desk);
  c.d_u = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("presets match the documented experiment sizes") {
  const DGPConfig md = preset(AppId::missing_data, Scale::paper);
  CHECK(md.n == 5000);
  CHECK(md.p == 20);
  CHECK(md.d_u == 20);
  CHECK(md.theta_value == 2.0);
  CHECK(md.sigma_eta == 0.1);
  CHECK(md.sigma_x == 3.0);
  CHECK(md.sigma_u == 3.0);
  const DGPConfig g = preset(AppId::games, Scale::paper, GamesVariant::dgp2);
  CHECK(g.n == 10000);
  CHECK(g.p == 1000);
  CHECK(g.k == 1);
  CHECK(g.k_alpha == 3);
  CHECK(g.delta1 == -2.0);
  CHECK(g.delta2 == -3.0);
  CHECK(preset(AppId::games, Scale::desk).delta2 == 0.0);
  const DGPConfig lt = preset(AppId::logistic_te, Scale::paper);
  CHECK(lt.n == 5000);
  CHECK(lt.p == 2000);
  CHECK(lt.k_alpha == 5);
  CHECK(lt.sigma_eta == 3.0);
  CHECK(lt.sigma_u == 0.5);
  const DGPConfig pl = preset(AppId::partially_linear, Scale::paper);
  CHECK(pl.n == 5000);
  CHECK(pl.p == 200);
  CHECK(pl.k == 2);
  CHECK(preset(AppId::partially_linear, Scale::desk).n == 2000);
}

TEST_CASE("partially linear design: treatment noise and covariate means") {
  DGPConfig c = preset(AppId::partially_linear, Scale::desk);
  c.p = 10;
  c.k_alpha = 4;
  c.seed = 1;
  const SimData s = generate(c, 0);
  const Vec eta = s.data.col("tau") - s.truth.col("h");
  CHECK(variance(eta) == doctest::Approx(1.0).epsilon(0.1));
  const Mat u = s.data.block("u");
  const Mat x = s.data.block("x");
  CHECK(x.col(0).isOnes());
  CHECK(x.rightCols(9) == u.leftCols(9));
}

TEST_CASE("covariate column means stay within three standard errors") {
  // Each column mean exceeds 3 sd / sqrt(n) with probability 0.27%; count over many draws.
  DGPConfig c = preset(AppId::partially_linear, Scale::desk);
  c.p = 10;
  const double bound = 3.0 / std::sqrt(static_cast<double>(c.n));
  int outside = 0, total = 0;
  double z2 = 0.0;
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    const Mat u = generate(c, rep).data.block("u");
    for (Index j = 0; j < u.cols(); ++j, ++total) {
      const double m = u.col(j).mean();
      outside += std::abs(m) >= bound;
      z2 += m * m * static_cast<double>(c.n);
    }
  }
  CHECK(outside <= total / 100);
  CHECK(z2 / total == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("partially linear moment recovers the parameter at the truth") {
  DGPConfig c = preset(AppId::partially_linear, Scale::desk);
  c.p = 10;
  c.seed = 2;
  const SimData s = generate(c, 0);
  const Vec r = s.data.col("y") - s.truth.col("q");
  const Mat D = (s.data.col("tau") - s.truth.col("h")).asDiagonal() * s.data.block("x");
  const Mat G = D.transpose() * D;
  const Vec b = G.ldlt().solve(D.transpose() * r);
  const Vec resid = r - D * b;
  const double s2 = resid.squaredNorm() / static_cast<double>(D.rows() - D.cols());
  const Vec se = (s2 * G.inverse().diagonal()).cwiseSqrt();
  for (Index j = 0; j < b.size(); ++j) CHECK(std::abs(b[j] - s.theta0[j]) < 3.0 * se[j]);
}

TEST_CASE("near-noiseless partially linear data is solved exactly by least squares") {
  DGPConfig c = preset(AppId::partially_linear, Scale::desk);
  c.p = 6;
  c.n = 200;
  c.k_alpha = 0;
  c.sigma_eps = 1e-12;
  const SimData s = generate(c, 0);
  const Mat D = s.data.col("tau").asDiagonal() * s.data.block("x");
  const Vec b = D.colPivHouseholderQr().solve(s.data.col("y"));
  CHECK((b - s.theta0).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("missing data: selection rate and propensity limit") {
  DGPConfig c = preset(AppId::missing_data, Scale::desk);
  c.seed = 3;
  const SimData s = generate(c, 0);
  const double rate = mean(s.data.col("d"));
  CHECK(rate > 0.2);
  CHECK(rate < 0.8);
  for (Index i = 0; i < s.data.col("d").size(); ++i)
    if (s.data.col("d")[i] == 0.0) CHECK(s.data.col("y")[i] == 0.0);

  c.sigma_eta = 1e-14;
  const SimData flat = generate(c, 0);
  CHECK((flat.truth.col("p").array() - 0.5).abs().maxCoeff() < 1e-10);
}

TEST_CASE("missing data: heterogeneity lives on the parameter support") {
  DGPConfig c = preset(AppId::missing_data, Scale::desk);
  c.n = 300;
  c.seed = 4;
  const SimData s = generate(c, 0);
  // With k = k_u = 1, E[y | z] - x'theta0 = x_1 (a u_1 + b (u_1^2 - s^2/3)) with a, b in [1, 2].
  const Vec q = -s.truth.col("h").cwiseProduct(s.truth.col("p"));
  const Vec x1 = s.data.col("x_1"), u1 = s.data.col("u_1");
  const double centre = c.sigma_u * c.sigma_u / 3.0;
  Mat F(x1.size(), 2);
  F.col(0) = x1.cwiseProduct(u1);
  F.col(1) = x1.cwiseProduct((u1.array().square() - centre).matrix());
  const Vec ab = F.colPivHouseholderQr().solve(-q);
  CHECK((F * ab + q).lpNorm<Eigen::Infinity>() < 1e-9);
  CHECK(ab[0] >= 1.0);
  CHECK(ab[0] <= 2.0);
  CHECK(ab[1] >= 1.0);
  CHECK(ab[1] <= 2.0);
}

TEST_CASE("games: decoupled players have closed-form beliefs") {
  for (double a1 : {-1.0, 0.0, 2.5})
    for (double a2 : {-0.3, 1.7}) {
      const auto [g1, g2] = games_equilibrium(a1, a2, 0.0, 0.0);
      CHECK(g1 == doctest::Approx(oracle::logistic(a1)).epsilon(1e-14));
      CHECK(g2 == doctest::Approx(oracle::logistic(a2)).epsilon(1e-14));
    }
}

TEST_CASE("games: best-response map is a contraction for the design values") {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> a(-4, 4), gg(0, 1);
  const double d1 = -2.0, d2 = -3.0;
  for (int t = 0; t < 1000; ++t) {
    const double a1 = a(g), a2 = a(g), x = gg(g), y = gg(g);
    const double slope1 = std::abs(oracle::logistic(a1 + x * d1) - oracle::logistic(a1 + y * d1)) / std::abs(x - y);
    const double slope2 = std::abs(oracle::logistic(a2 + x * d2) - oracle::logistic(a2 + y * d2)) / std::abs(x - y);
    CHECK(slope1 <= std::abs(d1) / 4.0 + 1e-12);
    CHECK(slope2 <= 0.75 + 1e-12);
  }
}

TEST_CASE("games: equilibrium residual on every row") {
  DGPConfig c = preset(AppId::games, Scale::desk, GamesVariant::dgp2);
  c.n = 2000;
  c.p = 20;
  c.seed = 6;
  const SimData s = generate(c, 0);
  CHECK(s.equilibrium_residual < 1e-10);
  CHECK(s.theta0.size() == 21);
  CHECK(s.theta0[20] == -2.0);

  c.variant = GamesVariant::dgp1;
  const SimData s1 = generate(c, 0);
  // Player two ignores player one: its belief is a plain logistic in x.
  const Vec g = s1.truth.col("g");
  const Vec logit = g.unaryExpr([](double v) { return std::log(v / (1.0 - v)); });
  const Mat x = s1.data.block("x");
  const Vec coef = x.colPivHouseholderQr().solve(logit);
  CHECK((x * coef - logit).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("logistic treatment: class balance and null model") {
  DGPConfig c = preset(AppId::logistic_te, Scale::desk);
  c.seed = 7;
  const SimData s = generate(c, 0);
  const double rate = mean(s.data.col("y"));
  CHECK(rate > 0.3);
  CHECK(rate < 0.7);

  c.k = 0;
  c.k_alpha = 0;
  c.p = 5;
  const SimData null = generate(c, 0);
  const double r0 = mean(null.data.col("y"));
  CHECK(std::abs(r0 - 0.5) < 3.0 * 0.5 / std::sqrt(static_cast<double>(c.n)));
}

TEST_CASE("logistic treatment: lasso of tau on u finds the propensity support") {
  DGPConfig c = preset(AppId::logistic_te, Scale::paper);
  c.p = 100;
  c.seed = 8;
  const SimData s = generate(c, 0);
  FirstStageConfig fs;
  const Mat u = s.data.block("u");
  const LassoFit fit = lasso_linear(u, s.data.col("tau"), fs.lambda(c.n, u.cols(), Family::linear));
  for (Index j = 0; j < 5; ++j) CHECK(fit.coef[j] > 0.5);
  // The five largest coefficients are the true support.
  CHECK(fit.coef.head(5).minCoeff() > fit.coef.tail(95).cwiseAbs().maxCoeff());
}

TEST_CASE("generation is deterministic per seed and replication") {
  for (AppId app : {AppId::partially_linear, AppId::logistic_te, AppId::missing_data, AppId::games}) {
    const DGPConfig c = tiny(app);
    std::ostringstream a, b, d;
    generate(c, 1).data.write_csv(a);
    generate(c, 1).data.write_csv(b);
    generate(c, 2).data.write_csv(d);
    CHECK(a.str() == b.str());
    CHECK(a.str() != d.str());
  }
}

TEST_CASE("replications are reproducible and thread-count independent") {
  const DGPConfig c = tiny(AppId::missing_data, 4);
  RunOptions o = options(AppId::missing_data);
  const auto methods = default_methods(AppId::missing_data);
  const std::string one = to_csv(run_replications(c, methods, o));
  CHECK(one == to_csv(run_replications(c, methods, o)));
  o.threads = 3;
  CHECK(one == to_csv(run_replications(c, methods, o)));
}

TEST_CASE("method order does not change per-method results") {
  const DGPConfig c = tiny(AppId::partially_linear);
  const RunOptions o = options(AppId::partially_linear);
  std::vector<std::string> m = default_methods(AppId::partially_linear);
  const ReplicationReport a = run_replications(c, m, o);
  std::reverse(m.begin(), m.end());
  const ReplicationReport b = run_replications(c, m, o);
  for (const auto& name : m) CHECK(a.l2(name) == b.l2(name));
}

TEST_CASE("a single replication equals a direct run") {
  const DGPConfig c = tiny(AppId::games, 1);
  const RunOptions o = options(AppId::games);
  const ReplicationReport rep = run_replications(c, {"2sortho_lg"}, o);
  const EstimationResult r = run_method("2sortho_lg", generate(c, 0), AppId::games, o, c.seed, 0);
  REQUIRE(rep.records.size() == 1);
  CHECK(rep.records[0].l2_error == *r.l2_error);
  CHECK(rep.records[0].l1_error == *r.l1_error);
  CHECK(rep.records[0].support_size == r.support.size());
}

TEST_CASE("error metrics satisfy the norm inequality") {
  for (AppId app : {AppId::partially_linear, AppId::logistic_te, AppId::missing_data, AppId::games}) {
    const ReplicationReport rep = run_replications(tiny(app), default_methods(app), options(app));
    CHECK(rep.failures == 0);
    for (const auto& r : rep.records) {
      CHECK(r.ok);
      CHECK(r.l2_error * r.l2_error <= r.l1_error * r.linf_error * (1 + 1e-12) + 1e-300);
    }
  }
}

TEST_CASE("failures are recorded, not thrown") {
  DGPConfig c = tiny(AppId::partially_linear, 2);
  c.n = 20;
  c.p = 4;
  c.k_alpha = 2;
  const ReplicationReport rep = run_replications(c, {"ortho", "oracle_ortho"}, options(AppId::partially_linear));
  CHECK(rep.failures == 2);
  for (const auto& r : rep.records)
    if (r.method == "ortho") {
      CHECK_FALSE(r.ok);
      CHECK(r.error.find("rows") != std::string::npos);
    }
  const std::string csv = to_csv(rep);
  CHECK(csv.find("0,ortho,nan,nan,0,0\n") != std::string::npos);
}

TEST_CASE("unknown methods and oracles without truth are configuration errors") {
  const DGPConfig c = tiny(AppId::games, 1);
  CHECK_THROWS_AS(run_replications(c, {"ips"}, options(AppId::games)), ConfigError);
  CHECK_THROWS_AS(run_replications(c, {}, options(AppId::games)), ConfigError);
  SimData s = generate(c, 0);
  s.truth = NuisanceColumns{};
  CHECK_THROWS_AS(run_method("oracle_lg", s, AppId::games, options(AppId::games), 0, 0), ConfigError);
}

TEST_CASE("csv layout") {
  const ReplicationReport rep = run_replications(tiny(AppId::partially_linear, 2), {"direct", "ortho"},
                                                 options(AppId::partially_linear));
  std::istringstream is(to_csv(rep));
  std::string line;
  std::getline(is, line);
  CHECK(line == "seed,method,l1_error,l2_error,support_size,wall_ms");
  std::vector<std::string> rows;
  while (std::getline(is, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rfind("0,direct,", 0) == 0);
  CHECK(rows[1].rfind("0,ortho,", 0) == 0);
  CHECK(rows[3].rfind("1,ortho,", 0) == 0);
  // Values round-trip exactly.
  const auto first_l2 = rows[1].substr(0, rows[1].rfind(',', rows[1].rfind(',') - 1));
  const double l2 = std::stod(first_l2.substr(first_l2.rfind(',') + 1));
  CHECK(l2 == rep.records[1].l2_error);
}

TEST_CASE("summary aggregates are recomputable from the table") {
  const ReplicationReport rep =
      run_replications(tiny(AppId::missing_data, 5), {"ips", "ortho"}, options(AppId::missing_data));
  const nlohmann::json j = summary_json(rep);
  for (const std::string m : {"ips", "ortho"}) {
    std::vector<double> v = rep.l2(m);
    std::sort(v.begin(), v.end());
    CHECK(j["methods"][m]["l2_error"]["count"] == 5);
    CHECK(j["methods"][m]["l2_error"]["median"].get<double>() == v[2]);
    CHECK(j["methods"][m]["l2_error"]["min"].get<double>() == v.front());
    CHECK(j["methods"][m]["l2_error"]["max"].get<double>() == v.back());
  }
  std::vector<double> diff;
  for (std::size_t s = 0; s < 5; ++s) diff.push_back(rep.records[2 * s].l2_error - rep.records[2 * s + 1].l2_error);
  CHECK(j["pairwise_l2_decrease"]["ips-ortho"]["median"].get<double>() == median(diff));
  CHECK(j["config"]["n"] == 400);
}

TEST_CASE("quantiles interpolate linearly") {
  const std::vector<double> v{4, 1, 3, 2};
  CHECK(median(v) == 2.5);
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 4.0);
  CHECK(quantile(v, 0.25) == doctest::Approx(1.75));
  CHECK(std::isnan(median({})));
}

TEST_CASE("design overrides by key") {
  DGPConfig c = preset(AppId::games, Scale::desk);
  set_dgp_field(c, "n", "123");
  set_dgp_field(c, "k_g", "2");
  set_dgp_field(c, "sigma_x", "2.5");
  set_dgp_field(c, "dgp", "2");
  CHECK(c.n == 123);
  CHECK(c.k_alpha == 2);
  CHECK(c.sigma_x == 2.5);
  CHECK(c.variant == GamesVariant::dgp2);
  CHECK(c.delta2 == -3.0);
  CHECK_THROWS_AS(set_dgp_field(c, "n", "12x"), ConfigError);
  CHECK_THROWS_AS(set_dgp_field(c, "bogus", "1"), ConfigError);
  CHECK_THROWS_AS(set_dgp_field(c, "dgp", "3"), ConfigError);
}

TEST_CASE("sweeps vary one design field") {
  DGPConfig c = tiny(AppId::partially_linear, 2);
  const auto out = sweep(c, "k_alpha", {1, 3}, {"oracle_ortho"}, options(AppId::partially_linear));
  REQUIRE(out.size() == 2);
  CHECK(out[0].config.k_alpha == 1);
  CHECK(out[1].config.k_alpha == 3);
  const auto s2 = sweep(c, "sigma_eps", {0.5}, {"oracle_ortho"}, options(AppId::partially_linear));
  CHECK(s2[0].config.sigma_eps == 0.5);
}

TEST_CASE("diagnostics: gradients and orthogonality on small samples") {
  for (AppId app : {AppId::partially_linear, AppId::logistic_te, AppId::missing_data, AppId::games})
    CHECK(gradient_fd_check(app, 3, 1) < 1e-5);
  const OrthogonalityReport r = orthogonality_study(AppId::partially_linear, false, 20000, 1);
  CHECK(r.slope > 1.7);
  CHECK(r.slope < 2.3);
}

}  // TEST_SUITE
