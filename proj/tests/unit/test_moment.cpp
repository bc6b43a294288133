#include "plugreg/errors.hpp"
#include "plugreg/moment.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace plugreg;

namespace {

// m = t - y with w = (y), gamma = (unused); K = (t - y)^2 / 2.
SingleIndexMoment squared() {
  SingleIndexMoment mo;
  mo.m = [](Row w, double t, Row) { return t - w[0]; };
  mo.dm_dt = [](Row, double, Row) { return 1.0; };
  mo.K = [](Row w, double t, Row) { return 0.5 * (t - w[0]) * (t - w[0]); };
  mo.monotone_in_t = true;
  return mo;
}

LossInputs small_inputs() {
  LossInputs in;
  in.w.resize(3, 1);
  in.w << 1.0, -2.0, 0.5;
  in.gamma = RowMat::Zero(3, 1);
  in.lambda.resize(3, 2);
  in.lambda << 1, 0, 0, 2, 1, 1;
  return in;
}

}  // namespace

TEST_SUITE("moment") {

TEST_CASE("composite loss value and gradient by hand") {
  const CompositeLoss loss(squared(), small_inputs());
  Vec th(2);
  th << 1.0, -0.5;
  // t = (1, -1, 0.5); residuals t - y = (0, 1, 0).
  CHECK(loss.value(th) == doctest::Approx((0.0 + 0.5 + 0.0) / 3.0));
  const Vec g = loss.gradient(th);
  CHECK(g[0] == doctest::Approx(0.0));
  CHECK(g[1] == doctest::Approx(2.0 / 3.0));
  const auto [v, g2] = loss.value_gradient(th);
  CHECK(v == loss.value(th));
  CHECK((g2 - g).norm() == 0.0);
  CHECK_FALSE(loss.corrected());
}

TEST_CASE("correction adds alpha times the index") {
  LossInputs in = small_inputs();
  OrthogonalCorrection c;
  c.h = Vec::Constant(3, 2.0);
  c.I = Vec::Constant(3, -1.0);
  c.R = [](Row w, Row) { return w[0]; };
  const CompositeLoss loss = orthogonalize(squared(), c, in);
  REQUIRE(loss.corrected());
  // alpha_i = -h R / I = 2 y_i
  CHECK((*loss.alpha() - Vec(Eigen::Vector3d(2.0, -4.0, 1.0))).norm() == 0.0);
  Vec th(2);
  th << 1.0, -0.5;
  const double t_alpha = (2.0 * 1.0 + -4.0 * -1.0 + 1.0 * 0.5) / 3.0;
  CHECK(loss.value(th) == doctest::Approx(0.5 / 3.0 + t_alpha));
  CHECK(loss.uncorrected().value(th) == doctest::Approx(0.5 / 3.0));
}

TEST_CASE("gradient matches finite differences on random probes") {
  std::mt19937_64 g(2);
  std::normal_distribution<double> z;
  LossInputs in;
  in.w.resize(40, 1);
  in.gamma = RowMat::Zero(40, 1);
  in.lambda.resize(40, 4);
  for (Index i = 0; i < 40; ++i) {
    in.w(i, 0) = z(g);
    for (Index j = 0; j < 4; ++j) in.lambda(i, j) = z(g);
  }
  SingleIndexMoment lg;
  lg.m = [](Row w, double t, Row) { return oracle::logistic(t) - (w[0] > 0); };
  lg.K = [](Row w, double t, Row) { return std::log1p(std::exp(t)) - (w[0] > 0) * t; };
  lg.monotone_in_t = true;
  const CompositeLoss loss(lg, in, Vec::Constant(40, 0.1));
  for (int k = 0; k < 5; ++k) {
    Vec th(4);
    for (Index j = 0; j < 4; ++j) th[j] = z(g);
    const Vec fd = oracle::fd_gradient([&](const Vec& a) { return loss.value(a); }, th);
    CHECK((loss.gradient(th) - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("per-observation gradients average to the gradient") {
  const CompositeLoss loss(squared(), small_inputs(), Vec::Constant(3, 0.25));
  Vec th(2);
  th << 0.3, 0.7;
  const RowMat per = loss.per_observation_gradients(th);
  CHECK((Vec(per.colwise().mean().transpose()) - loss.gradient(th)).norm() < 1e-15);
}

TEST_CASE("subset restricts every input") {
  const CompositeLoss loss(squared(), small_inputs(), Vec(Eigen::Vector3d(1.0, 2.0, 3.0)));
  const CompositeLoss s = loss.subset({2, 0});
  CHECK(s.rows() == 2);
  CHECK((*s.alpha())[0] == 3.0);
  CHECK((*s.alpha())[1] == 1.0);
  CHECK_THROWS_AS(loss.subset({5}), DataError);
}

TEST_CASE("singular correction names the observation") {
  OrthogonalCorrection c;
  c.h = Vec::Ones(3);
  c.I = Vec(Eigen::Vector3d(-1.0, 1e-4, 2.0));
  c.R = [](Row, Row) { return 1.0; };
  try {
    orthogonalize(squared(), c, small_inputs());
    FAIL("expected SingularCorrection");
  } catch (const SingularCorrection& e) {
    CHECK(e.row() == 1);
  }
  CHECK_NOTHROW(orthogonalize(squared(), c, small_inputs(), 1e-5));
}

TEST_CASE("non-finite inputs are rejected with their row") {
  LossInputs in = small_inputs();
  in.gamma(2, 0) = std::nan("");
  try {
    CompositeLoss(squared(), in);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.row() == 2);
  }
  LossInputs short_w = small_inputs();
  short_w.w.resize(2, 1);
  CHECK_THROWS_AS(CompositeLoss(squared(), short_w), DataError);
  CHECK_THROWS_AS(CompositeLoss(squared(), small_inputs()).value(Vec::Zero(3)), InvalidArgument);
}

TEST_CASE("log-log slope matches least squares") {
  const std::vector<double> x{0.05, 0.1, 0.2, 0.4}, y{3e-3, 1.1e-2, 4.5e-2, 0.17};
  CHECK(log_log_slope(x, y) == doctest::Approx(oracle::loglog_slope(x, y)).epsilon(1e-12));
  const std::vector<double> quad{0.0025, 0.01, 0.04, 0.16};
  CHECK(log_log_slope(x, quad) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("orthogonality check recovers the order of a synthetic family") {
  // grad L(theta0, g_r) = mean_i (noise_i + c r^k) for a fixed noise draw.
  std::mt19937_64 g(8);
  std::normal_distribution<double> z;
  const Index n = 5000;
  Vec noise(n);
  for (Index i = 0; i < n; ++i) noise[i] = z(g);
  auto family_of_order = [&](int k) -> PerturbedLoss {
    return [&, k](double r) {
      LossInputs in;
      in.w = RowMat(n, 1);
      in.w.col(0) = noise.array() + std::pow(r, k);
      in.gamma = RowMat::Zero(n, 1);
      in.lambda = RowMat::Ones(n, 1);
      SingleIndexMoment mo;
      mo.m = [](Row w, double t, Row) { return t - w[0]; };
      mo.K = [](Row w, double t, Row) { return 0.5 * (t - w[0]) * (t - w[0]); };
      return CompositeLoss(mo, in);
    };
  };
  const Vec theta0 = Vec::Zero(1);
  const std::vector<double> grid{0.05, 0.1, 0.2, 0.4};
  const auto second = orthogonality_check(family_of_order(2), theta0, grid);
  CHECK(second.slope == doctest::Approx(2.0).epsilon(1e-9));
  CHECK_FALSE(second.degenerate);
  const auto first = orthogonality_check(family_of_order(1), theta0, grid);
  CHECK(first.slope == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS(orthogonality_check(family_of_order(2), theta0, {0.1, 0.2}));
}

TEST_CASE("orthogonality check flags a family that never leaves the noise") {
  const Index n = 1000;
  std::mt19937_64 g(3);
  std::normal_distribution<double> z;
  Vec noise(n), drift(n);
  for (Index i = 0; i < n; ++i) noise[i] = z(g), drift[i] = z(g);
  drift.array() -= drift.mean();
  // The perturbation only moves zero-mean noise: no systematic signal at any r.
  const PerturbedLoss flat = [&](double r) {
    LossInputs in;
    in.w = RowMat(n, 1);
    in.w.col(0) = noise + r * drift;
    in.gamma = RowMat::Zero(n, 1);
    in.lambda = RowMat::Ones(n, 1);
    SingleIndexMoment mo;
    mo.m = [](Row w, double t, Row) { return t - w[0]; };
    mo.K = [](Row w, double t, Row) { return 0.5 * (t - w[0]) * (t - w[0]); };
    return CompositeLoss(mo, in);
  };
  CHECK(orthogonality_check(flat, Vec::Zero(1), {0.05, 0.1, 0.2, 0.4}).degenerate);
}

}  // TEST_SUITE
