#include "plugreg/moment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "plugreg/errors.hpp"

namespace plugreg {

namespace {

Row row_of(const RowMat& m, Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

void check_inputs(const SingleIndexMoment& moment, const LossInputs& in) {
  if (!moment.m || !moment.K) throw InvalidArgument("moment needs both m and K");
  const Index n = in.lambda.rows();
  if (in.w.rows() != n) throw DataError("w-records cover " + std::to_string(in.w.rows()) +
                                        " rows, loadings cover " + std::to_string(n));
  if (in.gamma.rows() != n)
    throw DataError("nuisance evaluations missing", static_cast<std::size_t>(std::min(in.gamma.rows(), n)));
  for (Index i = 0; i < n; ++i) {
    if (!in.gamma.row(i).allFinite())
      throw DataError("nuisance evaluation missing or non-finite", static_cast<std::size_t>(i));
    if (!in.w.row(i).allFinite() || !in.lambda.row(i).allFinite())
      throw DataError("non-finite observation", static_cast<std::size_t>(i));
  }
}

}  // namespace

CompositeLoss::CompositeLoss(SingleIndexMoment moment, LossInputs inputs, std::optional<Vec> alpha) {
  check_inputs(moment, inputs);
  if (alpha) {
    if (alpha->size() != inputs.lambda.rows()) throw DataError("correction has wrong length");
    if (!alpha->allFinite()) throw DataError("non-finite correction term");
  }
  data_ = std::make_shared<const Data>(Data{std::move(moment), std::move(inputs), std::move(alpha)});
}

Vec CompositeLoss::index(const Vec& theta) const {
  if (theta.size() != dim()) throw InvalidArgument("theta has wrong dimension");
  return data_->in.lambda * theta;
}

Vec CompositeLoss::scores(const Vec& t) const {
  const auto& in = data_->in;
  Vec s(t.size());
  for (Index i = 0; i < t.size(); ++i) s[i] = data_->moment.m(row_of(in.w, i), t[i], row_of(in.gamma, i));
  if (data_->alpha) s += *data_->alpha;
  return s;
}

double CompositeLoss::value(const Vec& theta) const {
  const auto& in = data_->in;
  const Vec t = index(theta);
  Vec terms(t.size());
  for (Index i = 0; i < t.size(); ++i) terms[i] = data_->moment.K(row_of(in.w, i), t[i], row_of(in.gamma, i));
  if (data_->alpha) terms += data_->alpha->cwiseProduct(t);
  return pairwise_mean(as_span(terms));
}

Vec CompositeLoss::gradient(const Vec& theta) const {
  const Vec s = scores(index(theta));
  return data_->in.lambda.transpose() * s / static_cast<double>(rows());
}

std::pair<double, Vec> CompositeLoss::value_gradient(const Vec& theta) const {
  const auto& in = data_->in;
  const Vec t = index(theta);
  Vec terms(t.size());
  Vec s(t.size());
  for (Index i = 0; i < t.size(); ++i) {
    const Row w = row_of(in.w, i);
    const Row g = row_of(in.gamma, i);
    terms[i] = data_->moment.K(w, t[i], g);
    s[i] = data_->moment.m(w, t[i], g);
  }
  if (data_->alpha) {
    terms += data_->alpha->cwiseProduct(t);
    s += *data_->alpha;
  }
  return {pairwise_mean(as_span(terms)), in.lambda.transpose() * s / static_cast<double>(rows())};
}

RowMat CompositeLoss::per_observation_gradients(const Vec& theta) const {
  const Vec s = scores(index(theta));
  return s.asDiagonal() * data_->in.lambda;
}

CompositeLoss CompositeLoss::uncorrected() const { return CompositeLoss(data_->moment, data_->in); }

CompositeLoss CompositeLoss::subset(const std::vector<std::size_t>& rows) const {
  const auto& in = data_->in;
  LossInputs out{RowMat(static_cast<Index>(rows.size()), in.w.cols()),
                 RowMat(static_cast<Index>(rows.size()), in.gamma.cols()),
                 RowMat(static_cast<Index>(rows.size()), in.lambda.cols())};
  std::optional<Vec> alpha;
  if (data_->alpha) alpha = Vec(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = static_cast<Index>(rows[k]);
    if (i >= this->rows()) throw DataError("loss subset row out of range", rows[k]);
    const auto r = static_cast<Index>(k);
    out.w.row(r) = in.w.row(i);
    out.gamma.row(r) = in.gamma.row(i);
    out.lambda.row(r) = in.lambda.row(i);
    if (alpha) (*alpha)[r] = (*data_->alpha)[i];
  }
  return CompositeLoss(data_->moment, std::move(out), std::move(alpha));
}

ObjectiveHandle CompositeLoss::objective() const {
  ObjectiveHandle h;
  const CompositeLoss self = *this;
  h.value = [self](const Vec& th) { return self.value(th); };
  h.grad = [self](const Vec& th) { return self.gradient(th); };
  h.value_grad = [self](const Vec& th) { return self.value_gradient(th); };
  h.dim = dim();
  return h;
}

Vec correction_terms(const OrthogonalCorrection& corr, const LossInputs& in, double floor) {
  if (!(floor > 0.0)) throw InvalidArgument("correction floor must be positive");
  if (!corr.R) throw InvalidArgument("correction needs a residual function");
  const Index n = in.w.rows();
  if (corr.h.size() != n || corr.I.size() != n) throw DataError("correction components have wrong length");
  Vec alpha(n);
  for (Index i = 0; i < n; ++i) {
    if (!(std::abs(corr.I[i]) >= floor))
      throw SingularCorrection("|I(z)| below floor " + std::to_string(floor), static_cast<std::size_t>(i));
    alpha[i] = -corr.h[i] * corr.R(row_of(in.w, i), row_of(in.gamma, i)) / corr.I[i];
  }
  return alpha;
}

CompositeLoss orthogonalize(const SingleIndexMoment& moment, const OrthogonalCorrection& corr,
                            LossInputs inputs, double floor) {
  Vec alpha = correction_terms(corr, inputs, floor);
  return CompositeLoss(moment, std::move(inputs), std::move(alpha));
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("slope fit needs matching samples");
  double mx = 0.0, my = 0.0;
  const double k = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / k;
    my += std::log(y[i]) / k;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

OrthogonalityReport orthogonality_check(const PerturbedLoss& family, const Vec& theta0,
                                        const std::vector<double>& r_grid) {
  if (r_grid.size() < 4) throw InvalidArgument("orthogonality check needs at least 4 radii");
  for (double r : r_grid)
    if (!(r > 0.0)) throw InvalidArgument("orthogonality radii must be positive");
  const auto [lo, hi] = std::minmax_element(r_grid.begin(), r_grid.end());
  if (*hi < 8.0 * *lo) throw InvalidArgument("orthogonality radii must span a factor of at least 8");

  const RowMat base = family(0.0).per_observation_gradients(theta0);
  const double n = static_cast<double>(base.rows());

  OrthogonalityReport rep;
  rep.r = r_grid;
  rep.degenerate = true;
  for (double r : r_grid) {
    const RowMat diff = family(r).per_observation_gradients(theta0) - base;
    const Eigen::RowVectorXd mean = diff.colwise().mean();
    const Eigen::RowVectorXd sd =
        ((diff.rowwise() - mean).colwise().squaredNorm() / std::max(1.0, n - 1.0)).cwiseSqrt();
    const double value = mean.cwiseAbs().maxCoeff();
    const double floor = 3.0 * sd.maxCoeff() / std::sqrt(n);
    rep.values.push_back(value);
    rep.noise_floor.push_back(floor);
    if (value > floor) rep.degenerate = false;
  }
  if (!rep.degenerate) {
    std::vector<double> vals;
    for (double v : rep.values) vals.push_back(std::max(v, std::numeric_limits<double>::min()));
    rep.slope = log_log_slope(rep.r, vals);
  }
  return rep;
}

}  // namespace plugreg
