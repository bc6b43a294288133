#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "plugreg/linalg.hpp"
#include "plugreg/solver.hpp"

namespace plugreg {

using Row = std::span<const double>;

/// Conditional moment m(w, t, gamma) that depends on theta only through the
/// single index t = Lambda(z, gamma)'theta, with its t-derivative and the
/// loss integrand K (dK/dt = m).
struct SingleIndexMoment {
  std::function<double(Row w, double t, Row gamma)> m;
  std::function<double(Row w, double t, Row gamma)> dm_dt;
  std::function<double(Row w, double t, Row gamma)> K;
  bool monotone_in_t = false;
};

/// Correction alpha = -h(z) R(w, gamma) / I(z). h and I are conditional
/// expectations, supplied already evaluated at each observation.
struct OrthogonalCorrection {
  Vec h;
  Vec I;
  std::function<double(Row w, Row gamma)> R;
};

/// Per-observation inputs of a loss: w-records, nuisance values and the
/// index loadings Lambda(z_i, gamma_i) (one row per observation).
struct LossInputs {
  RowMat w;
  RowMat gamma;
  RowMat lambda;
};

inline constexpr double kDefaultCorrectionFloor = 1e-3;

/// L(theta) = mean_i K(w_i, Lambda_i'theta, gamma_i) + alpha_i Lambda_i'theta.
/// Cheap to copy; copies share the immutable inputs.
class CompositeLoss {
 public:
  CompositeLoss(SingleIndexMoment moment, LossInputs inputs, std::optional<Vec> alpha = {});

  Index dim() const noexcept { return data_->in.lambda.cols(); }
  Index rows() const noexcept { return data_->in.lambda.rows(); }
  bool corrected() const noexcept { return data_->alpha.has_value(); }
  const std::optional<Vec>& alpha() const noexcept { return data_->alpha; }
  const SingleIndexMoment& moment() const noexcept { return data_->moment; }
  const LossInputs& inputs() const noexcept { return data_->in; }

  double value(const Vec& theta) const;
  Vec gradient(const Vec& theta) const;
  std::pair<double, Vec> value_gradient(const Vec& theta) const;

  /// Row i holds [m_i + alpha_i] Lambda_i; the gradient is the column mean.
  RowMat per_observation_gradients(const Vec& theta) const;

  /// Same moment and inputs with the correction dropped.
  CompositeLoss uncorrected() const;

  /// Loss restricted to the given observations.
  CompositeLoss subset(const std::vector<std::size_t>& rows) const;

  ObjectiveHandle objective() const;

 private:
  struct Data {
    SingleIndexMoment moment;
    LossInputs in;
    std::optional<Vec> alpha;
  };
  Vec index(const Vec& theta) const;
  Vec scores(const Vec& t) const;

  std::shared_ptr<const Data> data_;
};

/// alpha_i = -h_i R(w_i, gamma_i) / I_i. Throws SingularCorrection naming the
/// first observation with |I_i| < floor.
Vec correction_terms(const OrthogonalCorrection& corr, const LossInputs& inputs,
                     double floor = kDefaultCorrectionFloor);

/// Builds the orthogonalized loss [m + alpha] Lambda from a raw moment.
CompositeLoss orthogonalize(const SingleIndexMoment& moment, const OrthogonalCorrection& corr,
                            LossInputs inputs, double floor = kDefaultCorrectionFloor);

/// Loss at nuisance g0 + r (g_dir - g0) on a fixed sample.
using PerturbedLoss = std::function<CompositeLoss(double r)>;

struct OrthogonalityReport {
  std::vector<double> r;
  std::vector<double> values;       // ||grad L(theta0, g_r) - grad L(theta0, g0)||_inf
  std::vector<double> noise_floor;  // 3 * max_j sd_j / sqrt(n)
  double slope = 0.0;               // least-squares slope of log values on log r
  bool degenerate = false;          // every value at or below its noise floor
};

/// Estimates ||E grad L(theta0, g0 + r (g_dir - g0))||_inf on the sample held
/// by `family`. The r = 0 gradient (mean zero at the truth) is subtracted as a
/// control variate, so the same draws serve every r.
OrthogonalityReport orthogonality_check(const PerturbedLoss& family, const Vec& theta0,
                                        const std::vector<double>& r_grid);

/// Least-squares slope of log(y) on log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace plugreg
