#pragma once

// Estimators compared by the bounds: closed-form shrinkage and posterior
// means (each with its affine representation y -> A y + k), the SURE selector,
// an empirical-Bayes hyperparameter fit and logistic-regression estimates.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cvalue/errors.hpp"
#include "cvalue/linalg.hpp"

namespace cvalue {

/// y -> a * y + k.
struct AffineForm {
  Mat a;
  Vec k;

  [[nodiscard]] Vec apply(const Vec& y) const { return a * y + k; }

  static AffineForm identity(Eigen::Index n) { return {Mat::Identity(n, n), Vec::Zero(n)}; }
};

struct AffineEstimate {
  Vec estimate;
  AffineForm form;
};

namespace detail {

inline void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " must be positive and finite");
}

inline void require_psd(const Mat& m, const char* what) {
  require_square(m, what);
  if (!is_symmetric(m)) throw DomainError(std::string(what) + ": matrix is not symmetric");
  if (m.size() == 0) return;
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double top = std::max(0.0, eig.eigenvalues().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -kEigenClampRelative * top) {
    throw DomainError(std::string(what) + ": matrix is not positive semi-definite");
  }
}

}  // namespace detail

inline AffineEstimate mle(const Vec& y) { return {y, AffineForm::identity(y.size())}; }

/// Shrinks y toward col(X): (y + tau^{-2} H y) / (1 + tau^{-2}), H the hat matrix of X.
inline AffineEstimate morris_shrinkage(const Vec& y, const Mat& x, double tau) {
  detail::require_positive(tau, "tau");
  detail::require_same_size(y.size(), x.rows(), "morris_shrinkage design rows");
  const Eigen::Index n = y.size();
  const Mat a = Mat::Identity(n, n) - orthocomplement_projector(x) / (1.0 + tau * tau);
  return {a * y, {a, Vec::Zero(n)}};
}

/// Shrinks each coordinate toward the grand mean.
inline AffineEstimate lindley_smith(const Vec& y, double tau) {
  detail::require_positive(tau, "tau");
  const Eigen::Index n = y.size();
  const double w = 1.0 / (tau * tau);
  Vec est = (y + w * Vec::Constant(n, y.mean())) / (1.0 + w);
  Mat a = Mat::Identity(n, n) - (Mat::Identity(n, n) - Mat::Constant(n, n, 1.0 / n)) / (1.0 + tau * tau);
  return {std::move(est), {std::move(a), Vec::Zero(n)}};
}

struct JamesSteinResult {
  Vec estimate;
  /// max(0, ||Y||^2 / (N - 2) - 1).
  double tau2_hat;
};

inline JamesSteinResult james_stein(const Vec& y) {
  const Eigen::Index n = y.size();
  if (n <= 2) throw DimensionError("james_stein requires N > 2");
  const double tau2 = std::max(0.0, y.squaredNorm() / static_cast<double>(n - 2) - 1.0);
  return {(tau2 / (1.0 + tau2)) * y, tau2};
}

/// Posterior mean under theta ~ N(X beta, tau^2 I), y | theta ~ N(theta, diag(s)).
inline AffineEstimate fay_herriot_mean(const Vec& y, const Mat& x, const Vec& beta, double tau, const Vec& s) {
  detail::require_positive(tau, "tau");
  detail::require_same_size(y.size(), x.rows(), "fay_herriot_mean design rows");
  detail::require_same_size(x.cols(), beta.size(), "fay_herriot_mean beta");
  detail::require_same_size(y.size(), s.size(), "fay_herriot_mean variances");
  if (!(s.array() > 0.0).all()) throw DomainError("fay_herriot_mean: sampling variances must be positive");
  const double t2 = tau * tau;
  const Vec w_y = (t2 / (t2 + s.array())).matrix();
  const Vec w_prior = (s.array() / (t2 + s.array())).matrix();
  Vec k = w_prior.cwiseProduct(x * beta);
  Vec est = w_y.cwiseProduct(y) + k;
  return {std::move(est), {w_y.asDiagonal(), std::move(k)}};
}

struct EbFit {
  Vec beta;
  double tau;
  double sigma;
  int iterations;
};

inline constexpr int kEbMaxIterations = 500;

enum class EbScale {
  /// w are relative variances; the common factor sigma^2 is profiled out.
  kProfiled,
  /// w are the sampling variances themselves (sigma = 1).
  kKnown,
};

/// Maximum marginal likelihood for y ~ N(X beta, sigma^2 (r I + diag(w))), tau^2 = r sigma^2.
///
/// beta is the GLS estimate and sigma^2 is profiled out in closed form for
/// each r (or fixed at 1); log r is located by a coarse scan then
/// golden-section search.
inline EbFit eb_fit_fay_herriot(const Vec& y, const Mat& x, const Vec& w, EbScale scale = EbScale::kProfiled) {
  const Eigen::Index n = y.size();
  const Eigen::Index d = x.cols();
  detail::require_same_size(n, x.rows(), "eb_fit_fay_herriot design rows");
  detail::require_same_size(n, w.size(), "eb_fit_fay_herriot weights");
  if (n <= d + 2) throw DimensionError("eb_fit_fay_herriot requires N > D + 2");
  if (!(w.array() > 0.0).all()) throw DomainError("eb_fit_fay_herriot: relative variances must be positive");
  {
    Eigen::ColPivHouseholderQR<Mat> qr(x);
    if (qr.rank() < d) throw DomainError("design matrix is rank deficient");
  }

  struct Profile {
    double loglik;
    Vec beta;
    double sigma2;
  };
  const bool profiled = scale == EbScale::kProfiled;
  const auto profile = [&](double log_r) {
    const Vec v = (w.array() + std::exp(log_r)).matrix();
    const Vec inv_sqrt = v.cwiseSqrt().cwiseInverse();
    const Mat xw = inv_sqrt.asDiagonal() * x;
    const Vec yw = inv_sqrt.cwiseProduct(y);
    Vec beta = d > 0 ? Vec(xw.colPivHouseholderQr().solve(yw)) : Vec(Vec::Zero(0));
    const double rss = (yw - xw * beta).squaredNorm();
    const double sigma2 = profiled ? rss / static_cast<double>(n) : 1.0;
    const double fit = profiled ? static_cast<double>(n) * std::log(sigma2) : rss;
    const double loglik = -0.5 * (fit + v.array().log().sum());
    return Profile{loglik, std::move(beta), sigma2};
  };

  const double centre = std::log(w.mean());
  constexpr int kScan = 49;
  const double lo_edge = centre - 12.0;
  const double hi_edge = centre + 12.0;
  const double step = (hi_edge - lo_edge) / (kScan - 1);
  int best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kScan; ++i) {
    const double ll = profile(lo_edge + i * step).loglik;
    if (ll > best_ll) {
      best_ll = ll;
      best = i;
    }
  }

  double a = lo_edge + std::max(0, best - 1) * step;
  double b = lo_edge + std::min(kScan - 1, best + 1) * step;
  constexpr double inv_phi = 0.6180339887498949;
  double c = b - inv_phi * (b - a);
  double e = a + inv_phi * (b - a);
  double fc = profile(c).loglik;
  double fe = profile(e).loglik;
  int iter = 0;
  while (b - a > 1e-10) {
    if (++iter > kEbMaxIterations) throw NumericalError("eb_fit_fay_herriot did not converge in 500 iterations");
    if (fc > fe) {
      b = e;
      e = c;
      fe = fc;
      c = b - inv_phi * (b - a);
      fc = profile(c).loglik;
    } else {
      a = c;
      c = e;
      fc = fe;
      e = a + inv_phi * (b - a);
      fe = profile(e).loglik;
    }
  }
  const double log_r = 0.5 * (a + b);
  Profile fit = profile(log_r);
  return {std::move(fit.beta), std::sqrt(std::exp(log_r) * fit.sigma2), std::sqrt(fit.sigma2), iter};
}

namespace detail {

inline void require_two_source(const Vec& y, const Vec& z, double sigma_y, double sigma_z, double sigma_delta) {
  require_same_size(y.size(), z.size(), "two-source auxiliary vector");
  require_positive(sigma_y, "sigma_y");
  require_positive(sigma_z, "sigma_z");
  if (!(sigma_delta >= 0.0) || !std::isfinite(sigma_delta)) throw DomainError("sigma_delta must be >= 0");
}

}  // namespace detail

/// Per-coordinate posterior mean pooling y with an auxiliary series z that
/// shares a flat-prior common mean.
inline AffineEstimate two_source_posterior(const Vec& y, const Vec& z, double sigma_y, double sigma_z,
                                           double sigma_delta) {
  detail::require_two_source(y, z, sigma_y, sigma_z, sigma_delta);
  const double vz = 2.0 * sigma_delta * sigma_delta + sigma_z * sigma_z;
  const double vy = sigma_y * sigma_y;
  const double wy = vz / (vz + vy);
  const Eigen::Index n = y.size();
  Vec k = (vy / (vz + vy)) * z;
  Vec est = wy * y + k;
  return {std::move(est), {wy * Mat::Identity(n, n), std::move(k)}};
}

/// As two_source_posterior with additional spatially correlated deviations of covariance K.
inline AffineEstimate two_source_spatial_posterior(const Vec& y, const Vec& z, double sigma_y, double sigma_z,
                                                   double sigma_delta, const Mat& kernel) {
  detail::require_two_source(y, z, sigma_y, sigma_z, sigma_delta);
  detail::require_same_size(kernel.rows(), y.size(), "two_source_spatial_posterior kernel");
  detail::require_psd(kernel, "two_source_spatial_posterior kernel");
  const Eigen::Index n = y.size();
  const Mat id = Mat::Identity(n, n);
  const Mat b = 2.0 * kernel + (2.0 * sigma_delta * sigma_delta + sigma_z * sigma_z) * id;
  const double vy = sigma_y * sigma_y;
  Eigen::LLT<Mat> llt(b + vy * id);
  if (llt.info() != Eigen::Success) throw NumericalError("two_source_spatial_posterior: factorization failed");
  const Mat inv = llt.solve(id);
  Mat a = id - vy * inv;
  a = 0.5 * (a + a.transpose());
  Vec k = vy * (inv * z);
  Vec est = a * y + k;
  return {std::move(est), {std::move(a), std::move(k)}};
}

/// Observation location: latitude, longitude, time.
struct SpaceTime {
  double lat;
  double lon;
  double t;
};

struct SquaredExponential {
  double variance;
  double r_lat;
  double r_lon;
  double r_t;

  [[nodiscard]] double operator()(const SpaceTime& p, const SpaceTime& q) const {
    const double a = (p.lat - q.lat) / r_lat;
    const double b = (p.lon - q.lon) / r_lon;
    const double c = (p.t - q.t) / r_t;
    return variance * std::exp(-0.5 * (a * a + b * b + c * c));
  }

  void validate() const {
    detail::require_positive(variance, "kernel variance");
    detail::require_positive(r_lat, "kernel latitude length-scale");
    detail::require_positive(r_lon, "kernel longitude length-scale");
    detail::require_positive(r_t, "kernel time length-scale");
  }
};

enum class GpKernel { kMultiScale, kMesoscalePlusNugget };

/// Mesoscale and submesoscale components.
struct GpKernelParams {
  SquaredExponential meso;
  SquaredExponential submeso;
};

/// Prior covariance at the observation locations.  The nugget variant replaces
/// the submesoscale component by its variance on the diagonal, so both kernels
/// have the same marginal variance.
inline Mat gp_covariance(const std::vector<SpaceTime>& coords, GpKernel kind, const GpKernelParams& params) {
  params.meso.validate();
  params.submeso.validate();
  const auto n = static_cast<Eigen::Index>(coords.size());
  Mat k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      double v = params.meso(coords[i], coords[j]);
      if (kind == GpKernel::kMultiScale) {
        v += params.submeso(coords[i], coords[j]);
      } else if (i == j) {
        v += params.submeso.variance;
      }
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

/// Posterior mean K (K + s I)^{-1} y under a zero-mean prior with covariance K, s = sigma_eps^2.
inline AffineEstimate gp_posterior_mean_from_covariance(const Mat& k, const Vec& y, double sigma_eps) {
  detail::require_positive(sigma_eps, "sigma_eps");
  detail::require_square(k, "gp covariance");
  detail::require_same_size(k.rows(), y.size(), "gp covariance");
  const Eigen::Index n = y.size();
  const Mat id = Mat::Identity(n, n);
  const double s = sigma_eps * sigma_eps;
  Eigen::LLT<Mat> llt(k + s * id);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-8 * k.diagonal().mean();
    llt.compute(k + (s + jitter) * id);
    if (llt.info() != Eigen::Success) throw NumericalError("gp_posterior_mean: Cholesky failed after jitter");
  }
  Mat a = id - s * llt.solve(id);
  a = 0.5 * (a + a.transpose());
  Vec est = a * y;
  return {std::move(est), {std::move(a), Vec::Zero(n)}};
}

inline AffineEstimate gp_posterior_mean(const std::vector<SpaceTime>& coords, const Vec& y, GpKernel kind,
                                        const GpKernelParams& params, double sigma_eps) {
  detail::require_same_size(static_cast<Eigen::Index>(coords.size()), y.size(), "gp coordinates");
  return gp_posterior_mean_from_covariance(gp_covariance(coords, kind, params), y, sigma_eps);
}

enum class SureRule {
  /// Report the alternative when its estimated risk is below N.
  kRiskMinimizing,
  /// Report the alternative when its estimated risk exceeds N.
  kLiteral,
};

struct SureResult {
  bool alternative;
  double sure;
};

/// SURE of the Lindley-Smith estimate under Sigma = I, compared against the MLE risk N.  Ties go to the default.
inline SureResult sure_selector(const Vec& y, double tau, SureRule rule = SureRule::kRiskMinimizing) {
  detail::require_positive(tau, "tau");
  const auto n = static_cast<double>(y.size());
  const double shrink = 1.0 + tau * tau;
  const Vec g = (y.array() - y.mean()).matrix() / shrink;
  const double sure = n - 2.0 * (n - 1.0) / shrink + g.squaredNorm();
  const bool alt = rule == SureRule::kRiskMinimizing ? sure < n : sure > n;
  return {alt, sure};
}

/// Hierarchical-regression posterior mean of theta = X beta given training data
/// (Xbar, Ybar) and an auxiliary regression (W, Z) whose coefficients share a
/// flat-prior mean with beta.
struct HierRegression {
  Vec theta_hat;
  AffineEstimate posterior;
  /// Covariance of theta_hat: X (Xbar^T Xbar)^{-1} X^T.
  Mat sigma;
};

inline HierRegression hier_regression_posterior(const Mat& xbar, const Vec& ybar, const Mat& w, const Vec& z,
                                                const Mat& x, double sigma_beta) {
  detail::require_positive(sigma_beta, "sigma_beta");
  detail::require_same_size(xbar.rows(), ybar.size(), "training responses");
  detail::require_same_size(w.rows(), z.size(), "auxiliary responses");
  detail::require_same_size(xbar.cols(), w.cols(), "auxiliary covariates");
  detail::require_same_size(xbar.cols(), x.cols(), "test covariates");
  const Eigen::Index d = x.cols();
  const Eigen::Index n = x.rows();
  const Mat id = Mat::Identity(d, d);

  const Mat gram = xbar.transpose() * xbar;
  const Mat gram_inv = spd_inverse(gram, "Xbar^T Xbar");
  const Vec beta_hat = least_squares(xbar, ybar);
  const Vec eta_hat = least_squares(w, z);
  const Mat sigma_b = 2.0 * sigma_beta * sigma_beta * id + spd_inverse(w.transpose() * w, "W^T W");
  const Mat bk = (id + sigma_b * gram).partialPivLu().inverse();

  Eigen::ColPivHouseholderQR<Mat> qr(x);
  if (qr.rank() < d) throw DomainError("test design matrix is rank deficient");
  const Mat pinv = qr.solve(Mat::Identity(n, n));

  Vec theta_hat = x * beta_hat;
  Mat c = Mat::Identity(n, n) - x * bk * pinv;
  Vec l = x * (bk * eta_hat);
  Vec est = c * theta_hat + l;
  Mat sigma = x * gram_inv * x.transpose();
  sigma = 0.5 * (sigma + sigma.transpose());
  return {std::move(theta_hat), {std::move(est), {std::move(c), std::move(l)}}, std::move(sigma)};
}

struct LogisticData {
  /// M x N covariates.
  Mat x;
  /// Labels in {+1, -1}.
  Vec labels;

  LogisticData(Mat x_in, Vec labels_in) : x(std::move(x_in)), labels(std::move(labels_in)) {
    detail::require_same_size(x.rows(), labels.size(), "logistic labels");
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      if (labels(i) != 1.0 && labels(i) != -1.0) throw DomainError("logistic labels must be +1 or -1");
    }
  }
};

inline constexpr double kLogisticGradientTolerance = 1e-10;
inline constexpr int kLogisticMaxIterations = 100;
inline constexpr double kSeparationNorm = 1e3;

namespace detail {

inline double log1p_exp(double u) { return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

/// Negative log posterior with a N(0, prior_precision^{-1} I) prior (precision 0: likelihood only).
struct LogisticObjective {
  const LogisticData& data;
  double prior_precision;

  [[nodiscard]] double value(const Vec& theta) const {
    const Vec margins = data.labels.cwiseProduct(data.x * theta);
    double v = 0.0;
    for (Eigen::Index i = 0; i < margins.size(); ++i) v += log1p_exp(-margins(i));
    return v + 0.5 * prior_precision * theta.squaredNorm();
  }

  void derivatives(const Vec& theta, Vec& grad, Mat& hess) const {
    const Vec margins = data.labels.cwiseProduct(data.x * theta);
    Vec coef(margins.size());
    Vec curv(margins.size());
    for (Eigen::Index i = 0; i < margins.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(margins(i)));  // sigmoid(-margin)
      coef(i) = -data.labels(i) * p;
      curv(i) = p * (1.0 - p);
    }
    grad = data.x.transpose() * coef + prior_precision * theta;
    hess = data.x.transpose() * curv.asDiagonal() * data.x;
    hess.diagonal().array() += prior_precision;
  }
};

inline Vec logistic_newton(const LogisticData& data, double prior_precision) {
  const Eigen::Index n = data.x.cols();
  const LogisticObjective obj{data, prior_precision};
  Vec theta = Vec::Zero(n);
  Vec grad;
  Mat hess;
  double f = obj.value(theta);
  for (int iter = 0; iter < kLogisticMaxIterations; ++iter) {
    obj.derivatives(theta, grad, hess);
    if (grad.norm() <= kLogisticGradientTolerance) return theta;
    Eigen::LDLT<Mat> ldlt(hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw NumericalError("logistic Newton: Hessian is singular (collinear covariates?)");
    }
    const Vec step = ldlt.solve(grad);
    // Objective values near the optimum agree only to rounding.
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
    double t = 1.0;
    Vec next = theta - step;
    double f_next = obj.value(next);
    while (!(f_next <= f + slack) && t > 1e-12) {
      t *= 0.5;
      next = theta - t * step;
      f_next = obj.value(next);
    }
    if (!(f_next <= f + slack)) throw NumericalError("logistic Newton: line search failed");
    theta = std::move(next);
    f = f_next;
    if (theta.norm() > kSeparationNorm) {
      throw NumericalError("logistic MLE diverged (||theta|| > 1e3): data appear linearly separable");
    }
  }
  obj.derivatives(theta, grad, hess);
  if (grad.norm() <= kLogisticGradientTolerance) return theta;
  throw NumericalError("logistic Newton: iteration cap reached");
}

}  // namespace detail

inline Vec logistic_mle(const LogisticData& data) {
  if (data.x.rows() < data.x.cols()) throw DimensionError("logistic_mle requires M >= N");
  Vec theta = detail::logistic_newton(data, 0.0);
  // Every margin positive: scaling theta up keeps lowering the loss, so no finite maximizer exists.
  if (data.x.rows() > 0 && (data.labels.cwiseProduct(data.x * theta).array() > 0.0).all()) {
    throw NumericalError("logistic MLE does not exist: data are linearly separable");
  }
  return theta;
}

/// MAP under a standard normal prior.
inline Vec logistic_map(const LogisticData& data) { return detail::logistic_newton(data, 1.0); }

/// Laplace approximation at the MLE combined with the N(0, I) prior.
struct LogisticLaplace {
  Vec mle;
  /// Inverse Hessian of the negative log-likelihood at the MLE.
  Mat sigma;
  /// (I + sigma)^{-1}.
  Mat c;
  /// c * mle.
  Vec estimate;
};

inline LogisticLaplace logistic_laplace_affine(const LogisticData& data) {
  Vec theta = logistic_mle(data);
  const detail::LogisticObjective obj{data, 0.0};
  Vec grad;
  Mat hess;
  obj.derivatives(theta, grad, hess);
  const Eigen::Index n = theta.size();
  Mat sigma = spd_inverse(hess, "logistic Hessian");
  sigma = 0.5 * (sigma + sigma.transpose());
  Mat c = spd_inverse(Mat::Identity(n, n) + sigma, "I + Sigma");
  c = 0.5 * (c + c.transpose());
  Vec est = c * theta;
  return {std::move(theta), std::move(sigma), std::move(c), std::move(est)};
}

}  // namespace cvalue
