#pragma once

// Exact win lower bounds for shrinkage toward a linear subspace under
// y ~ N(theta, sigma^2 I).
//
// Default:      y
// Alternative:  y - (1 + tau^2/sigma^2)^{-1} P y,   P = projector onto col(X)^perp
//
// X = 1_N gives the Lindley-Smith estimate; X with zero columns shrinks to the
// origin.

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

#include "cvalue/core.hpp"
#include "cvalue/errors.hpp"
#include "cvalue/linalg.hpp"
#include "cvalue/special_fn.hpp"

namespace cvalue {

struct SubspaceShrinkageSpec {
  Vec y;
  Mat x;
  double tau = 1.0;
  double sigma = 1.0;

  SubspaceShrinkageSpec(Vec y_in, Mat x_in, double tau_in, double sigma_in = 1.0)
      : y(std::move(y_in)), x(std::move(x_in)), tau(tau_in), sigma(sigma_in) {
    detail::require_same_size(y.size(), x.rows(), "SubspaceShrinkageSpec design rows");
    if (x.cols() >= y.size()) throw DimensionError("SubspaceShrinkageSpec: need N > D");
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw DomainError("SubspaceShrinkageSpec: tau must be finite and >= 0");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("SubspaceShrinkageSpec: sigma must be positive");
  }

  /// Lindley-Smith: shrink toward the grand mean.
  static SubspaceShrinkageSpec grand_mean(Vec y, double tau, double sigma = 1.0) {
    const auto n = y.size();
    return {std::move(y), Mat::Ones(n, 1), tau, sigma};
  }
  /// Shrink toward the origin.
  static SubspaceShrinkageSpec origin(Vec y, double tau, double sigma = 1.0) {
    const auto n = y.size();
    return {std::move(y), Mat(n, 0), tau, sigma};
  }

  [[nodiscard]] int df() const noexcept { return static_cast<int>(y.size() - x.cols()); }
};

/// One-sided upper confidence limit for ||P theta||^2 (in the units of y^2).
struct NoncentralityInterval {
  double upper;
  Probability level;
};

struct SubspaceBoundDetail {
  double bound;
  /// Objective at lambda = U.
  double endpoint_value;
  /// Smallest objective seen by the golden-section sweep over [0, U] (includes lambda = 0).
  double sweep_value;
  /// U in unit-noise coordinates.
  double upper;
  /// True when the sweep found a value below the endpoint by more than the tolerance.
  bool interior_minimum;
};

namespace detail {

inline constexpr double kGoldenRelativeTolerance = 1e-8;

/// inf { delta >= 0 : P[chi^2_df(delta) <= r2] <= level }.
///
/// The CDF is decreasing in delta with derivative -f_{df+2}(r2; delta), so the
/// root is polished with Newton steps kept inside a bisection bracket.
inline double noncentrality_root(double r2, int df, double level) {
  if (!(r2 >= 0.0) || !std::isfinite(r2)) throw DomainError("noncentrality_root: residual must be finite and >= 0");
  const auto cdf = [&](double delta) { return ncchisq_cdf(r2, ChiSqParams(df, delta)); };
  if (r2 == 0.0 || cdf(0.0) <= level) return 0.0;

  double lo = 0.0;
  double hi = std::min(std::max(r2, 1.0), kMaxNoncentrality);
  while (cdf(hi) > level) {
    if (hi >= kMaxNoncentrality) {
      throw RangeError("noncentrality upper bound exceeds the supported envelope (lambda <= " +
                       std::to_string(kMaxNoncentrality) + ")");
    }
    lo = hi;
    hi = std::min(2.0 * hi, kMaxNoncentrality);
  }

  double delta = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const auto here = ncchisq_cdf_pdf(r2, df, delta);
    const double diff = here.cdf - level;
    if (diff > 0.0) {
      lo = delta;
    } else {
      hi = delta;
    }
    const double tol = 1e-12 * std::max(1.0, delta);
    if (diff == 0.0 || hi - lo <= tol) break;
    const double slope = ncchisq_cdf_pdf(r2, df + 2, delta).pdf;
    double next = slope > 0.0 ? delta + diff / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool small_step = std::abs(next - delta) <= tol;
    delta = next;
    if (small_step) break;
  }
  return delta;
}

inline void require_bound_level(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in [0, 1)");
}

}  // namespace detail

/// Bound S for a fixed dataset.  The residual ||P y||^2 is computed once; each
/// call evaluates the bound at one level.
class SubspaceShrinkageBound {
 public:
  explicit SubspaceShrinkageBound(const SubspaceShrinkageSpec& spec)
      : SubspaceShrinkageBound((orthocomplement_projector(spec.x) * spec.y).squaredNorm(), spec.df(), spec.tau,
                               spec.sigma) {}

  /// From the sufficient statistic directly.  tau and sigma in the units of y.
  SubspaceShrinkageBound(double residual_sq, int df, double tau, double sigma)
      : residual_sq_(residual_sq), df_(df), tau_(tau), sigma_(sigma) {
    if (!(residual_sq >= 0.0) || !std::isfinite(residual_sq)) throw DomainError("residual must be finite and >= 0");
    if (df < 1) throw DimensionError("need N > D");
    if (df > kMaxDegreesOfFreedom) {
      throw RangeError("N - D exceeds the supported envelope (" + std::to_string(kMaxDegreesOfFreedom) + ")");
    }
    if (!(tau >= 0.0) || !(sigma > 0.0)) throw DomainError("tau must be >= 0 and sigma > 0");
  }

  [[nodiscard]] double residual_sq() const noexcept { return residual_sq_; }
  [[nodiscard]] int df() const noexcept { return df_; }

  [[nodiscard]] NoncentralityInterval noncentrality_upper_bound(Probability level) const {
    if (level.value() <= 0.0 || level.value() >= 1.0) throw DomainError("level must lie in (0, 1)");
    const double s2 = sigma_ * sigma_;
    return {s2 * detail::noncentrality_root(residual_sq_ / s2, df_, level.value()), level};
  }

  [[nodiscard]] SubspaceBoundDetail evaluate(double alpha) const {
    return evaluate_at(alpha, sigma_, tau_ / sigma_);
  }

  double operator()(double alpha) const { return evaluate(alpha).bound; }

  /// Bound when the noise scale is `sigma` but the estimator keeps the shrinkage
  /// factor implied by the nominal sigma.
  [[nodiscard]] SubspaceBoundDetail evaluate_at(double alpha, double sigma, double tau_unit) const {
    detail::require_bound_level(alpha);
    const double s2 = sigma * sigma;
    const double r2 = residual_sq_ / s2;
    const double p = 0.5 * (1.0 - alpha);
    const double upper = detail::noncentrality_root(r2, df_, p);
    const double shrink = 1.0 + tau_unit * tau_unit;

    const auto objective = [&](double lambda) {
      return (2.0 / shrink) * ncchisq_quantile(Probability(p), ChiSqParams(df_, 0.25 * lambda)) -
             lambda / (2.0 * shrink) - r2 / (shrink * shrink);
    };

    const double endpoint = objective(upper);
    double sweep = objective(0.0);
    if (upper > 0.0) {
      constexpr double inv_phi = 0.6180339887498949;
      double a = 0.0;
      double b = upper;
      double c = b - inv_phi * (b - a);
      double d = a + inv_phi * (b - a);
      double fc = objective(c);
      double fd = objective(d);
      while (b - a > detail::kGoldenRelativeTolerance * std::max(1.0, upper)) {
        if (fc < fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - inv_phi * (b - a);
          fc = objective(c);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + inv_phi * (b - a);
          fd = objective(d);
        }
      }
      sweep = std::min({sweep, fc, fd});
    }

    const double tol = detail::kGoldenRelativeTolerance * std::max(1.0, std::abs(endpoint));
    SubspaceBoundDetail out{};
    out.endpoint_value = s2 * endpoint;
    out.sweep_value = s2 * sweep;
    out.upper = upper;
    out.interior_minimum = sweep < endpoint - tol;
    out.bound = s2 * std::min(endpoint, sweep);
    return out;
  }

  [[nodiscard]] double tau() const noexcept { return tau_; }
  [[nodiscard]] double sigma() const noexcept { return sigma_; }

 private:
  double residual_sq_;
  int df_;
  double tau_;
  double sigma_;
};

inline NoncentralityInterval noncentrality_upper_bound(const SubspaceShrinkageSpec& spec, Probability level) {
  return SubspaceShrinkageBound(spec).noncentrality_upper_bound(level);
}

/// b(y, alpha) for the subspace-shrinkage alternative against y.
inline double subspace_bound(const SubspaceShrinkageSpec& spec, Probability alpha) {
  return SubspaceShrinkageBound(spec)(alpha.value());
}

inline LowerBoundEvaluator subspace_bound_evaluator(const SubspaceShrinkageSpec& spec) {
  return LowerBoundEvaluator([bound = SubspaceShrinkageBound(spec)](double alpha) { return bound(alpha); });
}

/// Estimates from the spec: {default, alternative}.
inline ComparisonProblem subspace_comparison(const SubspaceShrinkageSpec& spec) {
  const double shrink = 1.0 + (spec.tau * spec.tau) / (spec.sigma * spec.sigma);
  Vec alt = spec.y - (orthocomplement_projector(spec.x) * spec.y) / shrink;
  return {spec.y, spec.y, std::move(alt)};
}

/// Confidence interval [lo, hi] for the noise scale sigma.  `miscoverage` is the
/// probability it fails to contain sigma; unset means (1 - alpha) / 3.
struct SigmaInterval {
  double lo;
  double hi;
  std::optional<double> miscoverage;
};

inline constexpr int kSigmaCoarseGrid = 33;

/// Infimum over sigma in [lo, hi] of the subspace bound at the reduced level
/// alpha' = alpha + m, where m is the interval's miscoverage.  The estimator's
/// shrinkage factor stays at the value implied by spec.sigma.
inline double unknown_variance_bound(const SubspaceShrinkageSpec& spec, const SigmaInterval& interval,
                                     Probability alpha) {
  if (!(interval.lo > 0.0) || !(interval.hi >= interval.lo) || !std::isfinite(interval.hi)) {
    throw DomainError("sigma interval must satisfy 0 < lo <= hi");
  }
  const double a = alpha.value();
  const double m = interval.miscoverage.value_or((1.0 - a) / 3.0);
  if (!(m >= 0.0) || a + m >= 1.0) throw DomainError("sigma-interval miscoverage exhausts the confidence budget");
  const double reduced = a + m;

  const SubspaceShrinkageBound core(spec);
  const double tau_unit = spec.tau / spec.sigma;
  const auto at = [&](double sigma) { return core.evaluate_at(reduced, sigma, tau_unit).bound; };

  if (interval.hi == interval.lo) return at(interval.lo);

  const double step = (interval.hi - interval.lo) / (kSigmaCoarseGrid - 1);
  int best = 0;
  double best_value = at(interval.lo);
  for (int i = 1; i < kSigmaCoarseGrid; ++i) {
    const double v = at(interval.lo + i * step);
    if (v < best_value) {
      best_value = v;
      best = i;
    }
  }

  double lo = interval.lo + std::max(0, best - 1) * step;
  double hi = interval.lo + std::min(kSigmaCoarseGrid - 1, best + 1) * step;
  constexpr double inv_phi = 0.6180339887498949;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = at(c);
  double fd = at(d);
  while (hi - lo > 1e-10 * interval.hi) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = at(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = at(d);
    }
  }
  return std::min({best_value, fc, fd, at(interval.hi)});
}

}  // namespace cvalue
