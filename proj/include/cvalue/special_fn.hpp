#pragma once

// Standard normal and (non-central) chi-squared distribution functions.
//
// The non-central chi-squared CDF is evaluated as a Poisson mixture of central
// chi-squared CDFs.  The central terms are generated by the recurrence
//   P(a + 1, h) = P(a, h) - h^a e^{-h} / Gamma(a + 1)
// so a single incomplete-gamma evaluation serves the whole series.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cvalue/errors.hpp"

namespace cvalue {

/// A real number in [0, 1].
class Probability {
 public:
  explicit Probability(double p) : p_(p) {
    if (!(p >= 0.0 && p <= 1.0)) {
      std::ostringstream msg;
      msg << "probability out of [0,1]: " << p;
      throw DomainError(msg.str());
    }
  }
  [[nodiscard]] double value() const noexcept { return p_; }
  [[nodiscard]] Probability complement() const noexcept { return Probability(1.0 - p_, Unchecked{}); }

 private:
  struct Unchecked {};
  Probability(double p, Unchecked) noexcept : p_(p) {}
  double p_;
};

/// Supported envelope for the chi-squared routines.
inline constexpr int kMaxDegreesOfFreedom = 200;
inline constexpr double kMaxNoncentrality = 2000.0;

/// Degrees of freedom and noncentrality of a chi-squared law.
class ChiSqParams {
 public:
  ChiSqParams(int df, double lambda) : df_(df), lambda_(lambda) {
    if (df < 1) throw DomainError("chi-squared degrees of freedom must be >= 1");
    if (!(lambda >= 0.0)) throw DomainError("chi-squared noncentrality must be >= 0");
    if (df > kMaxDegreesOfFreedom || lambda > kMaxNoncentrality) {
      std::ostringstream msg;
      msg << "chi-squared parameters outside supported envelope (df <= " << kMaxDegreesOfFreedom
          << ", lambda <= " << kMaxNoncentrality << "): df=" << df << ", lambda=" << lambda;
      throw RangeError(msg.str());
    }
  }
  [[nodiscard]] int df() const noexcept { return df_; }
  [[nodiscard]] double lambda() const noexcept { return lambda_; }

 private:
  int df_;
  double lambda_;
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

namespace detail {

// Lower-tail rational approximation (Acklam) followed by one Halley step.
inline double normal_quantile_lower(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  double x;
  if (p < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  for (int i = 0; i < 2; ++i) {
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

struct GammaPQ {
  double p;
  double q;
};

/// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
inline GammaPQ regularized_gamma(double a, double x) {
  if (x <= 0.0) return {0.0, 1.0};
  const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0; n < 100000; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-17) break;
    }
    const double p = std::min(1.0, sum * std::exp(log_prefactor));
    return {p, 1.0 - p};
  }
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  const double q = std::min(1.0, std::exp(log_prefactor) * h);
  return {1.0 - q, q};
}

struct CdfPdf {
  double cdf;
  double pdf;
};

inline constexpr double kPoissonTailMass = 1e-14;

/// CDF and density of chi^2_df(lambda) at x, unchecked parameters.
inline CdfPdf ncchisq_cdf_pdf(double x, int df, double lambda) {
  if (!(x > 0.0)) return {0.0, 0.0};
  const double h = 0.5 * x;
  const double mu = 0.5 * lambda;
  const double log_h = std::log(h);

  long j = 0;
  if (mu > 0.0) j = std::max(0L, static_cast<long>(std::floor(mu - 10.0 * std::sqrt(mu) - 10.0)));
  double a = 0.5 * df + static_cast<double>(j);
  auto [p_term, q_term] = regularized_gamma(a, h);
  (void)q_term;

  // t = h^a e^{-h} / Gamma(a + 1) = P(a) - P(a + 1); held in log form while it underflows.
  double log_t = a * log_h - h - std::lgamma(a + 1.0);
  double t = std::exp(log_t);

  if (mu == 0.0) return {p_term, t * a / x};

  double log_w = -mu + static_cast<double>(j) * std::log(mu) - std::lgamma(static_cast<double>(j) + 1.0);
  double w = std::exp(log_w);

  double cdf = 0.0;
  double pdf = 0.0;
  const long j_limit = j + 200000;
  for (;; ++j) {
    cdf += w * p_term;
    pdf += w * t * a / x;
    if (static_cast<double>(j) >= mu) {
      // Poisson weights beyond j are dominated by a geometric series with ratio r.
      const double r = mu / static_cast<double>(j + 2);
      const double tail = w * r / (1.0 - r);
      if (tail < kPoissonTailMass || (p_term < 1e-17 && t < 1e-17)) break;
    }
    if (j > j_limit) throw NumericalError("non-central chi-squared series failed to converge");

    p_term = std::max(0.0, p_term - t);
    if (t > 0.0) {
      t *= h / (a + 1.0);
    } else {
      log_t += log_h - std::log(a + 1.0);
      t = std::exp(log_t);
    }
    if (w > 0.0) {
      w *= mu / static_cast<double>(j + 1);
    } else {
      log_w += std::log(mu) - std::log(static_cast<double>(j + 1));
      w = std::exp(log_w);
    }
    a += 1.0;
  }
  return {std::clamp(cdf, 0.0, 1.0), pdf};
}

}  // namespace detail

/// z with Phi(z) = p.
inline double normal_quantile(Probability p) {
  const double v = p.value();
  if (v <= 0.0 || v >= 1.0) throw DomainError("normal_quantile requires 0 < p < 1");
  if (v == 0.5) return 0.0;
  if (v > 0.5) return -detail::normal_quantile_lower(1.0 - v);
  return detail::normal_quantile_lower(v);
}

/// P[chi^2_df(lambda) <= x].  Zero for x <= 0.
inline double ncchisq_cdf(double x, const ChiSqParams& params) {
  if (std::isnan(x)) throw DomainError("ncchisq_cdf: x is NaN");
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return detail::ncchisq_cdf_pdf(x, params.df(), params.lambda()).cdf;
}

/// Inverse of ncchisq_cdf in its first argument.
///
/// Brackets the root by doubling/halving from a moment-matched starting point,
/// then runs Newton steps safeguarded by bisection inside the bracket until the
/// bracket or step is below 1e-12 (relative to max(1, x)).
inline double ncchisq_quantile(Probability p, const ChiSqParams& params) {
  const double target = p.value();
  if (target <= 0.0 || target >= 1.0) throw DomainError("ncchisq_quantile requires 0 < p < 1");
  const int df = params.df();
  const double lambda = params.lambda();
  auto eval = [&](double x) { return detail::ncchisq_cdf_pdf(x, df, lambda); };

  const double mean = df + lambda;
  const double sd = std::sqrt(2.0 * (df + 2.0 * lambda));
  double x = std::max(1e-3 * mean, mean + normal_quantile(p) * sd);

  double lo = 0.0;
  double hi = 0.0;
  auto fx = eval(x);
  if (fx.cdf < target) {
    lo = x;
    hi = 2.0 * x;
    while (eval(hi).cdf < target) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e12) throw NumericalError("ncchisq_quantile: bracket expansion failed");
    }
  } else {
    hi = x;
    lo = 0.5 * x;
    while (lo > 1e-300 && eval(lo).cdf > target) {
      hi = lo;
      lo *= 0.5;
    }
    if (lo <= 1e-300) lo = 0.0;
  }

  x = std::clamp(x, lo, hi);
  for (int iter = 0; iter < 500; ++iter) {
    fx = eval(x);
    const double diff = fx.cdf - target;
    if (diff < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double tol = 1e-12 * std::max(1.0, x);
    if (diff == 0.0 || hi - lo <= tol) break;
    double next = (fx.pdf > 0.0) ? x - diff / fx.pdf : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool small_step = std::abs(next - x) <= tol;
    x = next;
    if (small_step) break;
  }

  const double check = eval(x).cdf;
  if (std::abs(check - target) > 1e-9) {
    std::ostringstream msg;
    msg << "ncchisq_quantile verification failed: |F(x) - p| = " << std::abs(check - target);
    throw NumericalError(msg.str());
  }
  return x;
}

}  // namespace cvalue
