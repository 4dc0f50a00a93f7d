#pragma once

// Approximate win lower bound for two affine estimates Ay + k (default) and
// Cy + l (alternative) under y ~ N(theta, Sigma).
//
// With D = A - C, S = Sigma^{1/2}, M = S D S and G(y) = D y + k - l:
//
//   b(y, alpha) = ||Ay + k - y||^2 - ||Cy + l - y||^2 + 2 tr(D Sigma)
//               + 2 z_{(1-alpha)/2} sqrt(U + 0.5 ||S (D + D^T) S||_F^2)
//
// where U is an upper confidence limit for ||G(theta)||_Sigma^2 built from
// ||G(y)||_Sigma^2, whose mean is ||G(theta)||_Sigma^2 + ||M||_F^2 and whose
// variance is at most 2 ||M M^T||_F^2 + 4 ||M||_op^2 ||G(theta)||_Sigma^2.

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "cvalue/core.hpp"
#include "cvalue/errors.hpp"
#include "cvalue/linalg.hpp"
#include "cvalue/special_fn.hpp"

namespace cvalue {

struct AffineComparison {
  Mat sigma;
  Mat a;
  Mat c;
  Vec k;
  Vec l;
  Vec y;

  AffineComparison(Mat sigma_in, Mat a_in, Mat c_in, Vec k_in, Vec l_in, Vec y_in)
      : sigma(std::move(sigma_in)),
        a(std::move(a_in)),
        c(std::move(c_in)),
        k(std::move(k_in)),
        l(std::move(l_in)),
        y(std::move(y_in)) {
    const auto n = y.size();
    if (n < 1) throw DimensionError("AffineComparison: empty observation");
    detail::require_square(sigma, "AffineComparison Sigma");
    detail::require_square(a, "AffineComparison A");
    detail::require_square(c, "AffineComparison C");
    detail::require_same_size(sigma.rows(), n, "AffineComparison Sigma");
    detail::require_same_size(a.rows(), n, "AffineComparison A");
    detail::require_same_size(c.rows(), n, "AffineComparison C");
    detail::require_same_size(k.size(), n, "AffineComparison k");
    detail::require_same_size(l.size(), n, "AffineComparison l");
  }

  [[nodiscard]] Vec default_estimate() const { return a * y + k; }
  [[nodiscard]] Vec alternative_estimate() const { return c * y + l; }
  [[nodiscard]] ComparisonProblem problem() const { return {y, default_estimate(), alternative_estimate()}; }
};

struct QuadraticUInputs {
  double gamma;
  double eta;
  double rho;
  double nu;
};

/// Larger root of x^2 - (2 gamma + eta^2 nu) x + (gamma^2 - eta^2 rho), floored at 0.
///
/// Equivalently the largest delta >= 0 with delta - |eta| sqrt(rho + nu delta) <= gamma.
/// When no such delta exists (negative discriminant or both roots negative) the
/// result is 0.
inline double u_quadratic(const QuadraticUInputs& in) {
  if (!std::isfinite(in.gamma) || !std::isfinite(in.eta) || !std::isfinite(in.rho) || !std::isfinite(in.nu)) {
    throw DomainError("u_quadratic: inputs must be finite");
  }
  if (in.rho < 0.0 || in.nu < 0.0) throw DomainError("u_quadratic: rho and nu must be >= 0");
  const double eta2 = in.eta * in.eta;
  const double half_b = in.gamma + 0.5 * eta2 * in.nu;
  // Quarter discriminant, expanded to avoid cancellation between half_b^2 and gamma^2.
  const double quarter_disc = eta2 * (in.gamma * in.nu + 0.25 * eta2 * in.nu * in.nu + in.rho);
  const double scale = std::max(1.0, half_b * half_b);
  if (quarter_disc < -1e-9 * scale) return 0.0;
  const double root = half_b + std::sqrt(std::max(0.0, quarter_disc));
  return std::max(0.0, root);
}

inline constexpr double kBerryEsseenC1 = 1.88;
inline constexpr double kIllConditionedThreshold = 1e6;

struct BerryEsseenCorrection {
  double kappa;
  /// Condition number of S (A + A^T - C - C^T) S; zero when A and C are symmetric.
  double kappa_sym;
  double c1;
  Eigen::Index n;
  double epsilon;
  bool symmetric;
};

struct AffineBoundDetail {
  double bound;
  double data_term;
  double trace_term;
  double upper;
  double sd_term;
};

/// The parts of the bound that depend only on (Sigma, A, C, k, l).  Computing
/// these once lets many datasets share one O(N^3) setup.
class AffineBoundGeometry {
 public:
  AffineBoundGeometry(const Mat& sigma, const Mat& a, const Mat& c, const Vec& k, const Vec& l)
      : a_(a), c_(c), d_(a - c), offset_(k - l), k_(k), l_(l), sigma_(sigma), n_(sigma.rows()) {
    detail::require_square(sigma, "Sigma");
    detail::require_square(a, "A");
    detail::require_square(c, "C");
    detail::require_same_size(a.rows(), n_, "A");
    detail::require_same_size(c.rows(), n_, "C");
    detail::require_same_size(k.size(), n_, "k");
    detail::require_same_size(l.size(), n_, "l");
    if (!detail::is_symmetric(sigma)) throw DomainError("Sigma is not symmetric");
    const Mat s = sym_matrix_sqrt(sigma);
    const Mat m = s * d_ * s;
    const Mat sym = s * (d_ + d_.transpose()) * s;
    m_frob2_ = m.squaredNorm();
    trace_ = (d_ * sigma).trace();
    rho_ = 2.0 * (m * m.transpose()).squaredNorm();
    const double op = operator_norm(m);
    nu_ = 4.0 * op * op;
    half_frob_ = 0.5 * sym.squaredNorm();
    kappa_ = condition_number(m);
    symmetric_ = detail::is_symmetric(a) && detail::is_symmetric(c);
    if (!symmetric_) kappa_sym_ = condition_number(sym);
  }

  explicit AffineBoundGeometry(const AffineComparison& cmp)
      : AffineBoundGeometry(cmp.sigma, cmp.a, cmp.c, cmp.k, cmp.l) {}

  [[nodiscard]] Eigen::Index dim() const noexcept { return n_; }

  [[nodiscard]] BerryEsseenCorrection berry_esseen() const {
    if (!std::isfinite(kappa_)) throw DomainError("Berry-Esseen correction undefined: S (A - C) S is singular");
    const double root_n = std::sqrt(static_cast<double>(n_));
    BerryEsseenCorrection out{kappa_, 0.0, kBerryEsseenC1, n_, 0.0, symmetric_};
    if (symmetric_) {
      out.epsilon = (10.0 * std::numbers::sqrt2 / root_n) * kBerryEsseenC1 * kappa_ * kappa_;
    } else {
      if (!std::isfinite(kappa_sym_)) {
        throw DomainError("Berry-Esseen correction undefined: S (A + A^T - C - C^T) S is singular");
      }
      out.kappa_sym = kappa_sym_;
      out.epsilon = (5.0 * std::numbers::sqrt2 / root_n) * kBerryEsseenC1 * (kappa_ * kappa_ + kappa_sym_);
    }
    return out;
  }

  [[nodiscard]] double kappa() const noexcept { return kappa_; }

  [[nodiscard]] std::vector<std::string> warnings() const {
    std::vector<std::string> out;
    if (kappa_ > kIllConditionedThreshold) {
      out.push_back("condition number of S (A - C) S is " + std::to_string(kappa_) +
                    " (> 1e6); poor conditioning loosens the bound");
    }
    return out;
  }

 private:
  friend class AffineWinBound;

  Mat a_;
  Mat c_;
  Mat d_;
  Vec offset_;
  Vec k_;
  Vec l_;
  Mat sigma_;
  Eigen::Index n_;
  double m_frob2_ = 0.0;
  double trace_ = 0.0;
  double rho_ = 0.0;
  double nu_ = 0.0;
  double half_frob_ = 0.0;
  double kappa_ = 1.0;
  double kappa_sym_ = 0.0;
  bool symmetric_ = true;
};

/// The bound for one fixed dataset.
class AffineWinBound {
 public:
  explicit AffineWinBound(const AffineComparison& cmp)
      : AffineWinBound(std::make_shared<const AffineBoundGeometry>(cmp), cmp.y) {}

  AffineWinBound(std::shared_ptr<const AffineBoundGeometry> geometry, const Vec& y) : geo_(std::move(geometry)) {
    const auto& g = *geo_;
    detail::require_same_size(y.size(), g.n_, "y");
    data_term_ = (g.a_ * y + g.k_ - y).squaredNorm() - (g.c_ * y + g.l_ - y).squaredNorm();
    const Vec gy = g.d_ * y + g.offset_;
    gamma_ = gy.dot(g.sigma_ * gy) - g.m_frob2_;
  }

  [[nodiscard]] AffineBoundDetail evaluate(double alpha) const {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in [0, 1)");
    const double z = normal_quantile(Probability(0.5 * (1.0 - alpha)));
    AffineBoundDetail out{};
    out.data_term = data_term_;
    out.trace_term = 2.0 * geo_->trace_;
    out.upper = u_quadratic({gamma_, z, geo_->rho_, geo_->nu_});
    out.sd_term = 2.0 * z * std::sqrt(out.upper + geo_->half_frob_);
    out.bound = out.data_term + out.trace_term + out.sd_term;
    return out;
  }

  double operator()(double alpha) const { return evaluate(alpha).bound; }

  [[nodiscard]] QuadraticUInputs u_inputs(double alpha) const {
    return {gamma_, normal_quantile(Probability(0.5 * (1.0 - alpha))), geo_->rho_, geo_->nu_};
  }

  [[nodiscard]] BerryEsseenCorrection berry_esseen() const { return geo_->berry_esseen(); }

  /// b evaluated at alpha + epsilon; -inf once that level reaches 1.
  [[nodiscard]] double corrected(double alpha, double epsilon) const {
    const double level = alpha + epsilon;
    if (level >= 1.0) return -std::numeric_limits<double>::infinity();
    return (*this)(level);
  }

  [[nodiscard]] double kappa() const noexcept { return geo_->kappa(); }
  [[nodiscard]] std::vector<std::string> warnings() const { return geo_->warnings(); }
  [[nodiscard]] const AffineBoundGeometry& geometry() const noexcept { return *geo_; }

 private:
  std::shared_ptr<const AffineBoundGeometry> geo_;
  double data_term_ = 0.0;
  double gamma_ = 0.0;
};

inline double affine_win_bound(const AffineComparison& cmp, Probability alpha) {
  return AffineWinBound(cmp)(alpha.value());
}

inline BerryEsseenCorrection berry_esseen_epsilon(const AffineComparison& cmp) {
  return AffineWinBound(cmp).berry_esseen();
}

/// Bound curve for c-values.  With `berry_esseen`, each level is shifted by epsilon.
inline LowerBoundEvaluator affine_bound_evaluator(const AffineWinBound& bound, bool berry_esseen = false) {
  if (!berry_esseen) return LowerBoundEvaluator([bound](double alpha) { return bound(alpha); });
  const double eps = bound.berry_esseen().epsilon;
  return LowerBoundEvaluator([bound, eps](double alpha) { return bound.corrected(alpha, eps); });
}

inline LowerBoundEvaluator affine_bound_evaluator(const AffineComparison& cmp, bool berry_esseen = false) {
  return affine_bound_evaluator(AffineWinBound(cmp), berry_esseen);
}

}  // namespace cvalue
