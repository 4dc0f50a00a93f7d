#pragma once

// The win, lower-bound evaluators, c-values, the two-stage estimator and
// contingency bookkeeping for default-vs-alternative comparisons.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "cvalue/errors.hpp"
#include "cvalue/linalg.hpp"

namespace cvalue {

/// Observed data together with the two competing estimates.  Loss is squared error.
struct ComparisonProblem {
  Vec y;
  Vec default_estimate;
  Vec alternative_estimate;

  ComparisonProblem(Vec y_in, Vec default_in, Vec alternative_in)
      : y(std::move(y_in)), default_estimate(std::move(default_in)), alternative_estimate(std::move(alternative_in)) {
    if (y.size() < 1) throw DimensionError("ComparisonProblem: empty observation");
    detail::require_same_size(y.size(), default_estimate.size(), "ComparisonProblem default estimate");
    detail::require_same_size(y.size(), alternative_estimate.size(), "ComparisonProblem alternative estimate");
  }

  [[nodiscard]] Eigen::Index dim() const noexcept { return y.size(); }
};

inline double squared_error(const Vec& estimate, const Vec& theta) { return (estimate - theta).squaredNorm(); }

/// ||default - theta||^2 - ||alternative - theta||^2; positive when the alternative is closer.
inline double win(const Vec& theta, const ComparisonProblem& problem) {
  detail::require_same_size(theta.size(), problem.dim(), "win");
  return squared_error(problem.default_estimate, theta) - squared_error(problem.alternative_estimate, theta);
}

/// Levels above this are evaluated at this value; the bounds diverge at alpha = 1.
inline constexpr double kAlphaCeiling = 1.0 - 1e-9;
inline constexpr int kMonotoneGridSize = 64;
inline constexpr int kFallbackGridSize = 4096;

struct BoundSample {
  double alpha;
  double bound;
};

/// alpha -> b(y, alpha) for one fixed dataset and comparison.
///
/// The function is sampled on a 64-point grid at construction; the samples are
/// kept and used to flag non-monotone numerical behaviour.  The wrapped callable
/// must be safe to invoke concurrently.
class LowerBoundEvaluator {
 public:
  using Function = std::function<double(double)>;

  explicit LowerBoundEvaluator(Function fn) : fn_(std::move(fn)) {
    grid_.reserve(kMonotoneGridSize);
    for (int i = 0; i < kMonotoneGridSize; ++i) {
      const double alpha = static_cast<double>(i) / (kMonotoneGridSize - 1);
      grid_.push_back({alpha, (*this)(alpha)});
    }
    for (std::size_t i = 1; i < grid_.size(); ++i) {
      const double prev = grid_[i - 1].bound;
      const double cur = grid_[i].bound;
      if (std::isnan(cur) || cur > prev + 1e-9 * (1.0 + std::abs(prev))) {
        monotone_ = false;
        break;
      }
    }
  }

  double operator()(double alpha) const { return fn_(std::clamp(alpha, 0.0, kAlphaCeiling)); }

  [[nodiscard]] bool monotone() const noexcept { return monotone_; }
  [[nodiscard]] std::span<const BoundSample> grid() const noexcept { return grid_; }

 private:
  Function fn_;
  std::vector<BoundSample> grid_;
  bool monotone_ = true;
};

struct CValueResult {
  double c_value = 0.0;
  std::vector<BoundSample> bound_samples;
  double tolerance = 0.0;
  /// b(y, alpha) > 0 even at the top of the level range; c is reported as 1.
  bool saturated = false;
  /// False when the grid scan found the bound increasing somewhere and the fallback scan was used.
  bool monotone = true;
};

/// inf { alpha in [0, 1] : b(y, alpha) <= 0 }.
///
/// Bisection inside the first grid cell where the bound changes sign; the lower
/// end of the final bracket is returned, so the result is at most `tolerance`
/// below the exact infimum.
inline CValueResult c_value(const LowerBoundEvaluator& bound, double tolerance = 1e-6) {
  if (!(tolerance > 0.0)) throw DomainError("c_value: tolerance must be positive");
  CValueResult result;
  result.tolerance = tolerance;
  result.monotone = bound.monotone();
  const auto grid = bound.grid();
  result.bound_samples.assign(grid.begin(), grid.end());

  if (grid.front().bound <= 0.0) {
    result.c_value = 0.0;
    return result;
  }
  if (grid.back().bound > 0.0) {
    result.c_value = 1.0;
    result.saturated = true;
    return result;
  }

  if (!result.monotone) {
    for (int i = 1; i <= kFallbackGridSize; ++i) {
      const double alpha = static_cast<double>(i) / kFallbackGridSize;
      if (bound(alpha) <= 0.0) {
        result.c_value = alpha;
        return result;
      }
    }
    result.c_value = 1.0;
    result.saturated = true;
    return result;
  }

  std::size_t first = 1;
  while (grid[first].bound > 0.0) ++first;
  double lo = grid[first - 1].alpha;
  double hi = grid[first].alpha;
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (bound(mid) <= 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  result.c_value = lo;
  return result;
}

enum class Reported { kDefault, kAlternative };

inline void require_level(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(what) + " must lie in [0, 1]");
}

/// Two-stage rule: report the alternative iff c > alpha.
inline Reported two_stage_choice(double c, double alpha) {
  require_level(c, "c-value");
  require_level(alpha, "alpha");
  return c > alpha ? Reported::kAlternative : Reported::kDefault;
}

inline const Vec& two_stage_select(double c, double alpha, const ComparisonProblem& problem) {
  return two_stage_choice(c, alpha) == Reported::kAlternative ? problem.alternative_estimate
                                                               : problem.default_estimate;
}

struct ContingencyRecord {
  double win;
  Reported reported;
};

/// Rows: which estimate had lower loss.  Columns: which estimate was reported.
/// A win of exactly zero counts as "default has lower loss".
struct ContingencyTable {
  // counts[row][col]; row 0 = DLL, 1 = ALL; col 0 = DR, 1 = AR.
  std::array<std::array<std::size_t, 2>, 2> counts{};
  std::size_t total = 0;

  [[nodiscard]] double percent(int row, int col) const {
    return 100.0 * static_cast<double>(counts[row][col]) / static_cast<double>(total);
  }
  [[nodiscard]] double dll_dr() const { return percent(0, 0); }
  [[nodiscard]] double dll_ar() const { return percent(0, 1); }
  [[nodiscard]] double all_dr() const { return percent(1, 0); }
  [[nodiscard]] double all_ar() const { return percent(1, 1); }
  /// Reported estimate had the larger loss.
  [[nodiscard]] double wrong() const { return dll_ar() + all_dr(); }
  [[nodiscard]] double alternative_reported() const { return dll_ar() + all_ar(); }
};

inline ContingencyTable contingency_table(std::span<const ContingencyRecord> records) {
  if (records.empty()) throw DomainError("contingency_table: no records");
  ContingencyTable table;
  for (const auto& r : records) {
    const int row = r.win > 0.0 ? 1 : 0;
    const int col = r.reported == Reported::kAlternative ? 1 : 0;
    ++table.counts[row][col];
  }
  table.total = records.size();
  return table;
}

}  // namespace cvalue
