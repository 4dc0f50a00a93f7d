#pragma once

// Seeded Monte Carlo studies of the bounds, c-values and two-stage estimators.
//
// Every replicate draws from its own stream keyed by (seed, experiment tag,
// grid index, replicate index) and writes into a pre-sized slot, so reports
// are identical for any number of workers.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <memory>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cvalue/affine.hpp"
#include "cvalue/core.hpp"
#include "cvalue/errors.hpp"
#include "cvalue/estimators.hpp"
#include "cvalue/linalg.hpp"
#include "cvalue/normal_means.hpp"
#include "cvalue/rng.hpp"

namespace cvalue {

enum class BoundFamily {
  /// Lindley-Smith vs MLE with the exact bound.
  kBound1,
  /// James-Stein vs MLE with the origin-shrinkage bound at tau^2 = tau_hat^2.
  kJamesStein,
  /// Lindley-Smith vs MLE with the approximate affine bound.
  kAffineLindleySmith,
};

enum class ThetaDirection {
  /// theta = r sqrt(N) e_1.
  kAxis,
  /// theta = r sqrt(N) (e_1 - e_2) / sqrt(2), orthogonal to 1_N.
  kOrthogonal,
};

struct LogisticExperimentParams {
  int convergence_n = 2;
  std::vector<int> m_grid{50, 100, 200, 400, 800, 1600};
  int convergence_replicates = 25;
  int coverage_n = 25;
  int coverage_m = 1000;
};

struct GpExperimentParams {
  int drifters = 16;
  int times = 12;
  /// Spread of drifter release points (km).
  double spread_km = 4.0;
  double dt_hours = 1.0;
  GpKernelParams kernel{{1.0, 20.0, 20.0, 24.0}, {0.6, 1.5, 1.5, 3.0}};
  double sigma_eps = 0.2;
};

struct ExperimentConfig {
  std::string name = "calibration";
  int n = 50;
  int replicates = 500;
  double tau = 1.0;
  std::vector<double> grid{0.0, 0.5, 1.0, 1.5, 2.0};
  std::vector<double> alphas{0.5, 0.8, 0.9, 0.95};
  std::uint64_t seed = 1;
  BoundFamily family = BoundFamily::kBound1;
  ThetaDirection direction = ThetaDirection::kAxis;
  /// When false, c_value is NaN and selection uses b(y, alpha) > 0.
  bool c_values = true;
  SureRule sure_rule = SureRule::kRiskMinimizing;
  /// ||theta - mean(theta) 1||^2 for the pitfall demo.
  double pitfall_spread = 2.999;
  LogisticExperimentParams logistic;
  GpExperimentParams gp;
  /// Not part of the report.
  int workers = 1;

  void validate() const {
    if (replicates < 1) throw DomainError("replicate count must be >= 1");
    if (n < 1) throw DomainError("N must be >= 1");
    if (grid.empty()) throw DomainError("grid must be non-empty");
    if (alphas.empty()) throw DomainError("alpha grid must be non-empty");
    for (double a : alphas) {
      if (!(a > 0.0 && a < 1.0)) throw DomainError("alpha values must lie in (0, 1)");
    }
    if (!(tau > 0.0)) throw DomainError("tau must be positive");
    if (workers < 1) throw DomainError("workers must be >= 1");
  }
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"calibration", "selection", "risk", "pitfall", "logistic", "gp", "eb"};
  return names;
}

/// Defaults for a named experiment at desk scale.
inline ExperimentConfig default_config(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  if (name == "calibration") {
    c.c_values = false;
  } else if (name == "selection" || name == "risk") {
    c.grid.clear();
    for (int i = 0; i <= 10; ++i) c.grid.push_back(0.25 * i);
  } else if (name == "pitfall") {
    c.n = 2;
    c.replicates = 5000;
    c.grid = {c.pitfall_spread};
    c.alphas = {0.95};
    c.c_values = false;
  } else if (name == "eb") {
    c.family = BoundFamily::kJamesStein;
    c.grid = {0.0, 1.0, 2.0};
    c.c_values = false;
  } else if (name == "logistic") {
    c.alphas = {0.5, 0.8, 0.95};
    c.grid = {static_cast<double>(c.logistic.coverage_m)};
  } else if (name == "gp") {
    c.replicates = 50;
    c.alphas = {0.95};
    c.grid = {0.0, 1.0};
  } else {
    std::string valid;
    for (const auto& n : experiment_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw DomainError("unknown experiment '" + name + "' (valid: " + valid + ")");
  }
  return c;
}

/// One (grid point, alpha, replicate) outcome.
struct Record {
  double grid_value;
  double alpha;
  std::size_t replicate;
  double win;
  double bound;
  double c_value;
  bool selected;
  double loss_default;
  double loss_alt;
};

struct SureRecord {
  double grid_value;
  std::size_t replicate;
  double win;
  double sure;
  bool selected;
};

struct ConvergenceRecord {
  int m;
  std::size_t replicate;
  /// ||approx MAP - MAP||
  double approx_to_map;
  /// ||MLE - theta||
  double mle_to_theta;
  /// ||MAP - theta||
  double map_to_theta;
};

/// Three-way chain MLE -> baseline GP -> multi-scale GP.
struct SequentialRecord {
  std::size_t replicate;
  double c_first;
  /// NaN when the first stage keeps the MLE.
  double c_second;
  /// 0 MLE, 1 baseline, 2 multi-scale.
  int reported;
  double loss_mle;
  double loss_baseline;
  double loss_multiscale;
  /// Some accepted step replaced an estimate by one with larger loss.
  bool misselected;
};

struct SimulationReport {
  ExperimentConfig config;
  std::vector<Record> records;
  std::vector<SureRecord> sure;
  std::vector<ConvergenceRecord> convergence;
  std::vector<SequentialRecord> sequential;
  std::size_t dropped = 0;
  nlohmann::json summary;
};

// ---------------------------------------------------------------------------
// Aggregates

struct CoverageCell {
  double grid_value;
  double alpha;
  std::size_t count;
  std::size_t covered;
  double coverage;
  /// sqrt(alpha (1 - alpha) / count).
  double nominal_se;
};

struct SelectionCell {
  double grid_value;
  double alpha;
  std::size_t count;
  double selection_probability;
  /// Default had lower (or equal) loss but the alternative was reported.
  double mistake_probability;
  /// Reported estimate had strictly larger loss than the default.
  double worse_than_default;
  ContingencyTable table;
};

struct RiskCell {
  double grid_value;
  std::size_t count;
  double risk_default;
  double se_default;
  double risk_alt;
  double se_alt;
  /// Mean and SE of loss_alt - loss_default.
  double risk_difference;
  double se_difference;
  /// alpha -> (risk, se) of the two-stage estimate.
  std::vector<std::pair<double, std::pair<double, double>>> two_stage;
};

struct SureCell {
  double grid_value;
  std::size_t count;
  ContingencyTable table;
};

namespace detail {

struct MeanSe {
  double mean;
  double se;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

/// Distinct keys in order of first appearance.
template <class T, class Key>
std::vector<double> distinct(const std::vector<T>& rows, Key key) {
  std::vector<double> out;
  for (const auto& r : rows) {
    const double k = key(r);
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace detail

inline std::vector<CoverageCell> coverage_table(const std::vector<Record>& records) {
  std::vector<CoverageCell> out;
  for (double g : detail::distinct(records, [](const Record& r) { return r.grid_value; })) {
    for (double a : detail::distinct(records, [](const Record& r) { return r.alpha; })) {
      CoverageCell cell{g, a, 0, 0, 0.0, 0.0};
      for (const auto& r : records) {
        if (r.grid_value != g || r.alpha != a) continue;
        ++cell.count;
        if (r.win >= r.bound) ++cell.covered;
      }
      if (cell.count == 0) continue;
      cell.coverage = static_cast<double>(cell.covered) / static_cast<double>(cell.count);
      cell.nominal_se = std::sqrt(a * (1.0 - a) / static_cast<double>(cell.count));
      out.push_back(cell);
    }
  }
  return out;
}

inline std::vector<SelectionCell> selection_table(const std::vector<Record>& records) {
  std::vector<SelectionCell> out;
  for (double g : detail::distinct(records, [](const Record& r) { return r.grid_value; })) {
    for (double a : detail::distinct(records, [](const Record& r) { return r.alpha; })) {
      std::vector<ContingencyRecord> rows;
      std::size_t selected = 0;
      std::size_t mistakes = 0;
      std::size_t worse = 0;
      for (const auto& r : records) {
        if (r.grid_value != g || r.alpha != a) continue;
        rows.push_back({r.win, r.selected ? Reported::kAlternative : Reported::kDefault});
        if (r.selected) {
          ++selected;
          if (r.win <= 0.0) ++mistakes;
          if (r.win < 0.0) ++worse;
        }
      }
      if (rows.empty()) continue;
      const auto count = static_cast<double>(rows.size());
      out.push_back({g, a, rows.size(), selected / count, mistakes / count, worse / count, contingency_table(rows)});
    }
  }
  return out;
}

inline std::vector<RiskCell> risk_table(const std::vector<Record>& records) {
  std::vector<RiskCell> out;
  const auto alphas = detail::distinct(records, [](const Record& r) { return r.alpha; });
  for (double g : detail::distinct(records, [](const Record& r) { return r.grid_value; })) {
    std::vector<double> d;
    std::vector<double> a;
    std::vector<double> diff;
    for (const auto& r : records) {
      if (r.grid_value != g || r.alpha != alphas.front()) continue;
      d.push_back(r.loss_default);
      a.push_back(r.loss_alt);
      diff.push_back(r.loss_alt - r.loss_default);
    }
    if (d.empty()) continue;
    const auto md = detail::mean_se(d);
    const auto ma = detail::mean_se(a);
    const auto mdiff = detail::mean_se(diff);
    RiskCell cell{g, d.size(), md.mean, md.se, ma.mean, ma.se, mdiff.mean, mdiff.se, {}};
    for (double alpha : alphas) {
      std::vector<double> loss;
      for (const auto& r : records) {
        if (r.grid_value == g && r.alpha == alpha) loss.push_back(r.selected ? r.loss_alt : r.loss_default);
      }
      const auto m = detail::mean_se(loss);
      cell.two_stage.push_back({alpha, {m.mean, m.se}});
    }
    out.push_back(std::move(cell));
  }
  return out;
}

inline std::vector<SureCell> sure_table(const std::vector<SureRecord>& records) {
  std::vector<SureCell> out;
  for (double g : detail::distinct(records, [](const SureRecord& r) { return r.grid_value; })) {
    std::vector<ContingencyRecord> rows;
    for (const auto& r : records) {
      if (r.grid_value == g) rows.push_back({r.win, r.selected ? Reported::kAlternative : Reported::kDefault});
    }
    out.push_back({g, rows.size(), contingency_table(rows)});
  }
  return out;
}

struct ConvergenceSlopes {
  double approx_to_map;
  double mle_to_theta;
  double map_to_theta;
};

/// Least-squares slope of mean log distance against log M.
inline ConvergenceSlopes convergence_slopes(const std::vector<ConvergenceRecord>& records) {
  std::vector<double> lm;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;
  for (double m : detail::distinct(records, [](const ConvergenceRecord& r) { return static_cast<double>(r.m); })) {
    std::vector<double> la;
    std::vector<double> lb;
    std::vector<double> lc;
    for (const auto& r : records) {
      if (r.m != static_cast<int>(m)) continue;
      la.push_back(std::log(r.approx_to_map));
      lb.push_back(std::log(r.mle_to_theta));
      lc.push_back(std::log(r.map_to_theta));
    }
    lm.push_back(std::log(m));
    a.push_back(detail::mean_se(la).mean);
    b.push_back(detail::mean_se(lb).mean);
    c.push_back(detail::mean_se(lc).mean);
  }
  if (lm.size() < 2) throw DomainError("convergence slopes need at least two sample sizes");
  return {detail::ols_slope(lm, a), detail::ols_slope(lm, b), detail::ols_slope(lm, c)};
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr const char* kRecordCsvHeader =
    "grid_value,alpha,replicate,win,bound,c_value,selected,loss_default,loss_alt";

namespace detail {

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, std::size_t line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  // strtod keeps subnormals that stod rejects as out of range.
  char* end = nullptr;
  const double v = s.empty() ? 0.0 : std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || std::isspace(static_cast<unsigned char>(s.front())) ||
      !std::isfinite(v)) {
    throw DomainError("line " + std::to_string(line) + ": cannot parse number '" + s + "'");
  }
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline void write_records_csv(std::ostream& out, const std::vector<Record>& records) {
  out << kRecordCsvHeader << '\n';
  for (const auto& r : records) {
    out << detail::fmt17(r.grid_value) << ',' << detail::fmt17(r.alpha) << ',' << r.replicate << ','
        << detail::fmt17(r.win) << ',' << detail::fmt17(r.bound) << ',' << detail::fmt17(r.c_value) << ','
        << (r.selected ? 1 : 0) << ',' << detail::fmt17(r.loss_default) << ',' << detail::fmt17(r.loss_alt) << '\n';
  }
}

inline std::vector<Record> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kRecordCsvHeader) {
    throw DomainError("record CSV: missing or unexpected header");
  }
  std::vector<Record> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 9) throw DomainError("record CSV line " + std::to_string(lineno) + ": expected 9 columns");
    Record r{};
    r.grid_value = detail::parse_double(cells[0], lineno);
    r.alpha = detail::parse_double(cells[1], lineno);
    r.replicate = static_cast<std::size_t>(detail::parse_double(cells[2], lineno));
    r.win = detail::parse_double(cells[3], lineno);
    r.bound = detail::parse_double(cells[4], lineno);
    r.c_value = detail::parse_double(cells[5], lineno);
    r.selected = detail::parse_double(cells[6], lineno) != 0.0;
    r.loss_default = detail::parse_double(cells[7], lineno);
    r.loss_alt = detail::parse_double(cells[8], lineno);
    out.push_back(r);
  }
  return out;
}

inline void write_sure_csv(std::ostream& out, const std::vector<SureRecord>& records) {
  out << "grid_value,replicate,win,sure,selected\n";
  for (const auto& r : records) {
    out << detail::fmt17(r.grid_value) << ',' << r.replicate << ',' << detail::fmt17(r.win) << ','
        << detail::fmt17(r.sure) << ',' << (r.selected ? 1 : 0) << '\n';
  }
}

inline void write_convergence_csv(std::ostream& out, const std::vector<ConvergenceRecord>& records) {
  out << "m,replicate,approx_to_map,mle_to_theta,map_to_theta\n";
  for (const auto& r : records) {
    out << r.m << ',' << r.replicate << ',' << detail::fmt17(r.approx_to_map) << ','
        << detail::fmt17(r.mle_to_theta) << ',' << detail::fmt17(r.map_to_theta) << '\n';
  }
}

inline void write_sequential_csv(std::ostream& out, const std::vector<SequentialRecord>& records) {
  out << "replicate,c_first,c_second,reported,loss_mle,loss_baseline,loss_multiscale,misselected\n";
  for (const auto& r : records) {
    out << r.replicate << ',' << detail::fmt17(r.c_first) << ',' << detail::fmt17(r.c_second) << ',' << r.reported
        << ',' << detail::fmt17(r.loss_mle) << ',' << detail::fmt17(r.loss_baseline) << ','
        << detail::fmt17(r.loss_multiscale) << ',' << (r.misselected ? 1 : 0) << '\n';
  }
}

inline std::string to_string(BoundFamily f) {
  switch (f) {
    case BoundFamily::kBound1:
      return "bound1";
    case BoundFamily::kJamesStein:
      return "james_stein";
    case BoundFamily::kAffineLindleySmith:
      return "affine_lindley_smith";
  }
  return "unknown";
}

inline BoundFamily parse_family(const std::string& s) {
  if (s == "bound1") return BoundFamily::kBound1;
  if (s == "james_stein") return BoundFamily::kJamesStein;
  if (s == "affine_lindley_smith") return BoundFamily::kAffineLindleySmith;
  throw DomainError("unknown bound family '" + s + "' (valid: bound1, james_stein, affine_lindley_smith)");
}

inline nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["experiment"] = c.name;
  j["n"] = c.n;
  j["replicates"] = c.replicates;
  j["tau"] = c.tau;
  j["grid"] = c.grid;
  j["alphas"] = c.alphas;
  j["seed"] = c.seed;
  j["family"] = to_string(c.family);
  j["direction"] = c.direction == ThetaDirection::kAxis ? "axis" : "orthogonal";
  j["c_values"] = c.c_values;
  j["sure_rule"] = c.sure_rule == SureRule::kRiskMinimizing ? "risk_minimizing" : "literal";
  if (c.name == "logistic") {
    j["logistic"] = {{"convergence_n", c.logistic.convergence_n},
                     {"m_grid", c.logistic.m_grid},
                     {"convergence_replicates", c.logistic.convergence_replicates},
                     {"coverage_n", c.logistic.coverage_n},
                     {"coverage_m", c.logistic.coverage_m}};
  }
  if (c.name == "gp") {
    j["gp"] = {{"drifters", c.gp.drifters},
               {"times", c.gp.times},
               {"spread_km", c.gp.spread_km},
               {"dt_hours", c.gp.dt_hours},
               {"sigma_eps", c.gp.sigma_eps}};
  }
  if (c.name == "pitfall") j["pitfall_spread"] = c.pitfall_spread;
  return j;
}

inline nlohmann::json table_json(const ContingencyTable& t) {
  return {{"dll_dr", t.dll_dr()}, {"dll_ar", t.dll_ar()},   {"all_dr", t.all_dr()},
          {"all_ar", t.all_ar()}, {"wrong", t.wrong()},     {"alternative_reported", t.alternative_reported()},
          {"count", t.total}};
}

/// Aggregates computed from the report's record vectors alone.
inline nlohmann::json summarize(const SimulationReport& r) {
  nlohmann::json s;
  s["config"] = config_json(r.config);
  s["records"] = r.records.size();
  s["dropped"] = r.dropped;
  const std::string& name = r.config.name;

  if (!r.records.empty()) {
    auto& cov = s["coverage"] = nlohmann::json::array();
    for (const auto& c : coverage_table(r.records)) {
      cov.push_back({{"grid_value", c.grid_value},
                     {"alpha", c.alpha},
                     {"count", c.count},
                     {"coverage", c.coverage},
                     {"nominal_se", c.nominal_se}});
    }
  }
  if (name == "selection" || name == "risk" || name == "gp" || name == "logistic") {
    auto& sel = s["selection"] = nlohmann::json::array();
    for (const auto& c : selection_table(r.records)) {
      sel.push_back({{"grid_value", c.grid_value},
                     {"alpha", c.alpha},
                     {"count", c.count},
                     {"selection_probability", c.selection_probability},
                     {"mistake_probability", c.mistake_probability},
                     {"worse_than_default", c.worse_than_default},
                     {"table", table_json(c.table)}});
    }
  }
  if (name == "risk" || name == "pitfall" || name == "selection") {
    auto& risk = s["risk"] = nlohmann::json::array();
    for (const auto& c : risk_table(r.records)) {
      nlohmann::json two_stage = nlohmann::json::array();
      for (const auto& [alpha, m] : c.two_stage) {
        two_stage.push_back({{"alpha", alpha}, {"risk", m.first}, {"se", m.second}});
      }
      risk.push_back({{"grid_value", c.grid_value},
                      {"count", c.count},
                      {"risk_default", c.risk_default},
                      {"se_default", c.se_default},
                      {"risk_alt", c.risk_alt},
                      {"se_alt", c.se_alt},
                      {"risk_difference", c.risk_difference},
                      {"se_difference", c.se_difference},
                      {"two_stage", two_stage}});
    }
  }
  if (!r.sure.empty()) {
    auto& sure = s["sure"] = nlohmann::json::array();
    for (const auto& c : sure_table(r.sure)) {
      sure.push_back({{"grid_value", c.grid_value}, {"count", c.count}, {"table", table_json(c.table)}});
    }
  }
  if (name == "pitfall") {
    std::size_t mle_smaller = 0;
    std::size_t count = 0;
    for (const auto& rec : r.records) {
      if (rec.alpha != r.records.front().alpha) continue;
      ++count;
      if (rec.loss_default < rec.loss_alt) ++mle_smaller;
    }
    s["mle_smaller_loss"] = mle_smaller;
    s["mle_smaller_fraction"] = static_cast<double>(mle_smaller) / static_cast<double>(count);
  }
  if (!r.convergence.empty()) {
    const auto slopes = convergence_slopes(r.convergence);
    s["convergence_slopes"] = {{"approx_to_map", slopes.approx_to_map},
                               {"mle_to_theta", slopes.mle_to_theta},
                               {"map_to_theta", slopes.map_to_theta}};
  }
  if (name == "logistic" || name == "gp") {
    auto& cv = s["c_value_summary"] = nlohmann::json::array();
    for (double g : detail::distinct(r.records, [](const Record& x) { return x.grid_value; })) {
      std::vector<double> cs;
      for (const auto& rec : r.records) {
        if (rec.grid_value == g && rec.alpha == r.records.front().alpha && !std::isnan(rec.c_value)) {
          cs.push_back(rec.c_value);
        }
      }
      if (cs.empty()) continue;
      std::sort(cs.begin(), cs.end());
      const std::size_t mid = cs.size() / 2;
      const double median = cs.size() % 2 ? cs[mid] : 0.5 * (cs[mid - 1] + cs[mid]);
      std::vector<std::size_t> hist(10, 0);
      for (double c : cs) ++hist[std::min<std::size_t>(9, static_cast<std::size_t>(c * 10.0))];
      cv.push_back({{"grid_value", g}, {"median", median}, {"histogram_deciles", hist}});
    }
  }
  if (!r.sequential.empty()) {
    std::size_t mis = 0;
    for (const auto& q : r.sequential) mis += q.misselected ? 1 : 0;
    const auto n = static_cast<double>(r.sequential.size());
    s["sequential"] = {{"count", r.sequential.size()},
                       {"misselected", mis},
                       {"misselection_rate", mis / n},
                       {"se", std::sqrt((mis / n) * (1.0 - mis / n) / n)}};
  }
  return s;
}

// ---------------------------------------------------------------------------
// Experiments

namespace detail {

enum : std::uint64_t {
  kTagNormalMeans = 11,
  kTagPitfall = 12,
  kTagJamesStein = 13,
  kTagLogisticCoverage = 14,
  kTagLogisticConvergence = 15,
  kTagGpLayout = 16,
  kTagGpMulti = 17,
  kTagGpBaseline = 18,
  kTagGpSequential = 19,
};

inline Vec theta_for(double r, int n, ThetaDirection dir) {
  Vec theta = Vec::Zero(n);
  const double scale = r * std::sqrt(static_cast<double>(n));
  if (dir == ThetaDirection::kAxis || n < 2) {
    theta(0) = scale;
  } else {
    theta(0) = scale / std::numbers::sqrt2;
    theta(1) = -scale / std::numbers::sqrt2;
  }
  return theta;
}

/// Fills one Record per alpha for a replicate whose bound curve is `bound`.
template <class Bound>
void fill_records(Record* out, const ExperimentConfig& cfg, double grid_value, std::size_t rep, double loss_default,
                  double loss_alt, const Bound& bound) {
  double c = std::numeric_limits<double>::quiet_NaN();
  if (cfg.c_values) c = c_value(LowerBoundEvaluator([&bound](double a) { return bound(a); })).c_value;
  for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai) {
    const double alpha = cfg.alphas[ai];
    const double b = bound(alpha);
    const bool selected = cfg.c_values ? two_stage_choice(c, alpha) == Reported::kAlternative : b > 0.0;
    out[ai] = Record{grid_value, alpha, rep, loss_default - loss_alt, b, c, selected, loss_default, loss_alt};
  }
}

inline SimulationReport run_normal_means(const ExperimentConfig& cfg, bool with_sure) {
  cfg.validate();
  SimulationReport report;
  report.config = cfg;
  const std::size_t reps = static_cast<std::size_t>(cfg.replicates);
  const std::size_t na = cfg.alphas.size();
  const std::size_t tasks = cfg.grid.size() * reps;
  report.records.resize(tasks * na);
  if (with_sure) report.sure.resize(tasks);
  const std::uint64_t tag = cfg.family == BoundFamily::kJamesStein ? kTagJamesStein : kTagNormalMeans;
  const Eigen::Index n = cfg.n;
  const Mat ls_a = lindley_smith(Vec::Zero(n), cfg.tau).form.a;
  std::shared_ptr<const AffineBoundGeometry> ls_geometry;
  if (cfg.family == BoundFamily::kAffineLindleySmith) {
    ls_geometry = std::make_shared<const AffineBoundGeometry>(Mat::Identity(n, n), Mat::Identity(n, n), ls_a,
                                                              Vec::Zero(n), Vec::Zero(n));
  }

  parallel_for(tasks, cfg.workers, [&](std::size_t task) {
    const std::size_t g = task / reps;
    const std::size_t i = task % reps;
    const double r = cfg.grid[g];
    ReplicateRng rng(cfg.seed, tag, g, i);
    const Vec theta = theta_for(r, cfg.n, cfg.direction);
    const Vec y = theta + rng.normal_vector(n);
    Record* out = &report.records[task * na];
    const double loss_default = (y - theta).squaredNorm();

    switch (cfg.family) {
      case BoundFamily::kBound1: {
        const auto spec = SubspaceShrinkageSpec::grand_mean(y, cfg.tau);
        const Vec alt = subspace_comparison(spec).alternative_estimate;
        const SubspaceShrinkageBound bound(spec);
        fill_records(out, cfg, r, i, loss_default, (alt - theta).squaredNorm(), bound);
        break;
      }
      case BoundFamily::kJamesStein: {
        const auto js = james_stein(y);
        const auto spec = SubspaceShrinkageSpec::origin(y, std::sqrt(js.tau2_hat));
        const SubspaceShrinkageBound bound(spec);
        fill_records(out, cfg, r, i, loss_default, (js.estimate - theta).squaredNorm(), bound);
        break;
      }
      case BoundFamily::kAffineLindleySmith: {
        const AffineWinBound bound(ls_geometry, y);
        fill_records(out, cfg, r, i, loss_default, (ls_a * y - theta).squaredNorm(), bound);
        break;
      }
    }
    if (with_sure) {
      const auto s = sure_selector(y, cfg.tau, cfg.sure_rule);
      report.sure[task] = {r, i, out[0].win, s.sure, s.alternative};
    }
  });
  report.summary = summarize(report);
  return report;
}

}  // namespace detail

/// Coverage of b(y, alpha) across the theta grid.
inline SimulationReport run_calibration(const ExperimentConfig& cfg) { return detail::run_normal_means(cfg, false); }

/// Two-stage selections and contingency tables, with the SURE selector alongside.
inline SimulationReport run_selection_study(const ExperimentConfig& cfg) {
  return detail::run_normal_means(cfg, true);
}

/// Monte Carlo risks of the default, alternative and two-stage estimates.
inline SimulationReport run_risk_profile(const ExperimentConfig& cfg) { return detail::run_normal_means(cfg, false); }

/// N = 2: theta with ||theta - mean(theta) 1||^2 = cfg.pitfall_spread, Lindley-Smith vs MLE.
inline SimulationReport run_risk_pitfall_demo(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.n != 2) throw DomainError("pitfall demo uses N = 2");
  SimulationReport report;
  report.config = cfg;
  const std::size_t reps = static_cast<std::size_t>(cfg.replicates);
  const std::size_t na = cfg.alphas.size();
  report.records.resize(reps * na);
  const double a = std::sqrt(cfg.pitfall_spread / 2.0);
  Vec theta(2);
  theta << a, -a;

  parallel_for(reps, cfg.workers, [&](std::size_t i) {
    ReplicateRng rng(cfg.seed, detail::kTagPitfall, 0, i);
    const Vec y = theta + rng.normal_vector(2);
    const auto spec = SubspaceShrinkageSpec::grand_mean(y, cfg.tau);
    const Vec alt = subspace_comparison(spec).alternative_estimate;
    const SubspaceShrinkageBound bound(spec);
    detail::fill_records(&report.records[i * na], cfg, cfg.pitfall_spread, i, (y - theta).squaredNorm(),
                         (alt - theta).squaredNorm(), bound);
  });
  report.summary = summarize(report);
  return report;
}

namespace detail {

struct LogisticDraw {
  LogisticData data;
  Vec theta;
};

inline LogisticDraw draw_logistic(ReplicateRng& rng, int n, int m) {
  Vec theta = rng.normal_vector(n, std::sqrt(0.5));
  Mat x(m, n);
  const double sd = 1.0 / n;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) x(i, j) = sd * rng.normal();
  }
  Vec labels(m);
  const Vec logits = x * theta;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits(i)));
    labels(i) = rng.uniform() < p ? 1.0 : -1.0;
  }
  return {LogisticData(std::move(x), std::move(labels)), std::move(theta)};
}

}  // namespace detail

/// Convergence of the Laplace-approximate MAP and coverage of the affine bound for logistic regression.
inline SimulationReport run_logistic_experiments(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& lp = cfg.logistic;
  if (lp.m_grid.size() < 2 || lp.convergence_replicates < 1) throw DomainError("logistic convergence grid too small");
  SimulationReport report;
  report.config = cfg;

  const std::size_t conv_reps = static_cast<std::size_t>(lp.convergence_replicates);
  const std::size_t conv_tasks = lp.m_grid.size() * conv_reps;
  std::vector<std::optional<ConvergenceRecord>> conv(conv_tasks);
  parallel_for(conv_tasks, cfg.workers, [&](std::size_t task) {
    const std::size_t g = task / conv_reps;
    const std::size_t i = task % conv_reps;
    ReplicateRng rng(cfg.seed, detail::kTagLogisticConvergence, g, i);
    const auto draw = detail::draw_logistic(rng, lp.convergence_n, lp.m_grid[g]);
    try {
      const auto lap = logistic_laplace_affine(draw.data);
      const Vec map = logistic_map(draw.data);
      conv[task] = ConvergenceRecord{lp.m_grid[g], i, (lap.estimate - map).norm(), (lap.mle - draw.theta).norm(),
                                     (map - draw.theta).norm()};
    } catch (const NumericalError&) {
    } catch (const DomainError&) {
    }
  });

  const std::size_t reps = static_cast<std::size_t>(cfg.replicates);
  const std::size_t na = cfg.alphas.size();
  std::vector<std::optional<std::vector<Record>>> cov(reps);
  parallel_for(reps, cfg.workers, [&](std::size_t i) {
    ReplicateRng rng(cfg.seed, detail::kTagLogisticCoverage, 0, i);
    const auto draw = detail::draw_logistic(rng, lp.coverage_n, lp.coverage_m);
    try {
      const auto lap = logistic_laplace_affine(draw.data);
      const Vec map = logistic_map(draw.data);
      const Eigen::Index n = lp.coverage_n;
      const AffineComparison cmp(lap.sigma, Mat::Identity(n, n), lap.c, Vec::Zero(n), Vec::Zero(n), lap.mle);
      const AffineWinBound bound(cmp);
      std::vector<Record> rows(na);
      detail::fill_records(rows.data(), cfg, static_cast<double>(lp.coverage_m), i,
                           (lap.mle - draw.theta).squaredNorm(), (map - draw.theta).squaredNorm(), bound);
      cov[i] = std::move(rows);
    } catch (const NumericalError&) {
    } catch (const DomainError&) {
    }
  });

  for (auto& c : conv) {
    if (c) {
      report.convergence.push_back(*c);
    } else {
      ++report.dropped;
    }
  }
  for (auto& c : cov) {
    if (c) {
      report.records.insert(report.records.end(), c->begin(), c->end());
    } else {
      ++report.dropped;
    }
  }
  report.summary = summarize(report);
  return report;
}

/// Synthetic drifter layout: each drifter starts at a random point and moves with a random constant velocity.
inline std::vector<SpaceTime> gp_layout(const GpExperimentParams& p, std::uint64_t seed) {
  ReplicateRng rng(seed, detail::kTagGpLayout, 0, 0);
  std::vector<SpaceTime> coords;
  coords.reserve(static_cast<std::size_t>(p.drifters * p.times));
  for (int d = 0; d < p.drifters; ++d) {
    const double lat0 = p.spread_km * rng.normal();
    const double lon0 = p.spread_km * rng.normal();
    const double vlat = 0.5 * rng.normal();
    const double vlon = 0.5 * rng.normal();
    for (int t = 0; t < p.times; ++t) {
      const double hours = t * p.dt_hours;
      coords.push_back({lat0 + vlat * hours, lon0 + vlon * hours, hours});
    }
  }
  return coords;
}

/// Multi-scale vs nugget-baseline GP posterior means, plus the three-way sequential chain.
///
/// Grid value 0: data drawn from the multi-scale prior.  Grid value 1: data
/// drawn from the baseline prior.  The sequential chain uses baseline-prior data.
inline SimulationReport run_gp_model_comparison(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& p = cfg.gp;
  if (p.drifters < 1 || p.times < 1) throw DomainError("gp layout must have at least one drifter and time");
  SimulationReport report;
  report.config = cfg;

  const auto coords = gp_layout(p, cfg.seed);
  const auto n = static_cast<Eigen::Index>(coords.size());
  const Mat k_multi = gp_covariance(coords, GpKernel::kMultiScale, p.kernel);
  const Mat k_base = gp_covariance(coords, GpKernel::kMesoscalePlusNugget, p.kernel);
  const Mat a_multi = gp_posterior_mean_from_covariance(k_multi, Vec::Zero(n), p.sigma_eps).form.a;
  const Mat a_base = gp_posterior_mean_from_covariance(k_base, Vec::Zero(n), p.sigma_eps).form.a;
  const auto prior_factor = [n](const Mat& k) {
    Eigen::LLT<Mat> llt(k + 1e-10 * k.diagonal().mean() * Mat::Identity(n, n));
    if (llt.info() != Eigen::Success) throw NumericalError("gp prior covariance is not positive definite");
    return Mat(llt.matrixL());
  };
  const Mat l_multi = prior_factor(k_multi);
  const Mat l_base = prior_factor(k_base);
  const Mat noise = p.sigma_eps * p.sigma_eps * Mat::Identity(n, n);
  const Mat id = Mat::Identity(n, n);
  const Vec zero = Vec::Zero(n);
  const auto base_vs_multi = std::make_shared<const AffineBoundGeometry>(noise, a_base, a_multi, zero, zero);
  const auto mle_vs_base = std::make_shared<const AffineBoundGeometry>(noise, id, a_base, zero, zero);

  const std::size_t reps = static_cast<std::size_t>(cfg.replicates);
  const std::size_t na = cfg.alphas.size();
  const std::vector<double> scenarios{0.0, 1.0};
  report.records.resize(scenarios.size() * reps * na);
  parallel_for(scenarios.size() * reps, cfg.workers, [&](std::size_t task) {
    const std::size_t s = task / reps;
    const std::size_t i = task % reps;
    ReplicateRng rng(cfg.seed, s == 0 ? detail::kTagGpMulti : detail::kTagGpBaseline, 0, i);
    const Vec theta = (s == 0 ? l_multi : l_base) * rng.normal_vector(n);
    const Vec y = theta + rng.normal_vector(n, p.sigma_eps);
    const AffineWinBound bound(base_vs_multi, y);
    detail::fill_records(&report.records[task * na], cfg, scenarios[s], i, (a_base * y - theta).squaredNorm(),
                         (a_multi * y - theta).squaredNorm(), bound);
  });

  const double alpha = cfg.alphas.back();
  report.sequential.resize(reps);
  parallel_for(reps, cfg.workers, [&](std::size_t i) {
    ReplicateRng rng(cfg.seed, detail::kTagGpSequential, 0, i);
    const Vec theta = l_base * rng.normal_vector(n);
    const Vec y = theta + rng.normal_vector(n, p.sigma_eps);
    SequentialRecord rec{i, 0.0, std::numeric_limits<double>::quiet_NaN(), 0, 0.0, 0.0, 0.0, false};
    rec.loss_mle = (y - theta).squaredNorm();
    rec.loss_baseline = (a_base * y - theta).squaredNorm();
    rec.loss_multiscale = (a_multi * y - theta).squaredNorm();
    rec.c_first = c_value(affine_bound_evaluator(AffineWinBound(mle_vs_base, y))).c_value;
    if (rec.c_first > alpha) {
      rec.reported = 1;
      rec.misselected = rec.loss_baseline > rec.loss_mle;
      rec.c_second = c_value(affine_bound_evaluator(AffineWinBound(base_vs_multi, y))).c_value;
      if (rec.c_second > alpha) {
        rec.reported = 2;
        rec.misselected = rec.misselected || rec.loss_multiscale > rec.loss_baseline;
      }
    }
    report.sequential[i] = rec;
  });

  report.summary = summarize(report);
  return report;
}

inline SimulationReport run_experiment(const ExperimentConfig& cfg) {
  const std::string& name = cfg.name;
  if (name == "calibration" || name == "eb") return run_calibration(cfg);
  if (name == "selection") return run_selection_study(cfg);
  if (name == "risk") return run_risk_profile(cfg);
  if (name == "pitfall") return run_risk_pitfall_demo(cfg);
  if (name == "logistic") return run_logistic_experiments(cfg);
  if (name == "gp") return run_gp_model_comparison(cfg);
  (void)default_config(name);
  throw DomainError("experiment '" + name + "' has no runner");
}

/// Short human-readable lines with the main numbers of a report.
inline std::vector<std::string> headline(const SimulationReport& r) {
  std::vector<std::string> out;
  const auto& s = r.summary;
  char buf[256];
  const std::string& name = r.config.name;
  if (s.contains("coverage") && (name == "calibration" || name == "eb" || name == "logistic")) {
    for (const auto& c : s["coverage"]) {
      std::snprintf(buf, sizeof buf, "coverage grid=%g alpha=%g: %.3f (nominal se %.3f)",
                    c["grid_value"].get<double>(), c["alpha"].get<double>(), c["coverage"].get<double>(),
                    c["nominal_se"].get<double>());
      out.emplace_back(buf);
    }
  }
  if (s.contains("selection") && (name == "selection" || name == "gp")) {
    for (const auto& c : s["selection"]) {
      std::snprintf(buf, sizeof buf, "selection grid=%g alpha=%g: P[alt]=%.3f P[mistake]=%.3f",
                    c["grid_value"].get<double>(), c["alpha"].get<double>(),
                    c["selection_probability"].get<double>(), c["mistake_probability"].get<double>());
      out.emplace_back(buf);
    }
  }
  if (s.contains("risk") && (name == "risk" || name == "pitfall")) {
    for (const auto& c : s["risk"]) {
      std::snprintf(buf, sizeof buf, "risk grid=%g: default %.4f (se %.4f) alternative %.4f (se %.4f)",
                    c["grid_value"].get<double>(), c["risk_default"].get<double>(), c["se_default"].get<double>(),
                    c["risk_alt"].get<double>(), c["se_alt"].get<double>());
      out.emplace_back(buf);
    }
  }
  if (s.contains("sure")) {
    for (const auto& c : s["sure"]) {
      std::snprintf(buf, sizeof buf, "sure grid=%g: alternative reported %.1f%%, wrong %.1f%%",
                    c["grid_value"].get<double>(), c["table"]["alternative_reported"].get<double>(),
                    c["table"]["wrong"].get<double>());
      out.emplace_back(buf);
    }
  }
  if (s.contains("mle_smaller_fraction")) {
    std::snprintf(buf, sizeof buf, "MLE smaller loss in %zu of %zu replicates (%.4f)",
                  s["mle_smaller_loss"].get<std::size_t>(), static_cast<std::size_t>(r.config.replicates),
                  s["mle_smaller_fraction"].get<double>());
    out.emplace_back(buf);
  }
  if (s.contains("convergence_slopes")) {
    const auto& c = s["convergence_slopes"];
    std::snprintf(buf, sizeof buf, "slopes: approx-to-MAP %.3f, MLE-to-theta %.3f, MAP-to-theta %.3f",
                  c["approx_to_map"].get<double>(), c["mle_to_theta"].get<double>(),
                  c["map_to_theta"].get<double>());
    out.emplace_back(buf);
  }
  if (s.contains("c_value_summary")) {
    for (const auto& c : s["c_value_summary"]) {
      std::snprintf(buf, sizeof buf, "median c-value grid=%g: %.5f", c["grid_value"].get<double>(),
                    c["median"].get<double>());
      out.emplace_back(buf);
    }
  }
  if (s.contains("sequential")) {
    std::snprintf(buf, sizeof buf, "sequential misselection rate %.4f (se %.4f)",
                  s["sequential"]["misselection_rate"].get<double>(), s["sequential"]["se"].get<double>());
    out.emplace_back(buf);
  }
  if (r.dropped > 0) out.push_back("dropped replicates: " + std::to_string(r.dropped));
  return out;
}

}  // namespace cvalue
