#pragma once

// Command-line front end: `compare` computes a c-value for two estimators on a
// dataset described by a JSON config; `simulate` runs a named experiment.
//
// Exit codes: 0 success, 2 user error (bad input, config or dimensions),
// 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cvalue/affine.hpp"
#include "cvalue/core.hpp"
#include "cvalue/errors.hpp"
#include "cvalue/estimators.hpp"
#include "cvalue/io.hpp"
#include "cvalue/normal_means.hpp"
#include "cvalue/simulation.hpp"

namespace cvalue::cli {

enum ExitCode : int { kOk = 0, kUserError = 2, kNumericalError = 3 };

using nlohmann::json;
namespace fs = std::filesystem;

struct CompareOptions {
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool sigma_diag = false;
  bool berry_esseen = false;
};

namespace detail {

inline const json& require_key(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw DomainError(where + ": missing key '" + key + "'");
  return j.at(key);
}

inline double number(const json& j, const char* key, const std::string& where) {
  const auto& v = require_key(j, key, where);
  if (!v.is_number()) throw DomainError(where + ": '" + key + "' must be a number");
  return v.get<double>();
}

inline double number_or(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw DomainError(std::string("'") + key + "' must be a number");
  return j.at(key).get<double>();
}

inline std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).string();
}

/// Observation model loaded from the files named under `model`.
struct GaussianModel {
  Vec y;
  Mat sigma;
  /// sd when sigma = sd^2 I.
  std::optional<double> isotropic_sd;
  std::optional<Mat> x;
  std::optional<Vec> z;
  std::optional<std::vector<SpaceTime>> coords;
};

inline std::optional<double> isotropic_scale(const Mat& sigma) {
  const double d = sigma(0, 0);
  const Mat expected = d * Mat::Identity(sigma.rows(), sigma.cols());
  if (d > 0.0 && (sigma - expected).cwiseAbs().maxCoeff() <= 1e-14 * d) return std::sqrt(d);
  return std::nullopt;
}

inline GaussianModel load_gaussian(const json& model, const fs::path& base, bool sigma_diag_flag) {
  GaussianModel m;
  const std::string where = "model";
  const auto path = [&](const char* key) {
    const auto& v = require_key(model, key, where);
    if (!v.is_string()) throw DomainError(where + ": '" + key + "' must be a file path");
    return resolve(base, v.get<std::string>());
  };
  m.y = read_vector_csv(path("y"));
  const Eigen::Index n = m.y.size();

  if (model.contains("sigma")) {
    const bool diag = sigma_diag_flag || model.value("sigma_diag", false);
    const std::string p = path("sigma");
    if (diag) {
      const Vec d = read_vector_csv(p);
      if (d.size() != n) {
        throw DimensionError(p + ": expected " + std::to_string(n) + " variances, found " + std::to_string(d.size()));
      }
      if (!(d.array() > 0.0).all()) throw DomainError(p + ": variances must be positive");
      m.sigma = d.asDiagonal();
    } else {
      m.sigma = read_matrix_csv(p);
      if (m.sigma.rows() != n || m.sigma.cols() != n) {
        throw DimensionError(p + ": expected a " + std::to_string(n) + "x" + std::to_string(n) + " matrix, found " +
                             std::to_string(m.sigma.rows()) + "x" + std::to_string(m.sigma.cols()));
      }
    }
  } else {
    const double sd = number_or(model, "noise_sd", 1.0);
    if (!(sd > 0.0)) throw DomainError("model: noise_sd must be positive");
    m.sigma = sd * sd * Mat::Identity(n, n);
  }
  m.isotropic_sd = isotropic_scale(m.sigma);

  if (model.contains("x")) {
    const std::string p = path("x");
    m.x = read_matrix_csv(p);
    if (m.x->rows() != n) {
      throw DimensionError(p + ": expected " + std::to_string(n) + " rows, found " + std::to_string(m.x->rows()));
    }
  }
  if (model.contains("z")) {
    const std::string p = path("z");
    m.z = read_vector_csv(p);
    if (m.z->size() != n) {
      throw DimensionError(p + ": expected " + std::to_string(n) + " values, found " + std::to_string(m.z->size()));
    }
  }
  if (model.contains("coords")) {
    const std::string p = path("coords");
    const Mat c = read_matrix_csv(p);
    if (c.rows() != n || c.cols() != 3) {
      throw DimensionError(p + ": expected " + std::to_string(n) + " rows of lat,lon,t");
    }
    std::vector<SpaceTime> coords;
    for (Eigen::Index i = 0; i < n; ++i) coords.push_back({c(i, 0), c(i, 1), c(i, 2)});
    m.coords = std::move(coords);
  }
  return m;
}

inline SquaredExponential parse_kernel(const json& j, const std::string& where) {
  SquaredExponential k{number(j, "variance", where), number(j, "r_lat", where), number(j, "r_lon", where),
                       number(j, "r_t", where)};
  k.validate();
  return k;
}

struct BuiltEstimator {
  AffineEstimate value;
  /// Noise covariance override (empirical-Bayes plug-in scale).
  std::optional<Mat> sigma;
  json summary;
};

/// tau in data units; the shrinkage factor uses the isotropic noise scale.
inline double unit_tau(const json& spec, const GaussianModel& m, const std::string& where) {
  const double tau = number(spec, "tau", where);
  if (!m.isotropic_sd) throw DomainError(where + ": requires an isotropic covariance sigma^2 I");
  return tau / *m.isotropic_sd;
}

inline BuiltEstimator build_affine(const json& spec, const GaussianModel& m, const std::string& where) {
  const std::string kind = require_key(spec, "kind", where).get<std::string>();
  const Eigen::Index n = m.y.size();
  BuiltEstimator out;
  out.summary["kind"] = kind;
  if (kind == "mle") {
    out.value = mle(m.y);
  } else if (kind == "lindley_smith") {
    out.value = lindley_smith(m.y, unit_tau(spec, m, where));
  } else if (kind == "morris") {
    if (!m.x) throw DomainError(where + ": morris requires model.x");
    out.value = morris_shrinkage(m.y, *m.x, unit_tau(spec, m, where));
  } else if (kind == "fay_herriot") {
    if (!m.x) throw DomainError(where + ": fay_herriot requires model.x");
    const Vec s = m.sigma.diagonal();
    if (!m.sigma.isDiagonal(1e-14)) throw DomainError(where + ": fay_herriot requires a diagonal covariance");
    if (spec.value("fit", false)) {
      const bool profile = spec.value("profile_sigma", false);
      const EbFit fit = eb_fit_fay_herriot(m.y, *m.x, s, profile ? EbScale::kProfiled : EbScale::kKnown);
      const Vec scaled = fit.sigma * fit.sigma * s;
      out.value = fay_herriot_mean(m.y, *m.x, fit.beta, fit.tau, scaled);
      out.sigma = Mat(scaled.asDiagonal());
      out.summary["fit"] = {{"beta", std::vector<double>(fit.beta.data(), fit.beta.data() + fit.beta.size())},
                            {"tau", fit.tau},
                            {"sigma", fit.sigma}};
    } else {
      const auto beta = require_key(spec, "beta", where).get<std::vector<double>>();
      out.value = fay_herriot_mean(m.y, *m.x, Eigen::Map<const Vec>(beta.data(), static_cast<Eigen::Index>(beta.size())),
                                   number(spec, "tau", where), s);
    }
  } else if (kind == "two_source" || kind == "two_source_spatial") {
    if (!m.z) throw DomainError(where + ": " + kind + " requires model.z");
    const double sy = number(spec, "sigma_y", where);
    const double sz = number(spec, "sigma_z", where);
    const double sd = number(spec, "sigma_delta", where);
    if (kind == "two_source") {
      out.value = two_source_posterior(m.y, *m.z, sy, sz, sd);
    } else {
      if (!m.coords) throw DomainError(where + ": two_source_spatial requires model.coords");
      const auto k = parse_kernel(require_key(spec, "kernel", where), where + ".kernel");
      Mat cov(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) cov(i, j) = k((*m.coords)[i], (*m.coords)[j]);
      }
      out.value = two_source_spatial_posterior(m.y, *m.z, sy, sz, sd, cov);
    }
  } else if (kind == "gp_posterior") {
    if (!m.coords) throw DomainError(where + ": gp_posterior requires model.coords");
    const std::string kernel = require_key(spec, "kernel", where).get<std::string>();
    GpKernel kk;
    if (kernel == "multi_scale") {
      kk = GpKernel::kMultiScale;
    } else if (kernel == "mesoscale_plus_nugget") {
      kk = GpKernel::kMesoscalePlusNugget;
    } else {
      throw DomainError(where + ": kernel must be multi_scale or mesoscale_plus_nugget");
    }
    const GpKernelParams params{parse_kernel(require_key(spec, "meso", where), where + ".meso"),
                                parse_kernel(require_key(spec, "submeso", where), where + ".submeso")};
    out.value = gp_posterior_mean(*m.coords, m.y, kk, params, number(spec, "sigma_eps", where));
  } else {
    throw DomainError(where + ": unknown or non-affine estimator kind '" + kind + "'");
  }
  return out;
}

inline json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json curve_json(const CValueResult& r) {
  json curve = json::array();
  for (const auto& s : r.bound_samples) curve.push_back({{"alpha", s.alpha}, {"bound", s.bound}});
  return curve;
}

inline void finish_result(json& out, const CValueResult& r, double alpha, const LowerBoundEvaluator& bound) {
  out["c_value"] = r.c_value;
  out["saturated"] = r.saturated;
  out["monotone"] = r.monotone;
  out["tolerance"] = r.tolerance;
  out["bound_curve"] = curve_json(r);
  out["alpha"] = alpha;
  out["bound_at_alpha"] = bound(alpha);
  out["selected_at_alpha"] = two_stage_choice(r.c_value, alpha) == Reported::kAlternative ? "alternative" : "default";
  auto& warnings = out["warnings"];
  if (r.saturated) warnings.push_back("bound stays positive up to alpha = 1; c-value reported as 1");
  if (!r.monotone) warnings.push_back("bound curve is not monotone in alpha; c-value taken from a dense grid scan");
}

inline json compare_exact(const json& def, const json& alt, const GaussianModel& m, double alpha) {
  const std::string kind = alt.at("kind").get<std::string>();
  const double sd = *m.isotropic_sd;
  std::optional<SubspaceShrinkageSpec> spec;
  json alt_summary{{"kind", kind}};
  if (kind == "lindley_smith") {
    spec.emplace(SubspaceShrinkageSpec::grand_mean(m.y, number(alt, "tau", "alternative"), sd));
  } else if (kind == "morris") {
    if (!m.x) throw DomainError("alternative: morris requires model.x");
    spec.emplace(m.y, *m.x, number(alt, "tau", "alternative"), sd);
  } else {
    const auto js = james_stein(m.y / sd);
    alt_summary["tau2_hat"] = js.tau2_hat;
    spec.emplace(SubspaceShrinkageSpec::origin(m.y, sd * std::sqrt(js.tau2_hat), sd));
  }
  const auto problem = subspace_comparison(*spec);
  alt_summary["estimate"] = vec_json(problem.alternative_estimate);
  json out;
  out["method"] = "exact_subspace";
  out["warnings"] = json::array();
  out["estimator_summaries"] = {{"default", {{"kind", def.at("kind")}, {"estimate", vec_json(m.y)}}},
                                {"alternative", alt_summary}};
  const auto evaluator = subspace_bound_evaluator(*spec);
  finish_result(out, c_value(evaluator), alpha, evaluator);
  return out;
}

inline json compare_affine(const AffineComparison& cmp, const json& summaries, const CompareOptions& opts,
                           double alpha, const std::string& method) {
  json out;
  out["method"] = method;
  out["warnings"] = json::array();
  const AffineWinBound bound(cmp);
  for (const auto& w : bound.warnings()) out["warnings"].push_back(w);
  out["estimator_summaries"] = summaries;
  if (opts.berry_esseen) {
    const auto be = bound.berry_esseen();
    out["berry_esseen"] = {{"epsilon", be.epsilon}, {"kappa", be.kappa}, {"symmetric", be.symmetric}};
    if (!be.symmetric) out["berry_esseen"]["kappa_sym"] = be.kappa_sym;
  }
  const auto evaluator = affine_bound_evaluator(cmp, opts.berry_esseen);
  finish_result(out, c_value(evaluator), alpha, evaluator);
  return out;
}

inline json compare_logistic(const json& model, const fs::path& base, const CompareOptions& opts, double alpha) {
  const Mat x = read_matrix_csv(resolve(base, require_key(model, "x", "model").get<std::string>()));
  const std::string labels_path = resolve(base, require_key(model, "labels", "model").get<std::string>());
  const Vec labels = read_vector_csv(labels_path);
  if (labels.size() != x.rows()) {
    throw DimensionError(labels_path + ": expected " + std::to_string(x.rows()) + " labels, found " +
                         std::to_string(labels.size()));
  }
  const LogisticData data(x, labels);
  const auto lap = logistic_laplace_affine(data);
  const Vec map = logistic_map(data);
  const Eigen::Index n = x.cols();
  const AffineComparison cmp(lap.sigma, Mat::Identity(n, n), lap.c, Vec::Zero(n), Vec::Zero(n), lap.mle);
  const json summaries{{"default", {{"kind", "logistic_mle"}, {"estimate", vec_json(lap.mle)}}},
                       {"alternative",
                        {{"kind", "logistic_map"},
                         {"estimate", vec_json(map)},
                         {"laplace_estimate", vec_json(lap.estimate)}}}};
  return compare_affine(cmp, summaries, opts, alpha, "logistic_laplace");
}

inline json compare_hier(const json& model, const json& alt, const fs::path& base, const CompareOptions& opts,
                         double alpha) {
  const auto mat = [&](const char* key) {
    return read_matrix_csv(resolve(base, require_key(model, key, "model").get<std::string>()));
  };
  const auto vec = [&](const char* key) {
    return read_vector_csv(resolve(base, require_key(model, key, "model").get<std::string>()));
  };
  const auto h = hier_regression_posterior(mat("xbar"), vec("ybar"), mat("w"), vec("z"), mat("x"),
                                           number(alt, "sigma_beta", "alternative"));
  const Eigen::Index n = h.theta_hat.size();
  const AffineComparison cmp(h.sigma, Mat::Identity(n, n), h.posterior.form.a, Vec::Zero(n), h.posterior.form.k,
                             h.theta_hat);
  const json summaries{{"default", {{"kind", "mle"}, {"estimate", vec_json(h.theta_hat)}}},
                       {"alternative", {{"kind", "hier_regression"}, {"estimate", vec_json(h.posterior.estimate)}}}};
  return compare_affine(cmp, summaries, opts, alpha, "affine");
}

}  // namespace detail

/// Runs `compare` on a parsed config whose relative paths resolve against `base`.
inline json compare(const json& config, const fs::path& base, const CompareOptions& opts) {
  const double alpha = opts.alpha ? *opts.alpha : detail::number_or(config, "alpha", 0.95);
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  const json& model = detail::require_key(config, "model", "config");
  const json& def = detail::require_key(config, "default", "config");
  const json& alt = detail::require_key(config, "alternative", "config");
  const std::string type = model.value("type", "gaussian");
  const std::string def_kind = detail::require_key(def, "kind", "default").get<std::string>();
  const std::string alt_kind = detail::require_key(alt, "kind", "alternative").get<std::string>();

  json out;
  if (type == "logistic") {
    if (def_kind != "logistic_mle" || alt_kind != "logistic_map") {
      throw DomainError("logistic model compares default logistic_mle against alternative logistic_map");
    }
    out = detail::compare_logistic(model, base, opts, alpha);
  } else if (type == "hier_regression") {
    if (def_kind != "mle" || alt_kind != "hier_regression") {
      throw DomainError("hier_regression model compares default mle against alternative hier_regression");
    }
    out = detail::compare_hier(model, alt, base, opts, alpha);
  } else if (type == "gaussian") {
    const auto m = detail::load_gaussian(model, base, opts.sigma_diag);
    static const std::set<std::string> exact{"lindley_smith", "morris", "james_stein"};
    if (def_kind == "mle" && exact.contains(alt_kind) && m.isotropic_sd) {
      out = detail::compare_exact(def, alt, m, alpha);
      if (opts.berry_esseen) out["warnings"].push_back("berry-esseen correction does not apply to the exact bound");
    } else {
      if (alt_kind == "james_stein" || def_kind == "james_stein") {
        throw DomainError("james_stein is only supported against mle with an isotropic covariance");
      }
      const auto d = detail::build_affine(def, m, "default");
      const auto a = detail::build_affine(alt, m, "alternative");
      Mat sigma = m.sigma;
      if (a.sigma) sigma = *a.sigma;
      if (d.sigma) sigma = *d.sigma;
      json summaries{{"default", d.summary}, {"alternative", a.summary}};
      summaries["default"]["estimate"] = detail::vec_json(d.value.estimate);
      summaries["alternative"]["estimate"] = detail::vec_json(a.value.estimate);
      const AffineComparison cmp(sigma, d.value.form.a, a.value.form.a, d.value.form.k, a.value.form.k, m.y);
      out = detail::compare_affine(cmp, summaries, opts, alpha, "affine");
    }
  } else {
    throw DomainError("model.type must be gaussian, logistic or hier_regression");
  }
  if (opts.seed || config.contains("seed")) {
    out["seed"] = opts.seed ? *opts.seed : config.at("seed").get<std::uint64_t>();
  }
  return out;
}

struct SimulateOptions {
  std::string experiment;
  std::optional<std::string> config_path;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<int> n;
  std::optional<double> tau;
  std::optional<int> reps;
  std::vector<double> grid;
  std::vector<double> alphas;
  std::optional<std::string> family;
  std::optional<std::string> direction;
  bool no_c_values = false;
  bool sure_literal = false;
};

inline ExperimentConfig experiment_config(const SimulateOptions& o, const json& file) {
  ExperimentConfig c = default_config(o.experiment);
  const json sim = file.contains("simulation") ? file.at("simulation") : json::object();
  if (file.contains("seed")) c.seed = file.at("seed").get<std::uint64_t>();
  if (file.contains("alpha")) c.alphas = {file.at("alpha").get<double>()};
  if (sim.contains("n")) c.n = sim.at("n").get<int>();
  if (sim.contains("replicates")) c.replicates = sim.at("replicates").get<int>();
  if (sim.contains("tau")) c.tau = sim.at("tau").get<double>();
  if (sim.contains("grid")) c.grid = sim.at("grid").get<std::vector<double>>();
  if (sim.contains("alphas")) c.alphas = sim.at("alphas").get<std::vector<double>>();
  if (sim.contains("family")) c.family = parse_family(sim.at("family").get<std::string>());
  if (sim.contains("direction")) {
    const auto d = sim.at("direction").get<std::string>();
    if (d != "axis" && d != "orthogonal") throw DomainError("direction must be axis or orthogonal");
    c.direction = d == "axis" ? ThetaDirection::kAxis : ThetaDirection::kOrthogonal;
  }
  if (sim.contains("c_values")) c.c_values = sim.at("c_values").get<bool>();
  if (sim.contains("sure_rule")) {
    const auto r = sim.at("sure_rule").get<std::string>();
    if (r != "risk_minimizing" && r != "literal") throw DomainError("sure_rule must be risk_minimizing or literal");
    c.sure_rule = r == "literal" ? SureRule::kLiteral : SureRule::kRiskMinimizing;
  }
  if (sim.contains("workers")) c.workers = sim.at("workers").get<int>();
  if (sim.contains("logistic")) {
    const json& l = sim.at("logistic");
    c.logistic.convergence_n = l.value("convergence_n", c.logistic.convergence_n);
    c.logistic.m_grid = l.value("m_grid", c.logistic.m_grid);
    c.logistic.convergence_replicates = l.value("convergence_replicates", c.logistic.convergence_replicates);
    c.logistic.coverage_n = l.value("coverage_n", c.logistic.coverage_n);
    c.logistic.coverage_m = l.value("coverage_m", c.logistic.coverage_m);
  }
  if (sim.contains("gp")) {
    const json& g = sim.at("gp");
    c.gp.drifters = g.value("drifters", c.gp.drifters);
    c.gp.times = g.value("times", c.gp.times);
    c.gp.spread_km = g.value("spread_km", c.gp.spread_km);
    c.gp.dt_hours = g.value("dt_hours", c.gp.dt_hours);
    c.gp.sigma_eps = g.value("sigma_eps", c.gp.sigma_eps);
  }

  if (o.seed) c.seed = *o.seed;
  if (o.alpha) c.alphas = {*o.alpha};
  if (o.n) c.n = *o.n;
  if (o.tau) c.tau = *o.tau;
  if (o.reps) c.replicates = *o.reps;
  if (!o.grid.empty()) c.grid = o.grid;
  if (!o.alphas.empty()) c.alphas = o.alphas;
  if (o.family) c.family = parse_family(*o.family);
  if (o.direction) {
    if (*o.direction != "axis" && *o.direction != "orthogonal") {
      throw DomainError("direction must be axis or orthogonal");
    }
    c.direction = *o.direction == "axis" ? ThetaDirection::kAxis : ThetaDirection::kOrthogonal;
  }
  if (o.no_c_values) c.c_values = false;
  if (o.sure_literal) c.sure_rule = SureRule::kLiteral;
  if (o.workers) c.workers = *o.workers;
  if (c.name == "pitfall") c.grid = {c.pitfall_spread};
  if (c.name == "logistic") c.grid = {static_cast<double>(c.logistic.coverage_m)};
  c.validate();
  return c;
}

/// Writes `<prefix>.csv`, `<prefix>.json` and any auxiliary tables.  Returns the files written.
inline std::vector<std::string> write_report(const SimulationReport& r, const std::string& prefix) {
  std::vector<std::string> files;
  const auto open = [&](const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write file: " + path);
    files.push_back(path);
    return out;
  };
  {
    auto out = open(prefix + ".csv");
    write_records_csv(out, r.records);
  }
  if (!r.sure.empty()) {
    auto out = open(prefix + "_sure.csv");
    write_sure_csv(out, r.sure);
  }
  if (!r.convergence.empty()) {
    auto out = open(prefix + "_convergence.csv");
    write_convergence_csv(out, r.convergence);
  }
  if (!r.sequential.empty()) {
    auto out = open(prefix + "_sequential.csv");
    write_sequential_csv(out, r.sequential);
  }
  {
    auto out = open(prefix + ".json");
    out << r.summary.dump(2) << '\n';
  }
  return files;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DomainError(path + ": " + e.what());
  }
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"c-values for comparing a default and an alternative estimate"};
  app.require_subcommand(1);

  CompareOptions cmp;
  std::string compare_config;
  auto* compare_cmd = app.add_subcommand("compare", "compute a c-value for two estimators on a dataset");
  compare_cmd->add_option("--config", compare_config, "JSON config file")->required();
  compare_cmd->add_option("--alpha", cmp.alpha, "level used for the two-stage selection");
  compare_cmd->add_option("--seed", cmp.seed, "seed recorded in the output");
  compare_cmd->add_option("--out", cmp.out, "output JSON path (stdout if omitted)");
  compare_cmd->add_flag("--sigma-diag", cmp.sigma_diag, "covariance file holds the diagonal as a vector");
  compare_cmd->add_flag("--berry-esseen", cmp.berry_esseen, "shift the bound level by the Berry-Esseen correction");

  SimulateOptions sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "run a named simulation experiment");
  std::string names;
  for (const auto& n : experiment_names()) names += (names.empty() ? "" : ", ") + n;
  simulate_cmd->add_option("experiment", sim.experiment, "one of: " + names)->required();
  simulate_cmd->add_option("--config", sim.config_path, "JSON config file");
  simulate_cmd->add_option("--alpha", sim.alpha, "single alpha level");
  simulate_cmd->add_option("--alphas", sim.alphas, "alpha grid")->delimiter(',');
  simulate_cmd->add_option("--seed", sim.seed, "master seed");
  simulate_cmd->add_option("--out", sim.out, "output prefix (default: experiment name)");
  simulate_cmd->add_option("--workers", sim.workers, "worker threads");
  simulate_cmd->add_option("--n", sim.n, "dimension N");
  simulate_cmd->add_option("--tau", sim.tau, "prior scale tau");
  simulate_cmd->add_option("--reps", sim.reps, "replicates per grid point");
  simulate_cmd->add_option("--grid", sim.grid, "theta grid")->delimiter(',');
  simulate_cmd->add_option("--family", sim.family, "bound1, james_stein or affine_lindley_smith");
  simulate_cmd->add_option("--direction", sim.direction, "axis or orthogonal");
  simulate_cmd->add_flag("--no-c-values", sim.no_c_values, "skip c-values; select by the sign of the bound");
  simulate_cmd->add_flag("--sure-literal", sim.sure_literal, "SURE reports the alternative when its risk exceeds N");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUserError;
  }

  try {
    if (compare_cmd->parsed()) {
      const json config = read_json_file(compare_config);
      const fs::path base = fs::path(compare_config).parent_path();
      const json result = compare(config, base, cmp);
      std::optional<std::string> dest = cmp.out;
      if (!dest && config.contains("output")) dest = detail::resolve(base, config.at("output").get<std::string>());
      if (dest) {
        std::ofstream f(*dest);
        if (!f) throw DomainError("cannot write file: " + *dest);
        f << result.dump(2) << '\n';
        out << "c_value " << result.at("c_value").get<double>() << ", selected "
            << result.at("selected_at_alpha").get<std::string>() << " at alpha " << result.at("alpha").get<double>()
            << " -> " << *dest << '\n';
      } else {
        out << result.dump(2) << '\n';
      }
      for (const auto& w : result.at("warnings")) err << "warning: " << w.get<std::string>() << '\n';
      return kOk;
    }

    const json file = sim.config_path ? read_json_file(*sim.config_path) : json::object();
    const ExperimentConfig config = experiment_config(sim, file);
    std::string prefix = sim.out ? *sim.out : file.value("output", sim.experiment);
    const SimulationReport report = run_experiment(config);
    for (const auto& line : headline(report)) out << line << '\n';
    for (const auto& f : write_report(report, prefix)) out << "wrote " << f << '\n';
    return kOk;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kUserError;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kUserError;
  } catch (const json::exception& e) {
    err << "error: invalid config: " << e.what() << '\n';
    return kUserError;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const RangeError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  }
}

}  // namespace cvalue::cli
