#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sensipw/core.hpp"
#include "sensipw/extrema.hpp"
#include "sensipw/glm.hpp"

namespace sensipw {

enum class Estimand { mean_response, nonrespondent_mean, ate, att };
enum class Method { sipw, saipw };

struct EstimandKind {
  Estimand estimand = Estimand::mean_response;
  Method method = Method::sipw;
};

inline DataMode required_mode(Estimand e) {
  return e == Estimand::ate || e == Estimand::att ? DataMode::observational
                                                  : DataMode::missing_data;
}

inline bool needs_both_arms(Estimand e) { return e != Estimand::mean_response; }

inline const char* to_string(Estimand e) {
  switch (e) {
    case Estimand::mean_response: return "mean";
    case Estimand::nonrespondent_mean: return "mu0";
    case Estimand::ate: return "ate";
    case Estimand::att: return "att";
  }
  return "?";
}

inline const char* to_string(Method m) { return m == Method::sipw ? "sipw" : "saipw"; }

struct LipschitzSpec {
  double L = 1.0;
  LipschitzMetric metric = LipschitzMetric::scaled_euclidean;
};

struct SensitivitySpec {
  double lambda = 0.0;  // log of the odds-ratio bound
  std::optional<LipschitzSpec> lipschitz;

  double Lambda() const { return std::exp(lambda); }

  void validate() const {
    if (!(lambda >= 0) || !std::isfinite(lambda))
      throw Error(Errc::invalid_argument, "lambda must be finite and >= 0");
    if (lipschitz && !(lipschitz->L > 0))
      throw Error(Errc::invalid_argument, "Lipschitz constant must be > 0");
  }
};

struct PointInterval {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t lo_threshold = 0;
  std::size_t hi_threshold = 0;
};

/// Per-table data shared by every fit on that table (and every bootstrap
/// resample of it). Holds a reference: the table must outlive it.
struct PreparedTable {
  explicit PreparedTable(const ObservationTable& t)
      : table(&t), design(design_matrix(t)), partition(partition_by_arm(t)) {
    indicator.reserve(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) indicator.push_back(t.a(i));
    treated_mask.assign(t.indicators().begin(), t.indicators().end());
    control_mask.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) control_mask[i] = t.treated(i) ? 0 : 1;
  }

  const ObservationTable* table;
  Eigen::MatrixXd design;
  ArmPartition partition;
  std::vector<double> indicator;
  std::vector<std::uint8_t> treated_mask;
  std::vector<std::uint8_t> control_mask;
};

struct EstimatorContext {
  std::shared_ptr<const PreparedTable> data;
  std::vector<double> weights;  // case weights (resample multiplicities); empty: all 1
  LogisticFit propensity;
  std::optional<LinearFit> outcome_treated;  // regression of y on x among a = 1
  std::optional<LinearFit> outcome_control;  // regression of y on x among a = 0
  SensitivitySpec spec;

  const ObservationTable& table() const { return *data->table; }
  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
};

/// Fits the propensity model (and outcome regressions for SAIPW) on the
/// weighted rows. Fit failures surface as `Error` with a resample-degeneracy
/// code so the bootstrap can redraw.
inline EstimatorContext make_context(std::shared_ptr<const PreparedTable> data, EstimandKind kind,
                                     const SensitivitySpec& spec, std::vector<double> weights = {},
                                     const std::optional<Eigen::VectorXd>& initial_beta = {}) {
  spec.validate();
  const ObservationTable& t = *data->table;
  if (required_mode(kind.estimand) == DataMode::observational &&
      t.mode() != DataMode::observational)
    throw Error(Errc::unsupported, std::string("estimand ") + to_string(kind.estimand) +
                                       " needs an observational table (outcomes on every row)");

  double w1 = 0.0, w0 = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    (t.treated(i) ? w1 : w0) += weights.empty() ? 1.0 : weights[i];
  if (w1 <= 0) throw Error(Errc::degenerate_arm, "no rows with a = 1");
  if (w0 <= 0) throw Error(Errc::degenerate_arm, "no rows with a = 0");

  EstimatorContext ctx;
  ctx.data = data;
  ctx.weights = std::move(weights);
  ctx.spec = spec;
  LogisticOptions opt;
  opt.initial_beta = initial_beta;
  ctx.propensity = fit_logistic(data->design, data->indicator, ctx.weights, opt);
  if (!ctx.propensity.converged)
    throw Error(Errc::not_converged, "propensity model did not converge");

  if (kind.method == Method::saipw) {
    const bool needs_treated = kind.estimand != Estimand::att;
    const bool needs_control = kind.estimand == Estimand::ate || kind.estimand == Estimand::att;
    if (needs_treated)
      ctx.outcome_treated = fit_ols(data->design, t.outcomes(), data->treated_mask, ctx.weights);
    if (needs_control)
      ctx.outcome_control = fit_ols(data->design, t.outcomes(), data->control_mask, ctx.weights);
  }
  return ctx;
}

inline EstimatorContext make_context(const ObservationTable& table, EstimandKind kind,
                                     const SensitivitySpec& spec) {
  return make_context(std::make_shared<const PreparedTable>(table), kind, spec);
}

struct ArmProblem {
  FractionalProblem problem;
  std::vector<std::size_t> rows;  // table row of each problem row
};

/// Fractional problem over one arm. `values` replaces y when given (SAIPW
/// residuals); weights are exp(sign * g_hat).
inline ArmProblem build_arm_problem(const EstimatorContext& ctx, int arm,
                                    std::span<const double> values, double ghat_sign,
                                    bool unit_term) {
  const ObservationTable& t = ctx.table();
  const auto& ghat = ctx.propensity.linear_predictors;
  ArmProblem ap;
  if (values.empty()) {
    const auto& sorted = arm == 1 ? ctx.data->partition.observed : ctx.data->partition.unobserved;
    ap.rows.reserve(sorted.size());
    for (std::size_t i : sorted)
      if (ctx.weight(i) > 0) ap.rows.push_back(i);
    values = t.outcomes();
  } else {
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t.a(i) == arm && ctx.weight(i) > 0) ap.rows.push_back(i);
    ap.rows = sort_descending(std::move(ap.rows), values);
  }
  if (ap.rows.empty())
    throw Error(Errc::degenerate_arm, "arm a = " + std::to_string(arm) + " has no rows");

  FractionalProblem& p = ap.problem;
  p.Lambda = ctx.spec.Lambda();
  p.unit_term = unit_term;
  p.y.reserve(ap.rows.size());
  p.w.reserve(ap.rows.size());
  for (std::size_t i : ap.rows) {
    p.y.push_back(values[i]);
    p.w.push_back(std::exp(ghat_sign * ghat[i]));
  }
  if (!ctx.weights.empty()) {
    p.cell_weights.reserve(ap.rows.size());
    for (std::size_t i : ap.rows) p.cell_weights.push_back(ctx.weights[i]);
  }
  return ap;
}

namespace detail {

inline ExtremumResult extremize(const EstimatorContext& ctx, const ArmProblem& ap, Direction dir) {
  if (!ctx.spec.lipschitz) return threshold_extremum(ap.problem, dir);
  const ObservationTable& t = ctx.table();
  const std::size_t d = t.dim();
  std::vector<double> xs, ys;
  xs.reserve(ap.rows.size() * d);
  ys.reserve(ap.rows.size());
  for (std::size_t i : ap.rows) {
    xs.insert(xs.end(), t.x(i).begin(), t.x(i).end());
    ys.push_back(t.y(i));
  }
  // Distances use the outcome itself, also when the ratio runs over residuals.
  return lipschitz_extremum(ap.problem, xs, d, ctx.spec.lipschitz->L, ctx.spec.lipschitz->metric,
                            dir, {}, ys);
}

struct Range {
  ExtremumResult lo, hi;
};

inline Range extremize_both(const EstimatorContext& ctx, const ArmProblem& ap) {
  return {extremize(ctx, ap, Direction::minimize), extremize(ctx, ap, Direction::maximize)};
}

inline double weighted_mean(const EstimatorContext& ctx, std::span<const double> v, int arm) {
  const ObservationTable& t = ctx.table();
  double s = 0.0, total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (arm >= 0 && t.a(i) != arm) continue;
    s += ctx.weight(i) * v[i];
    total += ctx.weight(i);
  }
  return s / total;
}

inline std::vector<double> residuals(const EstimatorContext& ctx, const LinearFit& fit) {
  const ObservationTable& t = ctx.table();
  std::vector<double> r(t.size(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.has_y(i)) r[i] = t.y(i) - fit.fitted[i];
  return r;
}

inline const LinearFit& require(const std::optional<LinearFit>& fit, const char* what) {
  if (!fit) throw Error(Errc::invalid_argument, std::string("SAIPW needs the ") + what);
  return *fit;
}

}  // namespace detail

/// SIPW mean-response estimate at a fixed deviation pattern. `z` is indexed
/// by table row; only rows with a = 1 are read.
inline double sipw_at(const EstimatorContext& ctx, std::span<const double> z) {
  const ObservationTable& t = ctx.table();
  if (z.size() != t.size()) throw Error(Errc::dimension_mismatch, "sipw_at: z must have n entries");
  const auto& ghat = ctx.propensity.linear_predictors;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!t.treated(i) || ctx.weight(i) == 0) continue;
    const double mass = ctx.weight(i) * (1.0 + z[i] * std::exp(-ghat[i]));
    num += mass * t.y(i);
    den += mass;
  }
  if (den == 0) throw Error(Errc::degenerate_arm, "sipw_at: no observed rows");
  return num / den;
}

inline PointInterval mean_response_interval(const EstimatorContext& ctx) {
  const auto r = detail::extremize_both(ctx, build_arm_problem(ctx, 1, {}, -1.0, true));
  return {r.lo.value, r.hi.value, r.lo.threshold, r.hi.threshold};
}

inline PointInterval nonrespondent_mean_interval(const EstimatorContext& ctx) {
  if (ctx.table().n_control() == 0)
    throw Error(Errc::degenerate_arm, "non-respondent mean needs rows with a = 0");
  const auto r = detail::extremize_both(ctx, build_arm_problem(ctx, 1, {}, -1.0, false));
  return {r.lo.value, r.hi.value, r.lo.threshold, r.hi.threshold};
}

inline PointInterval ate_interval(const EstimatorContext& ctx) {
  const auto treated = build_arm_problem(ctx, 1, {}, -1.0, true);
  const auto control = build_arm_problem(ctx, 0, {}, +1.0, true);
  if (!ctx.spec.lipschitz) {
    const auto lo = separable_ate_extremum(treated.problem, control.problem, Direction::minimize);
    const auto hi = separable_ate_extremum(treated.problem, control.problem, Direction::maximize);
    return {lo.value, hi.value, lo.treated.threshold, hi.treated.threshold};
  }
  const auto t = detail::extremize_both(ctx, treated);
  const auto c = detail::extremize_both(ctx, control);
  return {t.lo.value - c.hi.value, t.hi.value - c.lo.value, t.lo.threshold, t.hi.threshold};
}

inline PointInterval att_interval(const EstimatorContext& ctx) {
  const double treated_mean = detail::weighted_mean(ctx, ctx.table().outcomes(), 1);
  const auto c = detail::extremize_both(ctx, build_arm_problem(ctx, 0, {}, +1.0, false));
  return {treated_mean - c.hi.value, treated_mean - c.lo.value, c.hi.threshold, c.lo.threshold};
}

/// Augmented intervals: the ratio runs over outcome-regression residuals
/// and the regression's average prediction over the target rows is added
/// back.
inline PointInterval saipw_interval(const EstimatorContext& ctx, Estimand estimand) {
  using detail::require;
  switch (estimand) {
    case Estimand::mean_response:
    case Estimand::nonrespondent_mean: {
      const LinearFit& f = require(ctx.outcome_treated, "outcome regression on a = 1 rows");
      const bool mean = estimand == Estimand::mean_response;
      if (!mean && ctx.table().n_control() == 0)
        throw Error(Errc::degenerate_arm, "non-respondent mean needs rows with a = 0");
      const double offset = detail::weighted_mean(ctx, f.fitted, mean ? -1 : 0);
      const auto res = detail::residuals(ctx, f);
      const auto r = detail::extremize_both(ctx, build_arm_problem(ctx, 1, res, -1.0, mean));
      return {offset + r.lo.value, offset + r.hi.value, r.lo.threshold, r.hi.threshold};
    }
    case Estimand::ate: {
      const LinearFit& f1 = require(ctx.outcome_treated, "outcome regression on a = 1 rows");
      const LinearFit& f0 = require(ctx.outcome_control, "outcome regression on a = 0 rows");
      const double off1 = detail::weighted_mean(ctx, f1.fitted, -1);
      const double off0 = detail::weighted_mean(ctx, f0.fitted, -1);
      const auto r1 = detail::residuals(ctx, f1);
      const auto r0 = detail::residuals(ctx, f0);
      const auto treated = build_arm_problem(ctx, 1, r1, -1.0, true);
      const auto control = build_arm_problem(ctx, 0, r0, +1.0, true);
      if (!ctx.spec.lipschitz) {
        const auto lo = separable_ate_extremum(treated.problem, control.problem, Direction::minimize);
        const auto hi = separable_ate_extremum(treated.problem, control.problem, Direction::maximize);
        return {off1 - off0 + lo.value, off1 - off0 + hi.value, lo.treated.threshold,
                hi.treated.threshold};
      }
      const auto t = detail::extremize_both(ctx, treated);
      const auto c = detail::extremize_both(ctx, control);
      return {off1 - off0 + t.lo.value - c.hi.value, off1 - off0 + t.hi.value - c.lo.value,
              t.lo.threshold, t.hi.threshold};
    }
    case Estimand::att: {
      const LinearFit& f0 = require(ctx.outcome_control, "outcome regression on a = 0 rows");
      const double treated_mean = detail::weighted_mean(ctx, ctx.table().outcomes(), 1);
      const double offset = detail::weighted_mean(ctx, f0.fitted, 1);
      const auto r0 = detail::residuals(ctx, f0);
      const auto c = detail::extremize_both(ctx, build_arm_problem(ctx, 0, r0, +1.0, false));
      return {treated_mean - offset - c.hi.value, treated_mean - offset - c.lo.value,
              c.hi.threshold, c.lo.threshold};
    }
  }
  throw Error(Errc::unsupported, "unknown estimand");
}

inline PointInterval point_interval(const EstimatorContext& ctx, EstimandKind kind) {
  if (kind.method == Method::saipw) return saipw_interval(ctx, kind.estimand);
  switch (kind.estimand) {
    case Estimand::mean_response: return mean_response_interval(ctx);
    case Estimand::nonrespondent_mean: return nonrespondent_mean_interval(ctx);
    case Estimand::ate: return ate_interval(ctx);
    case Estimand::att: return att_interval(ctx);
  }
  throw Error(Errc::unsupported, "unknown estimand");
}

}  // namespace sensipw
