#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "sensipw/bootstrap.hpp"
#include "sensipw/core.hpp"
#include "sensipw/estimators.hpp"
#include "sensipw/extrema.hpp"
#include "sensipw/glm.hpp"

namespace sensipw::sim {

// Symmetric 11-point covariate support, uniform mass.
inline constexpr std::array<double, 11> kSupport = {-2.5, -1.28, -0.54, -0.16, -0.02, 0.0,
                                                    0.02,  0.16,  0.54,  1.28,  2.5};

struct SimSetting {
  double beta_A = 0.5;
  double beta_Y = 0.5;
  std::size_t n = 200;
  double quadratic = 0.1;  // coefficient of x^2 in the true selection logit

  double selection_logit(double x) const { return beta_A * x + quadratic * x * x; }
  double selection_prob(double x) const { return expit(selection_logit(x)); }
  double outcome_prob(double x) const { return expit(-beta_Y * x); }

  void validate() const {
    if (n < 2) throw Error(Errc::invalid_argument, "simulation needs n >= 2");
    if (!std::isfinite(beta_A) || !std::isfinite(beta_Y) || !std::isfinite(quadratic))
      throw Error(Errc::invalid_argument, "simulation coefficients must be finite");
  }
};

struct PopulationCell {
  double x = 0.0;
  double y = 0.0;
  double mass = 0.0;       // P(X = x, Y = y)
  double selection = 0.0;  // e0(x)
};

struct PopulationModel {
  std::vector<PopulationCell> cells;
  Eigen::Vector2d beta0;  // intercept, slope
};

/// Best linear-logistic approximation of e0 in Kullback-Leibler divergence:
/// a weighted logistic fit on the support with weight P(x) e0(x) on a = 1
/// and P(x) (1 - e0(x)) on a = 0.
inline Eigen::Vector2d kl_projection(const SimSetting& s) {
  s.validate();
  const std::size_t k = kSupport.size();
  Eigen::MatrixXd x(2 * k, 1);
  std::vector<double> a(2 * k), w(2 * k);
  const double px = 1.0 / static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double e0 = s.selection_prob(kSupport[i]);
    x(2 * i, 0) = x(2 * i + 1, 0) = kSupport[i];
    a[2 * i] = 1.0;
    w[2 * i] = px * e0;
    a[2 * i + 1] = 0.0;
    w[2 * i + 1] = px * (1.0 - e0);
  }
  LogisticOptions opt;
  opt.tolerance = 1e-13;  // weights sum to 1, so the gradient scale is O(1)
  const LogisticFit fit = fit_logistic(x, a, w, opt);
  return fit.beta;
}

inline PopulationModel population_model(const SimSetting& s) {
  PopulationModel pop;
  pop.beta0 = kl_projection(s);
  const double px = 1.0 / static_cast<double>(kSupport.size());
  for (double x : kSupport) {
    const double py = s.outcome_prob(x);
    const double e0 = s.selection_prob(x);
    pop.cells.push_back({x, 1.0, px * py, e0});
    pop.cells.push_back({x, 0.0, px * (1.0 - py), e0});
  }
  return pop;
}

// Largest |logit e_beta0(x) - logit e0(x)| over the support.
inline double max_logit_gap(const SimSetting& s, const Eigen::Vector2d& beta0) {
  double gap = 0.0;
  for (double x : kSupport)
    gap = std::max(gap, std::abs(beta0[0] + beta0[1] * x - s.selection_logit(x)));
  return gap;
}

/// Population fractional problem: one cell per (x, y) with mass
/// P(X = x, Y = y, A = 1) and weight exp(-g_beta0(x)), sorted by y.
inline FractionalProblem population_problem(const PopulationModel& pop, double lambda) {
  std::vector<std::size_t> order(pop.cells.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return pop.cells[i].y > pop.cells[j].y;
  });
  FractionalProblem p;
  p.Lambda = std::exp(lambda);
  for (std::size_t i : order) {
    const auto& c = pop.cells[i];
    p.y.push_back(c.y);
    p.w.push_back(std::exp(-(pop.beta0[0] + pop.beta0[1] * c.x)));
    p.cell_weights.push_back(c.mass * c.selection);
  }
  return p;
}

inline PointInterval population_interval(const SimSetting& s, double lambda) {
  if (!(lambda >= 0)) throw Error(Errc::invalid_argument, "lambda must be >= 0");
  const auto p = population_problem(population_model(s), lambda);
  const auto lo = threshold_extremum(p, Direction::minimize);
  const auto hi = threshold_extremum(p, Direction::maximize);
  return {lo.value, hi.value, lo.threshold, hi.threshold};
}

/// n i.i.d. draws: X uniform on the support, Y ~ Bernoulli(expit(-beta_Y X)),
/// A ~ Bernoulli(e0(X)). Missing-data table with Y kept on every row.
template <class Rng>
ObservationTable generate_dataset(const SimSetting& s, Rng& rng) {
  s.validate();
  std::uniform_int_distribution<std::size_t> pick(0, kSupport.size() - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<RawRow> rows(s.n);
  for (auto& r : rows) {
    const double x = kSupport[pick(rng)];
    r.x = {x};
    r.y = unif(rng) < s.outcome_prob(x) ? 1.0 : 0.0;
    r.a = unif(rng) < s.selection_prob(x) ? 1.0 : 0.0;
  }
  return validate_table(rows, DataMode::missing_data);
}

inline std::mt19937_64 replication_stream(std::uint64_t seed, std::uint64_t rep) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32),
                    0xda7au};
  return std::mt19937_64(seq);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

struct CoverageRow {
  SimSetting setting;
  double lambda = 0.0;
  double noncoverage = 0.0;
  PointInterval population;
  double median_point_lo = 0.0, median_point_hi = 0.0;
  double median_ci_lo = 0.0, median_ci_hi = 0.0;
  std::size_t reps = 0;         // replications that produced an interval
  std::size_t failed_reps = 0;  // replications aborted by resample failures

  double Lambda() const { return std::exp(lambda); }
};

struct ReplicationResult {
  bool ok = false;
  std::vector<ConfidenceReport> reports;
};

/// Monte Carlo coverage of the percentile-bootstrap interval against the
/// population partially identified interval. Replications run in parallel
/// (`config.workers`); each replication's bootstrap is single-threaded and
/// seeded from (config.seed, replication index).
inline std::vector<CoverageRow> coverage_study(const SimSetting& s, std::span<const double> lambdas,
                                               std::size_t reps, const BootstrapConfig& config) {
  s.validate();
  config.validate();
  if (reps == 0) throw Error(Errc::invalid_argument, "coverage study needs reps >= 1");
  std::vector<SensitivitySpec> specs;
  for (double l : lambdas) specs.push_back({l, std::nullopt});
  const EstimandKind kind{Estimand::mean_response, Method::sipw};

  std::vector<ReplicationResult> results(reps);
  parallel_for(reps, config.workers, [&](std::size_t r) {
    auto rng = replication_stream(config.seed, r);
    const ObservationTable table = generate_dataset(s, rng);
    BootstrapConfig inner = config;
    inner.workers = 1;
    inner.seed = rng();
    try {
      results[r].reports = percentile_bootstrap(table, kind, specs, inner);
      results[r].ok = true;
    } catch (const Error& e) {
      if (e.code() != Errc::too_many_failures && !e.is_resample_degeneracy()) throw;
    }
  });

  std::vector<CoverageRow> rows;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    CoverageRow row;
    row.setting = s;
    row.lambda = specs[k].lambda;
    row.population = population_interval(s, specs[k].lambda);
    std::vector<double> plo, phi, clo, chi;
    std::size_t misses = 0;
    for (const auto& res : results) {
      if (!res.ok) {
        ++row.failed_reps;
        continue;
      }
      const auto& rep = res.reports[k];
      plo.push_back(rep.point_interval.lo);
      phi.push_back(rep.point_interval.hi);
      clo.push_back(rep.L);
      chi.push_back(rep.U);
      if (rep.L > row.population.lo || rep.U < row.population.hi) ++misses;
    }
    row.reps = plo.size();
    row.noncoverage = row.reps ? static_cast<double>(misses) / static_cast<double>(row.reps) : 0.0;
    row.median_point_lo = median(plo);
    row.median_point_hi = median(phi);
    row.median_ci_lo = median(clo);
    row.median_ci_hi = median(chi);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace sensipw::sim
