#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sensipw/core.hpp"
#include "sensipw/simplex.hpp"

namespace sensipw {

enum class Direction { minimize, maximize };

/// Stabilized-weight linear-fractional objective
///
///     sum_i c_i y_i (u + z_i w_i) / sum_i c_i (u + z_i w_i),   z_i in [1/Lambda, Lambda]
///
/// with u = 1 for the stabilized IPW ratio and u = 0 for the
/// non-respondent-mean ratio. Rows are kept sorted by y descending.
struct FractionalProblem {
  std::vector<double> y;
  std::vector<double> w;
  std::vector<double> cell_weights;  // empty: every c_i = 1
  double Lambda = 1.0;
  bool unit_term = true;

  std::size_t size() const noexcept { return y.size(); }
  double cell(std::size_t i) const { return cell_weights.empty() ? 1.0 : cell_weights[i]; }
  double unit() const noexcept { return unit_term ? 1.0 : 0.0; }

  void validate() const {
    if (y.empty()) throw Error(Errc::invalid_argument, "fractional problem has no rows");
    if (w.size() != y.size() || (!cell_weights.empty() && cell_weights.size() != y.size()))
      throw Error(Errc::dimension_mismatch, "fractional problem: length mismatch");
    if (!(Lambda >= 1.0) || !std::isfinite(Lambda))
      throw Error(Errc::invalid_argument, "fractional problem: Lambda must be finite and >= 1");
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (!(w[i] > 0) || !std::isfinite(w[i]))
        throw Error(Errc::invalid_argument, "fractional problem: weights must be positive");
      if (!(cell(i) > 0) || !std::isfinite(cell(i)))
        throw Error(Errc::invalid_argument, "fractional problem: cell weights must be positive");
      if (!std::isfinite(y[i]))
        throw Error(Errc::invalid_argument, "fractional problem: non-finite outcome");
      if (i > 0 && y[i] > y[i - 1])
        throw Error(Errc::invalid_argument, "fractional problem: y must be sorted descending");
    }
  }
};

struct ExtremumResult {
  double value = 0.0;
  // Cut position in the sorted order: for maximize the first `threshold`
  // rows sit at Lambda and the rest at 1/Lambda; for minimize the first
  // `threshold` rows sit at 1/Lambda and the rest at Lambda.
  std::size_t threshold = 0;
  std::vector<double> z;
  std::size_t candidates = 0;  // cut positions scanned
};

inline double evaluate_fractional(const FractionalProblem& p, std::span<const double> z) {
  const double u = p.unit();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double mass = p.cell(i) * (u + z[i] * p.w[i]);
    num += mass * p.y[i];
    den += mass;
  }
  return num / den;
}

namespace detail {

inline std::vector<double> threshold_pattern(std::size_t m, std::size_t cut, double first,
                                             double rest) {
  std::vector<double> z(m, rest);
  std::fill_n(z.begin(), cut, first);
  return z;
}

}  // namespace detail

/// Exact extremum over the box by scanning every cut of the sorted order.
///
/// The optimal z is monotone in y, so only the m + 1 two-level patterns
/// need checking. Running sums make the scan O(m); the reported value is
/// re-evaluated on the chosen pattern.
inline ExtremumResult threshold_extremum(const FractionalProblem& p, Direction dir) {
  p.validate();
  const std::size_t m = p.size();
  const double lo = 1.0 / p.Lambda, hi = p.Lambda;
  const bool maximize = dir == Direction::maximize;
  // Scan from the top of the order: rows [0, cut) take `first`.
  const double first = maximize ? hi : lo;
  const double rest = maximize ? lo : hi;
  const double u = p.unit();

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double mass = p.cell(i) * (u + rest * p.w[i]);
    num += mass * p.y[i];
    den += mass;
  }
  std::size_t best_cut = 0;
  double best = num / den;
  for (std::size_t i = 0; i < m; ++i) {
    const double delta = p.cell(i) * (first - rest) * p.w[i];
    num += delta * p.y[i];
    den += delta;
    const double v = num / den;
    if (maximize ? v > best : v < best) {
      best = v;
      best_cut = i + 1;
    }
  }

  ExtremumResult r;
  r.threshold = best_cut;
  r.z = detail::threshold_pattern(m, best_cut, first, rest);
  r.value = evaluate_fractional(p, r.z);
  r.candidates = m + 1;
  return r;
}

/// Exhaustive search over all 2^m vertices of the box (m <= 20).
inline ExtremumResult vertex_enumeration_extremum(const FractionalProblem& p, Direction dir,
                                                  std::size_t cap = 20) {
  p.validate();
  const std::size_t m = p.size();
  if (m > cap)
    throw Error(Errc::size_cap, "vertex enumeration limited to m <= " + std::to_string(cap) +
                                    ", got m = " + std::to_string(m));
  const bool maximize = dir == Direction::maximize;
  ExtremumResult best;
  std::vector<double> z(m);
  for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
    for (std::size_t i = 0; i < m; ++i) z[i] = (mask >> i) & 1 ? p.Lambda : 1.0 / p.Lambda;
    const double v = evaluate_fractional(p, z);
    if (mask == 0 || (maximize ? v > best.value : v < best.value)) {
      best.value = v;
      best.z = z;
    }
    ++best.candidates;
  }
  best.threshold = static_cast<std::size_t>(
      std::count(best.z.begin(), best.z.end(), maximize ? p.Lambda : 1.0 / p.Lambda));
  return best;
}

namespace detail {

// Variables: zbar_0 .. zbar_{m-1}, t. Box rows and the normalization row.
inline lp::LinearProgram charnes_cooper_program(const FractionalProblem& p, Direction dir) {
  const std::size_t m = p.size();
  const double sgn = dir == Direction::maximize ? 1.0 : -1.0;
  const double u = p.unit();
  lp::LinearProgram prog;
  prog.objective.assign(m + 1, 0.0);
  double mass = 0.0;
  double ysum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    prog.objective[i] = sgn * p.cell(i) * p.y[i] * p.w[i];
    ysum += p.cell(i) * p.y[i];
    mass += p.cell(i);
  }
  prog.objective[m] = sgn * u * ysum;
  prog.rows.reserve(2 * m + 1);
  for (std::size_t i = 0; i < m; ++i) {
    prog.rows.push_back({{{i, 1.0}, {m, -p.Lambda}}, lp::RowSense::le, 0.0});
    prog.rows.push_back({{{i, 1.0}, {m, -1.0 / p.Lambda}}, lp::RowSense::ge, 0.0});
  }
  lp::Row norm;
  norm.sense = lp::RowSense::eq;
  norm.rhs = 1.0;
  for (std::size_t i = 0; i < m; ++i) norm.coeffs.emplace_back(i, p.cell(i) * p.w[i]);
  norm.coeffs.emplace_back(m, u * mass);
  prog.rows.push_back(std::move(norm));
  return prog;
}

inline ExtremumResult recover(const FractionalProblem& p, Direction dir,
                              const lp::LpSolution& sol) {
  if (sol.status != lp::LpStatus::optimal)
    throw Error(Errc::internal, std::string("Charnes-Cooper LP did not reach an optimum (") +
                                    lp::to_string(sol.status) + ")");
  const std::size_t m = p.size();
  const double t = sol.x[m];
  if (!(t > 0)) throw Error(Errc::internal, "Charnes-Cooper LP returned t <= 0");
  ExtremumResult r;
  r.z.resize(m);
  const double lo = 1.0 / p.Lambda, hi = p.Lambda;
  for (std::size_t i = 0; i < m; ++i) r.z[i] = std::clamp(sol.x[i] / t, lo, hi);
  r.value = evaluate_fractional(p, r.z);
  const double upper = dir == Direction::maximize ? hi : lo;
  for (std::size_t i = 0; i < m; ++i)
    if (std::abs(std::log(r.z[i] / upper)) < std::abs(std::log(r.z[i] / (hi * lo / upper))))
      ++r.threshold;
  r.candidates = sol.pivots;
  return r;
}

}  // namespace detail

/// Same extremum through the Charnes-Cooper linear program, solved by the
/// dense simplex. Normalization row: u * sum(c) t + sum c_i w_i zbar_i = 1.
inline ExtremumResult charnes_cooper_lp(const FractionalProblem& p, Direction dir) {
  p.validate();
  const auto sol = lp::solve(detail::charnes_cooper_program(p, dir));
  return detail::recover(p, dir, sol);
}

struct SeparableResult {
  double value = 0.0;
  ExtremumResult treated;
  ExtremumResult control;
};

/// Extremum of (treated ratio) - (control ratio); the two z blocks are
/// independent, so each arm is solved on its own.
inline SeparableResult separable_ate_extremum(const FractionalProblem& treated,
                                              const FractionalProblem& control, Direction dir) {
  if (treated.size() == 0 || control.size() == 0)
    throw Error(Errc::degenerate_arm, "separable extremum needs both arms nonempty");
  const Direction opposite =
      dir == Direction::maximize ? Direction::minimize : Direction::maximize;
  SeparableResult r;
  r.treated = threshold_extremum(treated, dir);
  r.control = threshold_extremum(control, opposite);
  r.value = r.treated.value - r.control.value;
  return r;
}

enum class LipschitzMetric { scaled_euclidean };

struct LipschitzOptions {
  std::size_t max_rows = 400;
  std::size_t max_rounds = 200;
  double violation_tolerance = 1e-10;
};

namespace detail {

// Pairwise distances of (x_i, y_i) after dividing each coordinate by its
// sample standard deviation (coordinates with zero spread are left as is).
inline std::vector<double> scaled_euclidean_distances(std::span<const double> x_rows,
                                                      std::size_t d, std::span<const double> y) {
  const std::size_t m = y.size();
  const std::size_t k = d + 1;
  std::vector<double> pts(m * k);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) pts[i * k + j] = x_rows[i * d + j];
    pts[i * k + d] = y[i];
  }
  for (std::size_t j = 0; j < k; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += pts[i * k + j];
    mean /= static_cast<double>(m);
    double ss = 0.0;
    for (std::size_t i = 0; i < m; ++i) ss += (pts[i * k + j] - mean) * (pts[i * k + j] - mean);
    const double sd = m > 1 ? std::sqrt(ss / static_cast<double>(m - 1)) : 0.0;
    if (sd > 0)
      for (std::size_t i = 0; i < m; ++i) pts[i * k + j] /= sd;
  }
  std::vector<double> dist(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = i + 1; l < m; ++l) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double diff = pts[i * k + j] - pts[l * k + j];
        s += diff * diff;
      }
      dist[i * m + l] = dist[l * m + i] = std::sqrt(s);
    }
  return dist;
}

}  // namespace detail

/// Extremum when z must also satisfy z_i <= exp(L d_ij) z_j for every pair.
///
/// `x_rows` holds the covariates of the problem's rows (row-major, m x d) in
/// the same order as `p.y`; `metric_y` overrides the outcome coordinate of
/// the distance when the ratio runs over transformed values. Pair rows are added to the Charnes-Cooper LP
/// lazily: solve, add the violated pairs, re-solve until none remain.
inline ExtremumResult lipschitz_extremum(const FractionalProblem& p, std::span<const double> x_rows,
                                         std::size_t d, double L, LipschitzMetric metric,
                                         Direction dir, const LipschitzOptions& opt = {},
                                         std::span<const double> metric_y = {}) {
  (void)metric;
  p.validate();
  const std::size_t m = p.size();
  if (m > opt.max_rows)
    throw Error(Errc::size_cap, "Lipschitz-constrained extremum limited to m <= " +
                                    std::to_string(opt.max_rows) + " (got " + std::to_string(m) +
                                    "); use the unconstrained solver");
  if (x_rows.size() != m * d)
    throw Error(Errc::dimension_mismatch, "lipschitz_extremum: x_rows must be m x d");
  if (!(L >= 0)) throw Error(Errc::invalid_argument, "Lipschitz constant must be >= 0");

  if (!metric_y.empty() && metric_y.size() != m)
    throw Error(Errc::dimension_mismatch, "lipschitz_extremum: metric_y must have m entries");
  const auto dist =
      detail::scaled_euclidean_distances(x_rows, d, metric_y.empty() ? p.y : metric_y);
  // Pairs whose factor reaches Lambda^2 are implied by the box.
  const double implied = p.Lambda * p.Lambda;
  auto factor = [&](std::size_t i, std::size_t j) {
    const double e = L * dist[i * m + j];
    return e >= std::log(implied) ? implied : std::exp(e);
  };

  lp::LinearProgram prog = detail::charnes_cooper_program(p, dir);
  std::vector<std::uint8_t> active(m * m, 0);
  for (std::size_t round = 0; round < opt.max_rounds; ++round) {
    const auto sol = lp::solve(prog);
    auto r = detail::recover(p, dir, sol);
    const double t = sol.x[m];
    std::size_t added = 0;
    for (std::size_t i = 0; i < m; ++i) {
      // Most violated partner of row i.
      std::size_t worst = m;
      double worst_gap = opt.violation_tolerance * t;
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j || active[i * m + j]) continue;
        const double f = factor(i, j);
        if (f >= implied) continue;
        const double gap = sol.x[i] - f * sol.x[j];
        if (gap > worst_gap) {
          worst_gap = gap;
          worst = j;
        }
      }
      if (worst == m) continue;
      active[i * m + worst] = 1;
      prog.rows.push_back({{{i, 1.0}, {worst, -factor(i, worst)}}, lp::RowSense::le, 0.0});
      ++added;
    }
    if (added == 0) return r;
  }
  throw Error(Errc::internal, "Lipschitz cutting-plane loop did not terminate");
}

}  // namespace sensipw
