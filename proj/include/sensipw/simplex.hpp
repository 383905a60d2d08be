#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

namespace sensipw::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class RowSense { le, ge, eq };

struct Row {
  std::vector<std::pair<std::size_t, double>> coeffs;
  RowSense sense = RowSense::le;
  double rhs = 0.0;
};

/// maximize c'x  s.t.  rows,  0 <= x <= upper
struct LinearProgram {
  std::vector<double> objective;
  std::vector<double> upper;  // empty means unbounded above
  std::vector<Row> rows;

  std::size_t num_vars() const { return objective.size(); }
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration limit";
  }
  return "?";
}

struct LpSolution {
  LpStatus status = LpStatus::iteration_limit;
  std::vector<double> x;
  double objective = 0.0;
  std::size_t pivots = 0;
};

struct SimplexOptions {
  double pivot_tolerance = 1e-10;
  double cost_tolerance = 1e-11;
  double feasibility_tolerance = 1e-9;
  std::size_t max_iterations = 1'000'000;
  std::size_t refactor_interval = 50;  // pivots between basis reinversions
};

namespace detail {

enum class VarState : unsigned char { basic, at_lower, at_upper };

// Dense tableau over equality rows, with nonbasic variables parked at either
// bound. The entering column follows Bland's smallest-index rule; the
// leaving row comes from a Harris ratio test, and the basis is reinverted
// from the original rows every `refactor_interval` pivots.
class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols)
      : m_(rows), n_(cols), t_(rows * cols, 0.0), xb_(rows, 0.0), basis_(rows, 0),
        upper_(cols, kInf), state_(cols, VarState::at_lower), cost_(cols, 0.0),
        reduced_(cols, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return t_[r * n_ + c]; }
  double at(std::size_t r, std::size_t c) const { return t_[r * n_ + c]; }

  std::size_t m_, n_;
  std::vector<double> t_;
  std::vector<double> xb_;
  std::vector<std::size_t> basis_;
  std::vector<double> upper_;
  std::vector<VarState> state_;
  std::vector<double> cost_;  // minimized
  std::vector<double> reduced_;
  std::vector<bool> frozen_;  // never allowed to enter
  Eigen::MatrixXd a0_;        // constraint matrix as built
  Eigen::VectorXd b0_;

  void snapshot() {
    a0_.resize(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(n_));
    b0_.resize(static_cast<Eigen::Index>(m_));
    for (std::size_t r = 0; r < m_; ++r) {
      b0_[static_cast<Eigen::Index>(r)] = xb_[r];
      for (std::size_t j = 0; j < n_; ++j)
        a0_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = at(r, j);
    }
  }

  // Rebuilds the tableau and basic values from the original rows for the
  // current basis, discarding accumulated rounding error.
  void reinvert() {
    if (m_ == 0) return;
    const auto m = static_cast<Eigen::Index>(m_);
    Eigen::MatrixXd basis(m, m);
    for (Eigen::Index r = 0; r < m; ++r)
      basis.col(r) = a0_.col(static_cast<Eigen::Index>(basis_[static_cast<std::size_t>(r)]));
    Eigen::VectorXd rhs = b0_;
    for (std::size_t j = 0; j < n_; ++j)
      if (state_[j] == VarState::at_upper) rhs -= upper_[j] * a0_.col(static_cast<Eigen::Index>(j));
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(basis);
    const Eigen::MatrixXd t = lu.solve(a0_);
    const Eigen::VectorXd xb = lu.solve(rhs);
    for (std::size_t r = 0; r < m_; ++r) {
      xb_[r] = xb[static_cast<Eigen::Index>(r)];
      for (std::size_t j = 0; j < n_; ++j)
        at(r, j) = t(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
      at(r, basis_[r]) = 1.0;
    }
  }

  void price() {
    for (std::size_t j = 0; j < n_; ++j) reduced_[j] = cost_[j];
    for (std::size_t r = 0; r < m_; ++r) {
      const double cb = cost_[basis_[r]];
      if (cb == 0.0) continue;
      const double* row = &t_[r * n_];
      for (std::size_t j = 0; j < n_; ++j) reduced_[j] -= cb * row[j];
    }
  }

  void pivot(std::size_t r, std::size_t q) {
    double* prow = &t_[r * n_];
    const double inv = 1.0 / prow[q];
    for (std::size_t j = 0; j < n_; ++j) prow[j] *= inv;
    prow[q] = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* row = &t_[i * n_];
      const double f = row[q];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n_; ++j) row[j] -= f * prow[j];
      row[q] = 0.0;
    }
    const double f = reduced_[q];
    if (f != 0.0) {
      for (std::size_t j = 0; j < n_; ++j) reduced_[j] -= f * prow[j];
      reduced_[q] = 0.0;
    }
  }

  // Runs primal simplex iterations on the current cost vector.
  LpStatus optimize(const SimplexOptions& opt, std::size_t& pivots) {
    price();
    std::size_t since_refactor = 0;
    for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
      if (since_refactor >= opt.refactor_interval) {
        reinvert();
        price();
        since_refactor = 0;
      }
      std::size_t q = n_;
      for (std::size_t j = 0; j < n_; ++j) {
        if (state_[j] == VarState::basic || (!frozen_.empty() && frozen_[j])) continue;
        if (upper_[j] <= 0.0) continue;
        if ((state_[j] == VarState::at_lower && reduced_[j] < -opt.cost_tolerance) ||
            (state_[j] == VarState::at_upper && reduced_[j] > opt.cost_tolerance)) {
          q = j;
          break;
        }
      }
      if (q == n_) {
        if (since_refactor == 0) return LpStatus::optimal;
        // Confirm optimality on a freshly inverted basis.
        since_refactor = opt.refactor_interval;
        continue;
      }

      const double dir = state_[q] == VarState::at_lower ? 1.0 : -1.0;
      // Harris ratio test: bounds relaxed by the feasibility tolerance give
      // the step cap, then the largest pivot under the cap leaves.
      auto limit_of = [&](std::size_t r, double slack, bool& to_upper) {
        const double alpha = dir * at(r, q);
        if (alpha > opt.pivot_tolerance) {
          to_upper = false;
          return (xb_[r] + slack) / alpha;
        }
        if (alpha < -opt.pivot_tolerance && upper_[basis_[r]] < kInf) {
          to_upper = true;
          return (upper_[basis_[r]] - xb_[r] + slack) / -alpha;
        }
        return kInf;
      };
      double cap = upper_[q];
      for (std::size_t r = 0; r < m_; ++r) {
        bool to_upper;
        cap = std::min(cap, limit_of(r, opt.feasibility_tolerance, to_upper));
      }
      if (cap == kInf) return LpStatus::unbounded;

      double theta = upper_[q];
      std::size_t leave = m_;
      bool leave_to_upper = false;
      if (!(upper_[q] <= cap)) {
        double best_pivot = 0.0;
        for (std::size_t r = 0; r < m_; ++r) {
          bool to_upper;
          const double limit = limit_of(r, 0.0, to_upper);
          if (!(limit <= cap)) continue;
          const double size = std::abs(at(r, q));
          if (size > best_pivot || (size == best_pivot && leave < m_ && basis_[r] < basis_[leave])) {
            best_pivot = size;
            leave = r;
            leave_to_upper = to_upper;
            theta = std::max(limit, 0.0);
          }
        }
      }
      if (theta == kInf) return LpStatus::unbounded;

      for (std::size_t r = 0; r < m_; ++r) xb_[r] -= dir * theta * at(r, q);
      if (leave == m_) {
        // Entering variable reaches its own opposite bound.
        state_[q] = dir > 0 ? VarState::at_upper : VarState::at_lower;
        ++since_refactor;
        continue;
      }
      const double entering = dir > 0 ? theta : upper_[q] - theta;
      const std::size_t out = basis_[leave];
      state_[out] = leave_to_upper ? VarState::at_upper : VarState::at_lower;
      pivot(leave, q);
      basis_[leave] = q;
      state_[q] = VarState::basic;
      xb_[leave] = entering;
      ++pivots;
      ++since_refactor;
    }
    return LpStatus::iteration_limit;
  }
};

}  // namespace detail

/// Two-phase primal simplex on a dense tableau.
inline LpSolution solve(const LinearProgram& lp, const SimplexOptions& opt = {}) {
  using detail::VarState;
  const std::size_t nv = lp.num_vars();
  const std::size_t m = lp.rows.size();

  std::size_t n_slack = 0;
  for (const Row& row : lp.rows) n_slack += row.sense == RowSense::eq ? 0 : 1;

  // Row sign so that every right-hand side is nonnegative.
  std::vector<double> sign(m, 1.0);
  std::vector<bool> needs_artificial(m, true);
  for (std::size_t r = 0; r < m; ++r) {
    const Row& row = lp.rows[r];
    if (row.rhs < 0) sign[r] = -1.0;
    const double slack_coeff = row.sense == RowSense::le ? 1.0 : row.sense == RowSense::ge ? -1.0 : 0.0;
    needs_artificial[r] = !(sign[r] * slack_coeff > 0);
  }
  std::size_t n_art = 0;
  for (bool b : needs_artificial) n_art += b ? 1 : 0;

  const std::size_t cols = nv + n_slack + n_art;
  detail::Tableau tab(m, cols);
  for (std::size_t j = 0; j < nv; ++j) tab.upper_[j] = lp.upper.empty() ? kInf : lp.upper[j];

  std::size_t slack = nv, art = nv + n_slack;
  std::vector<bool> artificial(cols, false);
  for (std::size_t r = 0; r < m; ++r) {
    const Row& row = lp.rows[r];
    for (const auto& [j, v] : row.coeffs) tab.at(r, j) += sign[r] * v;
    tab.xb_[r] = sign[r] * row.rhs;
    if (row.sense != RowSense::eq) {
      const double coeff = sign[r] * (row.sense == RowSense::le ? 1.0 : -1.0);
      tab.at(r, slack) = coeff;
      if (!needs_artificial[r]) {
        tab.basis_[r] = slack;
        tab.state_[slack] = VarState::basic;
      }
      ++slack;
    }
    if (needs_artificial[r]) {
      tab.at(r, art) = 1.0;
      tab.basis_[r] = art;
      tab.state_[art] = VarState::basic;
      artificial[art] = true;
      ++art;
    }
  }

  tab.snapshot();
  LpSolution sol;
  if (n_art > 0) {
    for (std::size_t j = 0; j < cols; ++j) tab.cost_[j] = artificial[j] ? 1.0 : 0.0;
    sol.status = tab.optimize(opt, sol.pivots);
    if (sol.status != LpStatus::optimal) return sol;
    double infeas = 0.0;
    for (std::size_t r = 0; r < m; ++r)
      if (artificial[tab.basis_[r]]) infeas += tab.xb_[r];
    if (infeas > opt.feasibility_tolerance) {
      sol.status = LpStatus::infeasible;
      return sol;
    }
    // Artificials stay at zero from here on.
    for (std::size_t j = 0; j < cols; ++j)
      if (artificial[j]) tab.upper_[j] = 0.0;
    tab.frozen_ = artificial;
  }

  for (std::size_t j = 0; j < cols; ++j) tab.cost_[j] = j < nv ? -lp.objective[j] : 0.0;
  sol.status = tab.optimize(opt, sol.pivots);
  if (sol.status != LpStatus::optimal) return sol;

  sol.x.assign(nv, 0.0);
  for (std::size_t j = 0; j < nv; ++j)
    if (tab.state_[j] == VarState::at_upper) sol.x[j] = tab.upper_[j];
  for (std::size_t r = 0; r < m; ++r)
    if (tab.basis_[r] < nv) sol.x[tab.basis_[r]] = tab.xb_[r];
  sol.objective = 0.0;
  for (std::size_t j = 0; j < nv; ++j) sol.objective += lp.objective[j] * sol.x[j];
  return sol;
}

}  // namespace sensipw::lp
