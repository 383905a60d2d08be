#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sensipw/core.hpp"

namespace sensipw {

// Covariates of the table as an n x d matrix (no intercept column).
inline Eigen::MatrixXd design_matrix(const ObservationTable& table) {
  Eigen::MatrixXd x(table.size(), table.dim());
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t j = 0; j < table.dim(); ++j) x(i, j) = table.x(i, j);
  return x;
}

// beta[0] + sum_j beta[j+1] * x(i, j), accumulated left to right.
inline double linear_predictor(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                               Eigen::Index i) {
  double eta = beta[0];
  for (Eigen::Index j = 0; j < x.cols(); ++j) eta += beta[j + 1] * x(i, j);
  return eta;
}

inline double expit(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct LogisticFit {
  Eigen::VectorXd beta;  // intercept first
  std::vector<double> linear_predictors;
  bool converged = false;
  int iterations = 0;
  double final_gradient_norm = 0.0;
};

struct LogisticOptions {
  double tolerance = 1e-8;  // max-norm of the log-likelihood gradient
  int max_iterations = 100;
  double separation_bound = 1e4;
  std::optional<Eigen::VectorXd> initial_beta;
};

struct LinearFit {
  Eigen::VectorXd theta;  // intercept first
  std::vector<double> fitted;
};

namespace detail {


// First column of `z` that is linearly dependent on the columns before it.
inline Eigen::Index first_dependent_column(const Eigen::MatrixXd& z) {
  for (Eigen::Index k = 1; k <= z.cols(); ++k) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z.leftCols(k));
    if (qr.rank() < k) return k - 1;
  }
  return -1;
}

inline std::string column_label(Eigen::Index col) {
  return col == 0 ? std::string("intercept")
                  : "covariate " + std::to_string(col - 1);
}

inline void require_full_rank(const Eigen::MatrixXd& z) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
  if (qr.rank() == z.cols()) return;
  const Eigen::Index col = first_dependent_column(z);
  throw Error(Errc::rank_deficient,
              "design matrix is rank deficient: column " + std::to_string(col) + " (" +
                  column_label(col) + ") is linearly dependent on earlier columns",
              col);
}

}  // namespace detail

/// Weighted logistic regression by Newton/IRLS with step-halving.
///
/// `x` holds covariates without the intercept (zero columns gives the
/// intercept-only model). Rows with zero case weight are ignored. The loop
/// stops when the gradient max-norm drops to `tolerance`; running out of
/// iterations returns `converged = false` rather than throwing.
inline LogisticFit fit_logistic(const Eigen::MatrixXd& x, std::span<const double> a,
                                std::span<const double> case_weights = {},
                                const LogisticOptions& opt = {}) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols() + 1;
  if (static_cast<Eigen::Index>(a.size()) != n ||
      (!case_weights.empty() && static_cast<Eigen::Index>(case_weights.size()) != n)) {
    throw Error(Errc::dimension_mismatch, "fit_logistic: inconsistent input lengths");
  }
  auto weight = [&](Eigen::Index i) { return case_weights.empty() ? 1.0 : case_weights[i]; };

  std::vector<Eigen::Index> rows;
  rows.reserve(n);
  double w1 = 0.0, w0 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = weight(i);
    if (c < 0 || !std::isfinite(c))
      throw Error(Errc::invalid_argument, "fit_logistic: case weights must be finite and >= 0");
    if (c == 0) continue;
    rows.push_back(i);
    (a[i] == 1.0 ? w1 : w0) += c;
  }
  if (w1 <= 0 || w0 <= 0)
    throw Error(Errc::degenerate_class, "fit_logistic: both classes need positive weight");
  if (static_cast<Eigen::Index>(rows.size()) < p)
    throw Error(Errc::rank_deficient, "fit_logistic: fewer rows than coefficients");

  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd z(m, p);
  Eigen::VectorXd c(m), y(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    z(k, 0) = 1.0;
    z.row(k).tail(p - 1) = x.row(rows[k]);
    c[k] = weight(rows[k]);
    y[k] = a[rows[k]];
  }
  detail::require_full_rank(z);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (opt.initial_beta && opt.initial_beta->size() == p) {
    beta = *opt.initial_beta;
  } else {
    beta[0] = std::log(w1 / w0);
  }

  Eigen::VectorXd eta(m), prob(m);
  auto evaluate = [&](const Eigen::VectorXd& b) {
    eta.noalias() = z * b;
    double ll = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double e = eta[k];
      // log(1 + exp(e)) without overflow
      const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      ll += c[k] * (y[k] * e - softplus);
      prob[k] = expit(e);
    }
    return ll;
  };

  LogisticFit fit;
  double loglik = evaluate(beta);
  Eigen::VectorXd grad(p);
  Eigen::MatrixXd hess(p, p);
  Eigen::VectorXd v(m);
  bool polished = false;
  for (int iter = 0;; ++iter) {
    grad.noalias() = z.transpose() * (c.array() * (y - prob).array()).matrix();
    fit.final_gradient_norm = grad.lpNorm<Eigen::Infinity>();
    fit.iterations = iter;
    // One extra Newton step after the criterion is met brings the iterate
    // to rounding level, so the result does not depend on the weight scale.
    if (fit.final_gradient_norm <= opt.tolerance && polished) {
      fit.converged = true;
      break;
    }
    if (fit.final_gradient_norm <= opt.tolerance) polished = true;
    if (iter >= opt.max_iterations) break;

    v = c.array() * prob.array() * (1.0 - prob.array());
    hess.noalias() = z.transpose() * (z.array().colwise() * v.array()).matrix();
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success)
      throw Error(Errc::rank_deficient, "fit_logistic: weighted normal equations are singular");
    const Eigen::VectorXd step = llt.solve(grad);

    // Likelihood may not decrease beyond rounding noise.
    const double floor = loglik - 1e-12 * (1.0 + std::abs(loglik));
    double scale = 1.0;
    Eigen::VectorXd next = beta + step;
    double next_ll = evaluate(next);
    while (!(next_ll >= floor) && scale > 1e-10) {
      scale *= 0.5;
      next = beta + scale * step;
      next_ll = evaluate(next);
    }
    if (!(next_ll >= floor)) {
      // No ascent along the Newton direction; restore and stop.
      evaluate(beta);
      fit.converged = fit.final_gradient_norm <= opt.tolerance;
      break;
    }
    beta = next;
    loglik = next_ll;
    if (beta.lpNorm<Eigen::Infinity>() > opt.separation_bound)
      throw Error(Errc::separation, "fit_logistic: coefficients diverge (separated classes)");
  }

  // Complete separation drives every fitted probability onto its label.
  bool separated = true;
  for (Eigen::Index k = 0; k < m && separated; ++k)
    separated = std::abs(y[k] - prob[k]) < 1e-6;
  if (separated)
    throw Error(Errc::separation, "fit_logistic: classes are perfectly separated");

  fit.beta = beta;
  fit.linear_predictors.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) fit.linear_predictors[i] = linear_predictor(beta, x, i);
  return fit;
}

/// Weighted least squares with intercept on the rows where `subset` is
/// nonzero; fitted values are produced for every row.
inline LinearFit fit_ols(const Eigen::MatrixXd& x, std::span<const double> y,
                         std::span<const std::uint8_t> subset,
                         std::span<const double> case_weights = {}) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols() + 1;
  if (static_cast<Eigen::Index>(y.size()) != n || static_cast<Eigen::Index>(subset.size()) != n ||
      (!case_weights.empty() && static_cast<Eigen::Index>(case_weights.size()) != n)) {
    throw Error(Errc::dimension_mismatch, "fit_ols: inconsistent input lengths");
  }
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = case_weights.empty() ? 1.0 : case_weights[i];
    if (subset[i] && c > 0) rows.push_back(i);
  }
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  if (m < p)
    throw Error(Errc::rank_deficient, "fit_ols: subset has " + std::to_string(m) +
                                          " rows, need at least " + std::to_string(p));

  Eigen::MatrixXd z(m, p);
  Eigen::VectorXd rhs(m);
  Eigen::MatrixXd plain(m, p);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = rows[k];
    const double s = case_weights.empty() ? 1.0 : std::sqrt(case_weights[i]);
    plain(k, 0) = 1.0;
    plain.row(k).tail(p - 1) = x.row(i);
    z.row(k) = s * plain.row(k);
    rhs[k] = s * y[i];
  }
  detail::require_full_rank(plain);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
  LinearFit fit;
  fit.theta = qr.solve(rhs);
  fit.fitted.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) fit.fitted[i] = linear_predictor(fit.theta, x, i);
  return fit;
}

}  // namespace sensipw
