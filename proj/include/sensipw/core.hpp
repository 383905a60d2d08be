#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sensipw {

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  missing_outcome,
  bad_indicator,
  degenerate_arm,
  separation,
  rank_deficient,
  degenerate_class,
  not_converged,
  size_cap,
  too_many_failures,
  unsupported,
  parse_error,
  io_error,
  internal,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::missing_outcome: return "missing_outcome";
    case Errc::bad_indicator: return "bad_indicator";
    case Errc::degenerate_arm: return "degenerate_arm";
    case Errc::separation: return "separation";
    case Errc::rank_deficient: return "rank_deficient";
    case Errc::degenerate_class: return "degenerate_class";
    case Errc::not_converged: return "not_converged";
    case Errc::size_cap: return "size_cap";
    case Errc::too_many_failures: return "too_many_failures";
    case Errc::unsupported: return "unsupported";
    case Errc::parse_error: return "parse_error";
    case Errc::io_error: return "io_error";
    case Errc::internal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Error(Errc code, const std::string& what, std::ptrdiff_t column)
      : std::runtime_error(what), code_(code), column_(column) {}

  Errc code() const noexcept { return code_; }
  // Design-matrix column involved in a rank failure (0 = intercept), or -1.
  std::ptrdiff_t column() const noexcept { return column_; }

  // Failures a bootstrap resample may recover from by redrawing.
  bool is_resample_degeneracy() const noexcept {
    return code_ == Errc::separation || code_ == Errc::rank_deficient ||
           code_ == Errc::degenerate_class || code_ == Errc::degenerate_arm ||
           code_ == Errc::not_converged;
  }

 private:
  Errc code_;
  std::ptrdiff_t column_ = -1;
};

enum class DataMode {
  missing_data,   // y required where a = 1 only
  observational,  // y required on every row
};

struct RawRow {
  double a = 0.0;
  std::vector<double> x;
  std::optional<double> y;
};

class ObservationTable {
 public:
  ObservationTable() = default;

  std::size_t size() const noexcept { return a_.size(); }
  std::size_t dim() const noexcept { return d_; }
  DataMode mode() const noexcept { return mode_; }

  int a(std::size_t i) const { return a_[i]; }
  bool treated(std::size_t i) const { return a_[i] == 1; }
  std::span<const double> x(std::size_t i) const { return {x_.data() + i * d_, d_}; }
  double x(std::size_t i, std::size_t j) const { return x_[i * d_ + j]; }
  bool has_y(std::size_t i) const { return !std::isnan(y_[i]); }
  // NaN where the outcome is absent.
  double y(std::size_t i) const { return y_[i]; }

  std::span<const std::uint8_t> indicators() const noexcept { return a_; }
  std::span<const double> outcomes() const noexcept { return y_; }
  std::span<const double> covariates() const noexcept { return x_; }

  std::size_t n_treated() const noexcept { return n_treated_; }
  std::size_t n_control() const noexcept { return a_.size() - n_treated_; }

  std::vector<RawRow> to_rows() const {
    std::vector<RawRow> rows(size());
    for (std::size_t i = 0; i < size(); ++i) {
      rows[i].a = a_[i];
      rows[i].x.assign(x(i).begin(), x(i).end());
      if (has_y(i)) rows[i].y = y_[i];
    }
    return rows;
  }

 private:
  friend ObservationTable validate_table(std::span<const RawRow>, DataMode, bool);

  std::vector<std::uint8_t> a_;
  std::vector<double> x_;
  std::vector<double> y_;
  std::size_t d_ = 0;
  std::size_t n_treated_ = 0;
  DataMode mode_ = DataMode::missing_data;
};

/// Checks raw rows and builds an immutable table.
///
/// `require_both_arms` is set for estimands that use the a = 0 rows
/// (non-respondent mean, ATE, ATT). Outcomes on a = 0 rows in missing-data
/// mode are kept when present but never required.
inline ObservationTable validate_table(std::span<const RawRow> rows, DataMode mode,
                                       bool require_both_arms = false) {
  if (rows.size() < 2) {
    throw Error(Errc::invalid_argument, "table needs at least 2 rows, got " +
                                            std::to_string(rows.size()));
  }
  const std::size_t d = rows.front().x.size();
  if (d == 0) throw Error(Errc::dimension_mismatch, "covariate dimension must be >= 1");

  ObservationTable t;
  t.d_ = d;
  t.mode_ = mode;
  t.a_.reserve(rows.size());
  t.x_.reserve(rows.size() * d);
  t.y_.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const RawRow& r = rows[i];
    if (r.x.size() != d) {
      throw Error(Errc::dimension_mismatch,
                  "row " + std::to_string(i) + " has " + std::to_string(r.x.size()) +
                      " covariates, expected " + std::to_string(d));
    }
    if (r.a != 0.0 && r.a != 1.0) {
      throw Error(Errc::bad_indicator,
                  "row " + std::to_string(i) + ": indicator must be 0 or 1");
    }
    const bool treated = r.a == 1.0;
    const bool needs_y = treated || mode == DataMode::observational;
    if (needs_y && (!r.y || std::isnan(*r.y))) {
      throw Error(Errc::missing_outcome, "row " + std::to_string(i) + ": outcome missing");
    }
    for (double v : r.x) {
      if (!std::isfinite(v)) {
        throw Error(Errc::invalid_argument,
                    "row " + std::to_string(i) + ": non-finite covariate");
      }
    }
    if (r.y && std::isinf(*r.y)) {
      throw Error(Errc::invalid_argument, "row " + std::to_string(i) + ": non-finite outcome");
    }
    t.a_.push_back(treated ? 1 : 0);
    t.x_.insert(t.x_.end(), r.x.begin(), r.x.end());
    t.y_.push_back(r.y ? *r.y : std::numeric_limits<double>::quiet_NaN());
    t.n_treated_ += treated ? 1 : 0;
  }
  if (t.n_treated_ == 0) {
    throw Error(Errc::degenerate_arm, mode == DataMode::missing_data
                                          ? "no observed responses (all a = 0)"
                                          : "no treated rows (all a = 0)");
  }
  if (require_both_arms && t.n_treated_ == rows.size()) {
    throw Error(Errc::degenerate_arm, "estimand needs rows with a = 0, found none");
  }
  return t;
}

inline ObservationTable validate_table(const std::vector<RawRow>& rows, DataMode mode,
                                       bool require_both_arms = false) {
  return validate_table(std::span<const RawRow>(rows), mode, require_both_arms);
}

/// Row indices sorted by value, descending; ties keep index order.
inline std::vector<std::size_t> sort_descending(std::vector<std::size_t> idx,
                                                std::span<const double> values) {
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] > values[j]; });
  return idx;
}

struct ArmPartition {
  std::vector<std::size_t> observed;    // a = 1, y descending
  std::vector<std::size_t> unobserved;  // a = 0, y descending when every y is present
};

inline ArmPartition partition_by_arm(const ObservationTable& table) {
  ArmPartition p;
  bool all_y = true;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.treated(i)) {
      p.observed.push_back(i);
    } else {
      p.unobserved.push_back(i);
      all_y = all_y && table.has_y(i);
    }
  }
  p.observed = sort_descending(std::move(p.observed), table.outcomes());
  if (all_y) p.unobserved = sort_descending(std::move(p.unobserved), table.outcomes());
  return p;
}

inline std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = k;
  return inv;
}

}  // namespace sensipw
