#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "sensipw/core.hpp"
#include "sensipw/estimators.hpp"

namespace sensipw {

struct BootstrapConfig {
  std::size_t B = 1000;
  double alpha = 0.1;
  std::uint64_t seed = 0;
  int max_retries_per_resample = 10;
  unsigned workers = 0;  // 0: hardware concurrency

  void validate() const {
    if (B < 2) throw Error(Errc::invalid_argument, "bootstrap needs B >= 2");
    if (!(alpha > 0 && alpha < 1)) throw Error(Errc::invalid_argument, "alpha must be in (0, 1)");
    if (max_retries_per_resample < 0)
      throw Error(Errc::invalid_argument, "max_retries_per_resample must be >= 0");
  }
};

struct ConfidenceReport {
  double L = 0.0;
  double U = 0.0;
  double alpha = 0.1;
  std::size_t B = 0;
  double lambda = 0.0;
  PointInterval point_interval;  // full sample
  std::size_t n_retried = 0;     // resamples redrawn at least once
  std::size_t n_failed = 0;      // failed fit attempts across all resamples
  std::uint64_t seed = 0;
  std::vector<double> lows;   // per-resample minima, resample order
  std::vector<double> highs;  // per-resample maxima
};

/// Inf-definition quantile of the empirical distribution: the ceil(p B)-th
/// smallest value, no interpolation.
inline double empirical_quantile(std::span<const double> values, double p) {
  if (values.empty()) throw Error(Errc::invalid_argument, "quantile of an empty sample");
  if (!(p > 0 && p < 1)) throw Error(Errc::invalid_argument, "quantile level must be in (0, 1)");
  std::vector<double> v(values.begin(), values.end());
  const auto B = static_cast<double>(v.size());
  // The guard absorbs representation error in p (0.95 * 1000 = 950).
  auto k = static_cast<std::size_t>(std::ceil(p * B - 1e-9));
  k = std::clamp<std::size_t>(k, 1, v.size());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end());
  return v[k - 1];
}

/// Generator for (seed, resample, retry); independent of scheduling.
inline std::mt19937_64 resample_stream(std::uint64_t seed, std::uint64_t b, std::uint64_t retry) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(retry), 0x5e1f1u};
  return std::mt19937_64(seq);
}

inline std::vector<std::size_t> resample_indices(std::size_t n, std::mt19937_64& rng) {
  if (n == 0) throw Error(Errc::invalid_argument, "cannot resample an empty table");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

inline std::vector<double> multiplicities(std::span<const std::size_t> idx, std::size_t n) {
  std::vector<double> counts(n, 0.0);
  for (std::size_t i : idx) counts[i] += 1.0;
  return counts;
}

inline unsigned resolve_workers(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Calls fn(i) for i in [0, count) on up to `workers` threads. The first
/// exception by index is rethrown after all threads finish.
template <class Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  workers = std::max(1u, std::min<unsigned>(resolve_workers(workers),
                                            static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    loop();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(loop);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct ResampleStats {
  std::size_t n_retried = 0;
  std::size_t n_failed = 0;
};

/// Draws B resamples, refits the nuisance models on each and hands the
/// refitted context to fn(ctx, b). Degenerate resamples are redrawn up to
/// `max_retries_per_resample` times; results are stored by resample index.
template <class Fn>
auto run_resamples(std::shared_ptr<const PreparedTable> data, EstimandKind kind,
                   const SensitivitySpec& spec, const BootstrapConfig& config, Fn&& fn,
                   ResampleStats* stats = nullptr,
                   const std::optional<Eigen::VectorXd>& initial_beta = {}) {
  using Result = std::invoke_result_t<Fn&, EstimatorContext&, std::size_t>;
  config.validate();
  const std::size_t n = data->table->size();
  std::vector<Result> out(config.B);
  std::vector<int> failures(config.B, 0);

  parallel_for(config.B, config.workers, [&](std::size_t b) {
    for (int attempt = 0; attempt <= config.max_retries_per_resample; ++attempt) {
      auto rng = resample_stream(config.seed, b, static_cast<std::uint64_t>(attempt));
      const auto idx = resample_indices(n, rng);
      std::optional<EstimatorContext> ctx;
      try {
        ctx.emplace(make_context(data, kind, spec, multiplicities(idx, n), initial_beta));
      } catch (const Error& e) {
        if (!e.is_resample_degeneracy()) throw;
        ++failures[b];
        continue;
      }
      out[b] = fn(*ctx, b);
      return;
    }
    throw Error(Errc::too_many_failures,
                "resample " + std::to_string(b) + " failed " + std::to_string(failures[b]) +
                    " times (separation, single class or rank deficiency)");
  });

  if (stats) {
    *stats = {};
    for (int f : failures) {
      stats->n_retried += f > 0 ? 1 : 0;
      stats->n_failed += static_cast<std::size_t>(f);
    }
  }
  return out;
}

/// Percentile-bootstrap sensitivity intervals for several lambda values,
/// sharing one set of resamples: each resample is refitted once and
/// extremized at every lambda.
inline std::vector<ConfidenceReport> percentile_bootstrap(const ObservationTable& table,
                                                          EstimandKind kind,
                                                          std::span<const SensitivitySpec> specs,
                                                          const BootstrapConfig& config) {
  config.validate();
  if (specs.empty()) return {};
  for (const auto& s : specs) s.validate();

  auto data = std::make_shared<const PreparedTable>(table);
  EstimatorContext full = make_context(data, kind, specs.front());
  std::vector<ConfidenceReport> reports(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    full.spec = specs[k];
    reports[k].point_interval = point_interval(full, kind);
  }

  ResampleStats stats;
  const auto traces = run_resamples(
      data, kind, specs.front(), config,
      [&](EstimatorContext& ctx, std::size_t) {
        std::vector<PointInterval> per_spec(specs.size());
        for (std::size_t k = 0; k < specs.size(); ++k) {
          ctx.spec = specs[k];
          per_spec[k] = point_interval(ctx, kind);
        }
        return per_spec;
      },
      &stats, full.propensity.beta);

  for (std::size_t k = 0; k < specs.size(); ++k) {
    ConfidenceReport& r = reports[k];
    r.alpha = config.alpha;
    r.B = config.B;
    r.lambda = specs[k].lambda;
    r.seed = config.seed;
    r.n_retried = stats.n_retried;
    r.n_failed = stats.n_failed;
    r.lows.resize(config.B);
    r.highs.resize(config.B);
    for (std::size_t b = 0; b < config.B; ++b) {
      r.lows[b] = traces[b][k].lo;
      r.highs[b] = traces[b][k].hi;
    }
    r.L = empirical_quantile(r.lows, config.alpha / 2);
    r.U = empirical_quantile(r.highs, 1 - config.alpha / 2);
  }
  return reports;
}

inline ConfidenceReport percentile_bootstrap(const ObservationTable& table, EstimandKind kind,
                                             const SensitivitySpec& spec,
                                             const BootstrapConfig& config) {
  return percentile_bootstrap(table, kind, std::span<const SensitivitySpec>(&spec, 1), config)
      .front();
}

}  // namespace sensipw
