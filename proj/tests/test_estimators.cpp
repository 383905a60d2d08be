#include <gtest/gtest.h>

#include <memory>
#include <optional>

#include "oracles.hpp"
#include "sensipw/estimators.hpp"
#include "test_util.hpp"

using namespace sensipw;

namespace {

constexpr EstimandKind kAll[] = {
    {Estimand::mean_response, Method::sipw}, {Estimand::nonrespondent_mean, Method::sipw},
    {Estimand::ate, Method::sipw},           {Estimand::att, Method::sipw},
    {Estimand::mean_response, Method::saipw}, {Estimand::nonrespondent_mean, Method::saipw},
    {Estimand::ate, Method::saipw},          {Estimand::att, Method::saipw},
};

// Small tables can be separable; find a seed whose fit succeeds.
std::optional<EstimatorContext> try_context(const ObservationTable& t, EstimandKind kind,
                                            double lambda) {
  try {
    return make_context(t, kind, {lambda, std::nullopt});
  } catch (const Error& e) {
    if (e.is_resample_degeneracy()) return std::nullopt;
    throw;
  }
}

struct Arms {
  std::vector<double> y1, w1, y0, w0;  // w1 = exp(-g), w0 = exp(+g)
};

Arms arms_of(const EstimatorContext& ctx, std::span<const double> values = {}) {
  Arms a;
  const auto& t = ctx.table();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double g = ctx.propensity.linear_predictors[i];
    const double v = values.empty() ? t.y(i) : values[i];
    if (t.treated(i)) {
      a.y1.push_back(v);
      a.w1.push_back(std::exp(-g));
    } else {
      a.y0.push_back(v);
      a.w0.push_back(std::exp(g));
    }
  }
  return a;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

ObservationTable transformed(const ObservationTable& t, double scale, double shift) {
  auto rows = t.to_rows();
  for (auto& r : rows)
    if (r.y) r.y = scale * *r.y + shift;
  return validate_table(rows, t.mode());
}

}  // namespace

TEST(SipwAt, BalancedInterceptGivesPlainMean) {
  // Each covariate value appears equally often in both arms, so the fitted
  // propensity is exactly 1/2 and every weight is 1.
  std::vector<RawRow> rows = {{1, {1.0}, 3.0}, {0, {1.0}, {}}, {1, {2.0}, 5.0},
                              {0, {2.0}, {}},  {1, {1.0}, 4.0}, {0, {1.0}, {}}};
  const auto t = validate_table(rows, DataMode::missing_data);
  const auto ctx = make_context(t, {Estimand::mean_response, Method::sipw}, {0.0, std::nullopt});
  EXPECT_NEAR(sipw_at(ctx, std::vector<double>(6, 1.0)), 4.0, 1e-12);
}

TEST(SipwAt, SixRowDirectArithmetic) {
  std::vector<RawRow> rows = {{1, {0.5}, 2.0}, {0, {1.5}, {}}, {1, {-0.3}, 1.0},
                              {1, {2.0}, -1.0}, {0, {0.1}, {}}, {1, {-1.0}, 0.5}};
  const auto t = validate_table(rows, DataMode::missing_data);
  const auto ctx = make_context(t, {Estimand::mean_response, Method::sipw}, {1.0, std::nullopt});
  const std::vector<double> z = {2.0, 1.0, 0.5, 1.5, 1.0, 1.0 / std::exp(1.0)};
  const auto& b = ctx.propensity.beta;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].a != 1.0) continue;
    const double m = 1.0 + z[i] * std::exp(-(b[0] + b[1] * rows[i].x[0]));
    num += m * *rows[i].y;
    den += m;
  }
  EXPECT_NEAR(sipw_at(ctx, z), num / den, 1e-12);
}

TEST(SipwAt, SampleBounded) {
  const auto t = testutil::random_table(50, 2, 3, DataMode::missing_data);
  const auto ctx = make_context(t, {Estimand::mean_response, Method::sipw}, {2.0, std::nullopt});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  double ymin = 1e300, ymax = -1e300;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.treated(i)) ymin = std::min(ymin, t.y(i)), ymax = std::max(ymax, t.y(i));
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> z(t.size());
    for (auto& v : z) v = std::exp(u(rng));
    const double s = sipw_at(ctx, z);
    EXPECT_GE(s, ymin);
    EXPECT_LE(s, ymax);
  }
}

TEST(MeanResponse, DegenerateAtZeroAndMatchesSipw) {
  const auto t = testutil::random_table(80, 2, 4, DataMode::missing_data);
  const auto ctx = make_context(t, {Estimand::mean_response, Method::sipw}, {0.0, std::nullopt});
  const auto r = mean_response_interval(ctx);
  EXPECT_EQ(r.lo, r.hi);
  EXPECT_NEAR(r.lo, sipw_at(ctx, std::vector<double>(t.size(), 1.0)), 1e-12);
}

TEST(MeanResponse, MatchesVertexEnumeration) {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 10 && seed < 100; ++seed) {
    const auto t = testutil::random_table(18, 1, seed, DataMode::missing_data);
    if (t.n_treated() > 12) continue;
    auto ctx = try_context(t, {Estimand::mean_response, Method::sipw}, 0.8);
    if (!ctx) continue;
    const auto a = arms_of(*ctx);
    const auto ref = oracle::vertex_extremes(a.y1, a.w1, {}, ctx->spec.Lambda(), 1.0);
    const auto r = mean_response_interval(*ctx);
    EXPECT_NEAR(r.lo, ref.lo, 1e-12);
    EXPECT_NEAR(r.hi, ref.hi, 1e-12);
    ++checked;
  }
  EXPECT_EQ(checked, 10);
}

TEST(NonrespondentMean, ZeroLambdaPoint) {
  const auto t = testutil::random_table(60, 2, 9, DataMode::missing_data);
  const auto ctx =
      make_context(t, {Estimand::nonrespondent_mean, Method::sipw}, {0.0, std::nullopt});
  const auto a = arms_of(ctx);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.y1.size(); ++i) num += a.y1[i] * a.w1[i], den += a.w1[i];
  const auto r = nonrespondent_mean_interval(ctx);
  EXPECT_NEAR(r.lo, num / den, 1e-12);
  EXPECT_NEAR(r.hi, num / den, 1e-12);
}

TEST(NonrespondentMean, MatchesVertexEnumeration) {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 10 && seed < 100; ++seed) {
    const auto t = testutil::random_table(18, 1, seed, DataMode::missing_data);
    if (t.n_treated() > 12) continue;
    auto ctx = try_context(t, {Estimand::nonrespondent_mean, Method::sipw}, 1.2);
    if (!ctx) continue;
    const auto a = arms_of(*ctx);
    const auto ref = oracle::vertex_extremes(a.y1, a.w1, {}, ctx->spec.Lambda(), 0.0);
    const auto r = nonrespondent_mean_interval(*ctx);
    EXPECT_NEAR(r.lo, ref.lo, 1e-12);
    EXPECT_NEAR(r.hi, ref.hi, 1e-12);
    ++checked;
  }
  EXPECT_EQ(checked, 10);
}

TEST(NonrespondentMean, ConstantOutcome) {
  auto rows = testutil::random_rows(40, 2, 12);
  for (auto& r : rows) r.y = 2.5;
  const auto t = validate_table(rows, DataMode::missing_data);
  for (double lambda : {0.0, 1.0, 3.0}) {
    const auto ctx =
        make_context(t, {Estimand::nonrespondent_mean, Method::sipw}, {lambda, std::nullopt});
    const auto r = nonrespondent_mean_interval(ctx);
    EXPECT_NEAR(r.lo, 2.5, 1e-12);
    EXPECT_NEAR(r.hi, 2.5, 1e-12);
  }
}

TEST(Ate, MatchesJointEnumeration) {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 8 && seed < 200; ++seed) {
    const auto t = testutil::random_table(10, 1, seed);
    auto ctx = try_context(t, {Estimand::ate, Method::sipw}, 0.7);
    if (!ctx) continue;
    const auto a = arms_of(*ctx);
    const auto ref =
        oracle::joint_difference_extremes(a.y1, a.w1, a.y0, a.w0, ctx->spec.Lambda(), 1.0, 1.0);
    const auto r = ate_interval(*ctx);
    EXPECT_NEAR(r.lo, ref.lo, 1e-12);
    EXPECT_NEAR(r.hi, ref.hi, 1e-12);
    ++checked;
  }
  EXPECT_EQ(checked, 8);
}

TEST(Ate, IdenticalArmsAreSymmetric) {
  const auto base = testutil::random_rows(30, 2, 13);
  std::vector<RawRow> rows;
  for (const auto& r : base) {
    rows.push_back({1, r.x, r.y});
    rows.push_back({0, r.x, r.y});
  }
  const auto t = validate_table(rows, DataMode::observational);
  const auto ctx = make_context(t, {Estimand::ate, Method::sipw}, {1.0, std::nullopt});
  const auto r = ate_interval(ctx);
  EXPECT_NEAR(r.lo, -r.hi, 1e-9);
}

TEST(Att, ZeroLambdaMatchesOddsWeighting) {
  const auto t = testutil::random_table(70, 2, 14);
  const auto ctx = make_context(t, {Estimand::att, Method::sipw}, {0.0, std::nullopt});
  double treated = 0, n1 = 0, num = 0, den = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double e = expit(ctx.propensity.linear_predictors[i]);
    if (t.treated(i)) {
      treated += t.y(i);
      n1 += 1;
    } else {
      num += t.y(i) * e / (1 - e);
      den += e / (1 - e);
    }
  }
  const auto r = att_interval(ctx);
  EXPECT_NEAR(r.lo, treated / n1 - num / den, 1e-10);
  EXPECT_NEAR(r.hi, treated / n1 - num / den, 1e-10);
}

TEST(Att, MatchesVertexEnumeration) {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 8 && seed < 200; ++seed) {
    const auto t = testutil::random_table(16, 1, seed);
    if (t.n_control() > 12) continue;
    auto ctx = try_context(t, {Estimand::att, Method::sipw}, 0.9);
    if (!ctx) continue;
    const auto a = arms_of(*ctx);
    const auto ref = oracle::vertex_extremes(a.y0, a.w0, {}, ctx->spec.Lambda(), 0.0);
    const auto r = att_interval(*ctx);
    EXPECT_NEAR(r.lo, mean(a.y1) - ref.hi, 1e-12);
    EXPECT_NEAR(r.hi, mean(a.y1) - ref.lo, 1e-12);
    ++checked;
  }
  EXPECT_EQ(checked, 8);
}

TEST(Att, ConstantControlsGiveDegenerateInterval) {
  auto rows = testutil::random_rows(40, 2, 15);
  for (auto& r : rows)
    if (r.a == 0.0) r.y = -1.0;
  const auto t = validate_table(rows, DataMode::observational);
  double s = 0, n1 = 0;
  for (const auto& r : rows)
    if (r.a == 1.0) s += *r.y, n1 += 1;
  for (double lambda : {0.0, 2.0}) {
    const auto ctx = make_context(t, {Estimand::att, Method::sipw}, {lambda, std::nullopt});
    const auto r = att_interval(ctx);
    EXPECT_NEAR(r.lo, s / n1 + 1.0, 1e-12);
    EXPECT_NEAR(r.hi, s / n1 + 1.0, 1e-12);
  }
}

TEST(Saipw, ZeroAugmentationEqualsSipw) {
  const auto t = testutil::random_table(60, 2, 16);
  for (Estimand e : {Estimand::mean_response, Estimand::nonrespondent_mean, Estimand::ate,
                     Estimand::att}) {
    for (double lambda : {0.0, 0.5, 2.0}) {
      auto ctx = make_context(t, {e, Method::sipw}, {lambda, std::nullopt});
      LinearFit zero{Eigen::VectorXd::Zero(3), std::vector<double>(t.size(), 0.0)};
      ctx.outcome_treated = zero;
      ctx.outcome_control = zero;
      const auto a = point_interval(ctx, {e, Method::sipw});
      const auto b = saipw_interval(ctx, e);
      EXPECT_NEAR(a.lo, b.lo, 1e-12) << to_string(e);
      EXPECT_NEAR(a.hi, b.hi, 1e-12) << to_string(e);
    }
  }
}

TEST(Saipw, MeanResponseMatchesResidualEnumeration) {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 8 && seed < 200; ++seed) {
    const auto t = testutil::random_table(18, 1, seed);
    if (t.n_treated() > 12) continue;
    auto ctx = try_context(t, {Estimand::mean_response, Method::saipw}, 1.0);
    if (!ctx) continue;
    const auto& f = *ctx->outcome_treated;
    std::vector<double> res(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) res[i] = t.y(i) - f.fitted[i];
    const auto a = arms_of(*ctx, res);
    const auto ref = oracle::vertex_extremes(a.y1, a.w1, {}, ctx->spec.Lambda(), 1.0);
    double offset = 0;
    for (double v : f.fitted) offset += v;
    offset /= static_cast<double>(t.size());
    const auto r = saipw_interval(*ctx, Estimand::mean_response);
    EXPECT_NEAR(r.lo, offset + ref.lo, 1e-12);
    EXPECT_NEAR(r.hi, offset + ref.hi, 1e-12);
    double rmin = 1e300, rmax = -1e300;
    for (double v : a.y1) rmin = std::min(rmin, v), rmax = std::max(rmax, v);
    EXPECT_GE(r.lo, offset + rmin - 1e-12);
    EXPECT_LE(r.hi, offset + rmax + 1e-12);
    ++checked;
  }
  EXPECT_EQ(checked, 8);
}

TEST(Saipw, AteMatchesJointResidualEnumeration) {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 6 && seed < 300; ++seed) {
    const auto t = testutil::random_table(10, 1, seed);
    auto ctx = try_context(t, {Estimand::ate, Method::saipw}, 0.6);
    if (!ctx) continue;
    const auto& f1 = *ctx->outcome_treated;
    const auto& f0 = *ctx->outcome_control;
    std::vector<double> res(t.size());
    double off = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      res[i] = t.y(i) - (t.treated(i) ? f1.fitted[i] : f0.fitted[i]);
      off += f1.fitted[i] - f0.fitted[i];
    }
    off /= static_cast<double>(t.size());
    const auto a = arms_of(*ctx, res);
    const auto ref =
        oracle::joint_difference_extremes(a.y1, a.w1, a.y0, a.w0, ctx->spec.Lambda(), 1.0, 1.0);
    const auto r = saipw_interval(*ctx, Estimand::ate);
    EXPECT_NEAR(r.lo, off + ref.lo, 1e-12);
    EXPECT_NEAR(r.hi, off + ref.hi, 1e-12);
    ++checked;
  }
  EXPECT_EQ(checked, 6);
}

TEST(Estimators, CollapseNestingAndOrder) {
  const auto t = testutil::random_table(120, 3, 17);
  for (const auto& kind : kAll) {
    auto ctx = make_context(t, kind, {0.0, std::nullopt});
    const auto r0 = point_interval(ctx, kind);
    EXPECT_NEAR(r0.lo, r0.hi, 1e-12 * std::max(1.0, std::abs(r0.lo)));
    PointInterval prev = r0;
    for (double lambda : {0.25, 0.5, 1.0, 2.0, 3.0}) {
      ctx.spec.lambda = lambda;
      const auto r = point_interval(ctx, kind);
      EXPECT_LE(r.lo, r.hi);
      EXPECT_LE(r.lo, prev.lo + 1e-12);
      EXPECT_GE(r.hi, prev.hi - 1e-12);
      prev = r;
    }
  }
}

TEST(Estimators, MeanResponseSampleBounded) {
  const auto t = testutil::random_table(90, 2, 18, DataMode::missing_data);
  double ymin = 1e300, ymax = -1e300;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.treated(i)) ymin = std::min(ymin, t.y(i)), ymax = std::max(ymax, t.y(i));
  for (double lambda : {0.0, 1.0, 5.0}) {
    const auto ctx = make_context(t, {Estimand::mean_response, Method::sipw}, {lambda, std::nullopt});
    const auto r = mean_response_interval(ctx);
    EXPECT_GE(r.lo, ymin);
    EXPECT_LE(r.hi, ymax);
  }
}

TEST(Estimators, LocationScaleEquivariance) {
  const auto t = testutil::random_table(100, 2, 19);
  const double a = 2.5, b = -4.0;
  const auto t2 = transformed(t, a, b);
  for (const auto& kind : kAll) {
    const bool location = kind.estimand == Estimand::mean_response ||
                          kind.estimand == Estimand::nonrespondent_mean;
    for (double lambda : {0.0, 1.0}) {
      const auto r1 = point_interval(make_context(t, kind, {lambda, std::nullopt}), kind);
      const auto r2 = point_interval(make_context(t2, kind, {lambda, std::nullopt}), kind);
      const double shift = location ? b : 0.0;
      EXPECT_NEAR(r2.lo, a * r1.lo + shift, 1e-9) << to_string(kind.estimand);
      EXPECT_NEAR(r2.hi, a * r1.hi + shift, 1e-9) << to_string(kind.estimand);
    }
  }
}

TEST(Estimators, LipschitzWithLargeConstantMatchesUnconstrained) {
  const auto t = testutil::random_table(40, 2, 20);
  for (const auto& kind : kAll) {
    auto ctx = make_context(t, kind, {1.0, std::nullopt});
    const auto free = point_interval(ctx, kind);
    ctx.spec.lipschitz = LipschitzSpec{1e6, LipschitzMetric::scaled_euclidean};
    const auto con = point_interval(ctx, kind);
    EXPECT_NEAR(free.lo, con.lo, 1e-8);
    EXPECT_NEAR(free.hi, con.hi, 1e-8);
    ctx.spec.lipschitz = LipschitzSpec{0.3, LipschitzMetric::scaled_euclidean};
    const auto tight = point_interval(ctx, kind);
    EXPECT_GE(tight.lo, free.lo - 1e-10);
    EXPECT_LE(tight.hi, free.hi + 1e-10);
  }
}

TEST(Estimators, ObservationalEstimandNeedsObservationalTable) {
  const auto t = testutil::random_table(30, 1, 21, DataMode::missing_data);
  try {
    make_context(t, {Estimand::ate, Method::sipw}, {0.0, std::nullopt});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unsupported);
  }
}
