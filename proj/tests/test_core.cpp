#include <gtest/gtest.h>

#include <numeric>

#include "sensipw/core.hpp"
#include "test_util.hpp"

using namespace sensipw;

TEST(ValidateTable, WellFormedInput) {
  std::vector<RawRow> rows = {{1, {0.1, 0.2}, 3.0}, {1, {0.3, 0.4}, 1.0}, {0, {0.5, 0.6}, {}}};
  const auto t = validate_table(rows, DataMode::missing_data);
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t.dim(), 2u);
  EXPECT_EQ(t.n_treated(), 2u);
  EXPECT_EQ(t.n_control(), 1u);
  EXPECT_FALSE(t.has_y(2));
  EXPECT_DOUBLE_EQ(t.x(1, 1), 0.4);
}

TEST(ValidateTable, DimensionMismatch) {
  std::vector<RawRow> rows = {{1, {0.1, 0.2}, 3.0}, {1, {0.3, 0.4, 0.5}, 1.0}};
  try {
    validate_table(rows, DataMode::missing_data);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::dimension_mismatch);
  }
}

TEST(ValidateTable, NoObservedResponses) {
  std::vector<RawRow> rows = {{0, {0.1}, {}}, {0, {0.3}, {}}};
  try {
    validate_table(rows, DataMode::missing_data);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate_arm);
  }
}

TEST(ValidateTable, RejectsBadInput) {
  auto code_of = [](std::vector<RawRow> rows, DataMode mode, bool both = false) {
    try {
      validate_table(rows, mode, both);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::internal;
  };
  EXPECT_EQ(code_of({{1, {0.0}, 1.0}}, DataMode::missing_data), Errc::invalid_argument);
  EXPECT_EQ(code_of({{2, {0.0}, 1.0}, {1, {0.0}, 1.0}}, DataMode::missing_data), Errc::bad_indicator);
  EXPECT_EQ(code_of({{1, {0.0}, {}}, {1, {0.0}, 1.0}}, DataMode::missing_data), Errc::missing_outcome);
  EXPECT_EQ(code_of({{1, {0.0}, 1.0}, {0, {0.0}, {}}}, DataMode::observational), Errc::missing_outcome);
  EXPECT_EQ(code_of({{1, {0.0}, 1.0}, {1, {1.0}, 2.0}}, DataMode::observational, true),
            Errc::degenerate_arm);
  EXPECT_EQ(code_of({{1, {NAN}, 1.0}, {1, {1.0}, 2.0}}, DataMode::missing_data), Errc::invalid_argument);
}

TEST(ValidateTable, Idempotent) {
  const auto t1 = testutil::random_table(40, 3, 7);
  const auto t2 = validate_table(t1.to_rows(), t1.mode());
  ASSERT_EQ(t1.size(), t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    EXPECT_EQ(t1.a(i), t2.a(i));
    EXPECT_EQ(t1.y(i), t2.y(i));
    for (std::size_t j = 0; j < t1.dim(); ++j) EXPECT_EQ(t1.x(i, j), t2.x(i, j));
  }
}

TEST(PartitionByArm, SortsDescending) {
  std::vector<RawRow> rows = {{1, {0.0}, 1.0}, {1, {0.0}, 3.0}, {1, {0.0}, 2.0}};
  const auto p = partition_by_arm(validate_table(rows, DataMode::missing_data));
  EXPECT_EQ(p.observed, (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_TRUE(p.unobserved.empty());
}

TEST(PartitionByArm, TiesKeepIndexOrder) {
  std::vector<RawRow> rows = {{1, {0.0}, 5.0}, {1, {0.1}, 5.0}, {1, {0.2}, 5.0}};
  const auto p = partition_by_arm(validate_table(rows, DataMode::missing_data));
  EXPECT_EQ(p.observed, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(PartitionByArm, SingleObservedRow) {
  std::vector<RawRow> rows = {{1, {0.0}, 5.0}, {0, {0.1}, {}}};
  const auto p = partition_by_arm(validate_table(rows, DataMode::missing_data));
  EXPECT_EQ(p.observed, (std::vector<std::size_t>{0}));
  EXPECT_EQ(p.unobserved, (std::vector<std::size_t>{1}));
}

TEST(PartitionByArm, InverseRestoresOrder) {
  const auto t = testutil::random_table(60, 2, 11);
  const auto p = partition_by_arm(t);
  std::vector<std::size_t> perm = p.observed;
  perm.insert(perm.end(), p.unobserved.begin(), p.unobserved.end());
  ASSERT_EQ(perm.size(), t.size());
  const auto inv = inverse_permutation(perm);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(perm[inv[i]], i);
  for (std::size_t k = 1; k < p.observed.size(); ++k)
    EXPECT_GE(t.y(p.observed[k - 1]), t.y(p.observed[k]));
}

TEST(PartitionByArm, TieBreakIsDeterministic) {
  std::vector<RawRow> rows;
  for (int i = 0; i < 50; ++i) rows.push_back({1, {double(i)}, double(i % 3)});
  const auto a = partition_by_arm(validate_table(rows, DataMode::missing_data));
  const auto b = partition_by_arm(validate_table(rows, DataMode::missing_data));
  EXPECT_EQ(a.observed, b.observed);
  for (std::size_t k = 1; k < a.observed.size(); ++k)
    if (rows[a.observed[k - 1]].y == rows[a.observed[k]].y) EXPECT_LT(a.observed[k - 1], a.observed[k]);
}
