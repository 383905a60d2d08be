#pragma once

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sensipw/bootstrap.hpp"
#include "sensipw/core.hpp"
#include "sensipw/estimators.hpp"
#include "sensipw/simharness.hpp"

namespace sensipw::io {

inline constexpr int kSchemaVersion = 1;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // source line of each row (1-based)

  std::ptrdiff_t column(std::string_view name) const {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  }
};

namespace detail {

inline std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted)
    throw Error(Errc::parse_error, "line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_record(line, line_no);
    for (auto& f : fields) f = detail::trim(f);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw Error(Errc::parse_error, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(t.header.size()) + " fields, got " +
                                         std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw Error(Errc::parse_error, "CSV input has no header row");
  return t;
}

inline double parse_number(std::string_view field, std::size_t line, std::string_view column) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc{} || ptr != last)
    throw Error(Errc::parse_error, "line " + std::to_string(line) + ", column '" +
                                       std::string(column) + "': cannot parse '" +
                                       std::string(field) + "' as a number");
  return v;
}

struct ColumnBinding {
  std::string outcome;
  std::string treatment;
  std::vector<std::string> covariates;  // empty: every other column
};

/// Builds a validated table from CSV columns. An empty outcome cell is
/// accepted only on indicator-0 rows in missing-data mode.
inline ObservationTable table_from_csv(const CsvTable& csv, const ColumnBinding& bind,
                                       DataMode mode, bool require_both_arms) {
  auto need = [&](const std::string& name) {
    const auto c = csv.column(name);
    if (c < 0) throw Error(Errc::parse_error, "column '" + name + "' not found in header");
    return static_cast<std::size_t>(c);
  };
  const std::size_t ycol = need(bind.outcome);
  const std::size_t acol = need(bind.treatment);
  std::vector<std::size_t> xcols;
  std::vector<std::string> xnames = bind.covariates;
  if (xnames.empty())
    for (const auto& h : csv.header)
      if (h != bind.outcome && h != bind.treatment) xnames.push_back(h);
  for (const auto& name : xnames) xcols.push_back(need(name));
  if (xcols.empty()) throw Error(Errc::parse_error, "no covariate columns");

  std::vector<RawRow> rows(csv.rows.size());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& f = csv.rows[r];
    const std::size_t line = csv.line_numbers[r];
    RawRow& row = rows[r];
    row.a = parse_number(f[acol], line, csv.header[acol]);
    if (row.a != 0.0 && row.a != 1.0)
      throw Error(Errc::bad_indicator, "line " + std::to_string(line) + ", column '" +
                                           csv.header[acol] + "': indicator must be 0 or 1");
    if (f[ycol].empty()) {
      if (row.a == 1.0 || mode == DataMode::observational)
        throw Error(Errc::missing_outcome, "line " + std::to_string(line) + ", column '" +
                                               csv.header[ycol] + "': outcome required");
    } else {
      row.y = parse_number(f[ycol], line, csv.header[ycol]);
    }
    row.x.reserve(xcols.size());
    for (std::size_t c : xcols) row.x.push_back(parse_number(f[c], line, csv.header[c]));
  }
  return validate_table(rows, mode, require_both_arms);
}

struct AnalysisRow {
  double lambda = 0.0;
  double Lambda = 1.0;
  double point_lo = 0.0, point_hi = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  std::size_t B = 0;
  double alpha = 0.1;
  std::size_t n_retried = 0;

  bool operator==(const AnalysisRow&) const = default;
};

inline AnalysisRow to_row(const ConfidenceReport& r) {
  return {r.lambda, std::exp(r.lambda), r.point_interval.lo, r.point_interval.hi, r.L, r.U,
          r.B,      r.alpha,           r.n_retried};
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const std::vector<std::string>& analysis_columns() {
  static const std::vector<std::string> cols = {"lambda", "Lambda", "point_lo", "point_hi", "ci_lo",
                                                "ci_hi",  "B",      "alpha",    "n_retried"};
  return cols;
}

inline void write_analysis_csv(std::ostream& out, const std::vector<AnalysisRow>& rows) {
  const auto& cols = analysis_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    out << format_double(r.lambda) << ',' << format_double(r.Lambda) << ','
        << format_double(r.point_lo) << ',' << format_double(r.point_hi) << ','
        << format_double(r.ci_lo) << ',' << format_double(r.ci_hi) << ',' << r.B << ','
        << format_double(r.alpha) << ',' << r.n_retried << '\n';
  }
}

inline std::vector<AnalysisRow> read_analysis_csv(std::istream& in) {
  const CsvTable csv = read_csv(in);
  if (csv.header != analysis_columns())
    throw Error(Errc::parse_error, "not an analysis report: unexpected header");
  std::vector<AnalysisRow> rows;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& f = csv.rows[r];
    const std::size_t line = csv.line_numbers[r];
    auto num = [&](std::size_t c) { return parse_number(f[c], line, csv.header[c]); };
    rows.push_back({num(0), num(1), num(2), num(3), num(4), num(5),
                    static_cast<std::size_t>(num(6)), num(7), static_cast<std::size_t>(num(8))});
  }
  return rows;
}

struct AnalysisMeta {
  EstimandKind kind;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string input;
};

inline nlohmann::json analysis_json(const AnalysisMeta& meta, const std::vector<AnalysisRow>& rows) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "analyze";
  j["estimand"] = to_string(meta.kind.estimand);
  j["method"] = to_string(meta.kind.method);
  j["input"] = meta.input;
  j["n"] = meta.n;
  j["seed"] = meta.seed;
  auto& arr = j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"lambda", r.lambda},
                   {"Lambda", r.Lambda},
                   {"point_lo", r.point_lo},
                   {"point_hi", r.point_hi},
                   {"ci_lo", r.ci_lo},
                   {"ci_hi", r.ci_hi},
                   {"B", r.B},
                   {"alpha", r.alpha},
                   {"n_retried", r.n_retried}});
  }
  return j;
}

inline const std::vector<std::string>& simulation_columns() {
  static const std::vector<std::string> cols = {
      "beta_A", "beta_Y",       "lambda",       "Lambda",    "noncoverage", "pop_lo", "pop_hi",
      "med_point_lo", "med_point_hi", "med_ci_lo", "med_ci_hi", "reps",   "n"};
  return cols;
}

inline void write_simulation_csv(std::ostream& out, const std::vector<sim::CoverageRow>& rows) {
  const auto& cols = simulation_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    out << format_double(r.setting.beta_A) << ',' << format_double(r.setting.beta_Y) << ','
        << format_double(r.lambda) << ',' << format_double(r.Lambda()) << ','
        << format_double(r.noncoverage) << ',' << format_double(r.population.lo) << ','
        << format_double(r.population.hi) << ',' << format_double(r.median_point_lo) << ','
        << format_double(r.median_point_hi) << ',' << format_double(r.median_ci_lo) << ','
        << format_double(r.median_ci_hi) << ',' << r.reps << ',' << r.setting.n << '\n';
  }
}

inline nlohmann::json simulation_json(const std::vector<sim::CoverageRow>& rows, std::uint64_t seed,
                                      std::size_t B, double alpha) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "simulate";
  j["seed"] = seed;
  j["B"] = B;
  j["alpha"] = alpha;
  auto& arr = j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"beta_A", r.setting.beta_A},
                   {"beta_Y", r.setting.beta_Y},
                   {"lambda", r.lambda},
                   {"Lambda", r.Lambda()},
                   {"noncoverage", r.noncoverage},
                   {"pop_lo", r.population.lo},
                   {"pop_hi", r.population.hi},
                   {"med_point_lo", r.median_point_lo},
                   {"med_point_hi", r.median_point_hi},
                   {"med_ci_lo", r.median_ci_lo},
                   {"med_ci_hi", r.median_ci_hi},
                   {"reps", r.reps},
                   {"failed_reps", r.failed_reps},
                   {"n", r.setting.n}});
  }
  return j;
}

inline nlohmann::json error_json(const Error& e) {
  return {{"schema_version", kSchemaVersion},
          {"error", {{"code", to_string(e.code())}, {"message", e.what()}}}};
}

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

/// Interval-vs-Lambda chart: solid bars for the point-estimate range,
/// dashed extensions out to the confidence limits, a circle at each
/// midpoint. Output depends only on `rows` and `title`.
inline std::string render_interval_svg(const std::vector<AnalysisRow>& rows,
                                       const std::string& title) {
  using detail::fmt;
  const double width = 640, height = 400, left = 70, right = 30, top = 40, bottom = 60;
  double ymin = 0, ymax = 1;
  if (!rows.empty()) {
    ymin = rows.front().ci_lo;
    ymax = rows.front().ci_hi;
    for (const auto& r : rows) {
      ymin = std::min({ymin, r.ci_lo, r.point_lo});
      ymax = std::max({ymax, r.ci_hi, r.point_hi});
    }
  }
  if (ymax - ymin < 1e-9) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  auto ypos = [&](double v) { return top + (ymax - v) / (ymax - ymin) * plot_h; };
  auto xpos = [&](std::size_t k) {
    return left + (static_cast<double>(k) + 0.5) / static_cast<double>(std::max<std::size_t>(rows.size(), 1)) * plot_w;
  };

  std::string escaped;
  for (char c : title) {
    if (c == '<') escaped += "&lt;";
    else if (c == '>') escaped += "&gt;";
    else if (c == '&') escaped += "&amp;";
    else escaped += c;
  }

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\""
    << fmt(height) << "\" viewBox=\"0 0 " << fmt(width) << ' ' << fmt(height) << "\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << fmt(width) << "\" height=\"" << fmt(height)
    << "\" fill=\"white\"/>\n";
  s << "<text x=\"" << fmt(width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
    << escaped << "</text>\n";
  s << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top + plot_h) << "\" x2=\""
    << fmt(left + plot_w) << "\" y2=\"" << fmt(top + plot_h) << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(left)
    << "\" y2=\"" << fmt(top + plot_h) << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = ymin + (ymax - ymin) * t / 4.0;
    s << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(ypos(v) + 4)
      << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(v) << "</text>\n";
  }
  if (ymin < 0 && ymax > 0)
    s << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(ypos(0)) << "\" x2=\"" << fmt(left + plot_w)
      << "\" y2=\"" << fmt(ypos(0)) << "\" stroke=\"gray\" stroke-dasharray=\"2,2\"/>\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const double x = xpos(k);
    s << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(ypos(r.ci_hi)) << "\" x2=\"" << fmt(x)
      << "\" y2=\"" << fmt(ypos(r.point_hi)) << "\" stroke=\"black\" stroke-dasharray=\"4,3\"/>\n";
    s << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(ypos(r.point_lo)) << "\" x2=\"" << fmt(x)
      << "\" y2=\"" << fmt(ypos(r.ci_lo)) << "\" stroke=\"black\" stroke-dasharray=\"4,3\"/>\n";
    s << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(ypos(r.point_hi)) << "\" x2=\"" << fmt(x)
      << "\" y2=\"" << fmt(ypos(r.point_lo)) << "\" stroke=\"black\" stroke-width=\"3\"/>\n";
    s << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(ypos(0.5 * (r.point_lo + r.point_hi)))
      << "\" r=\"4\" fill=\"white\" stroke=\"black\"/>\n";
    s << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(top + plot_h + 18)
      << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(r.Lambda) << "</text>\n";
  }
  s << "<text x=\"" << fmt(left + plot_w / 2) << "\" y=\"" << fmt(height - 16)
    << "\" text-anchor=\"middle\" font-size=\"13\">Lambda</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace sensipw::io
