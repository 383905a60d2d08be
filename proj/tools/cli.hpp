#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sensipw/sensipw.hpp"

namespace sensipw::cli {

using nlohmann::json;

struct CommonOptions {
  std::vector<double> lambdas;
  double alpha = 0.1;
  std::size_t B = 1000;
  std::uint64_t seed = 1;
  std::optional<unsigned> workers;
  std::string out;
  std::string format = "json";
};

inline unsigned workers_or_env(const std::optional<unsigned>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SENSIPW_WORKERS")) {
    const std::string s = env;
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw Error(Errc::invalid_argument, "SENSIPW_WORKERS must be a nonnegative integer");
    return static_cast<unsigned>(std::stoul(s));
  }
  return 0;
}

inline std::vector<double> checked_lambdas(std::vector<double> l,
                                           const std::vector<double>& fallback) {
  if (l.empty()) l = fallback;
  std::sort(l.begin(), l.end());
  for (std::size_t k = 0; k < l.size(); ++k) {
    if (!(l[k] >= 0) || !std::isfinite(l[k]))
      throw Error(Errc::invalid_argument, "lambda values must be finite and >= 0");
    if (k > 0 && l[k] == l[k - 1]) throw Error(Errc::invalid_argument, "duplicate lambda value");
  }
  return l;
}

inline BootstrapConfig bootstrap_config(const CommonOptions& c) {
  BootstrapConfig config;
  config.B = c.B;
  config.alpha = c.alpha;
  config.seed = c.seed;
  config.workers = workers_or_env(c.workers);
  return config;
}

// Writes to `path`, or stdout when it is empty.
inline void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw Error(Errc::io_error, "write to '" + path + "' failed");
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot open '" + path + "'");
  return f;
}

inline Estimand parse_estimand(const std::string& s) {
  if (s == "mean") return Estimand::mean_response;
  if (s == "mu0") return Estimand::nonrespondent_mean;
  if (s == "ate") return Estimand::ate;
  if (s == "att") return Estimand::att;
  throw Error(Errc::invalid_argument, "unknown estimand '" + s + "'");
}

// ---- analyze ----

struct AnalyzeOptions {
  std::string input;
  std::string estimand = "ate";
  std::string method = "sipw";
  std::string outcome = "y";
  std::string treatment = "a";
  std::vector<std::string> covariates;
  std::optional<double> lipschitz;
  std::string plot;
};

struct AnalysisOutput {
  EstimandKind kind;
  std::size_t n = 0;
  std::vector<io::AnalysisRow> rows;
};

inline AnalysisOutput analyze(std::istream& csv_in, const AnalyzeOptions& o,
                              const CommonOptions& c) {
  AnalysisOutput out;
  out.kind = {parse_estimand(o.estimand), o.method == "saipw" ? Method::saipw : Method::sipw};
  const auto csv = io::read_csv(csv_in);
  const auto table = io::table_from_csv(csv, {o.outcome, o.treatment, o.covariates},
                                        required_mode(out.kind.estimand),
                                        needs_both_arms(out.kind.estimand));
  out.n = table.size();
  std::vector<SensitivitySpec> specs;
  for (double l : checked_lambdas(c.lambdas, {0.0, 0.5, 1.0, 2.0, 3.0})) {
    SensitivitySpec s{l, std::nullopt};
    if (o.lipschitz) s.lipschitz = LipschitzSpec{*o.lipschitz};
    specs.push_back(s);
  }
  for (const auto& r : percentile_bootstrap(table, out.kind, specs, bootstrap_config(c)))
    out.rows.push_back(io::to_row(r));
  return out;
}

inline std::string plot_title(EstimandKind kind, double alpha) {
  char level[16];
  std::snprintf(level, sizeof level, "%g", 100 * (1 - alpha));
  return std::string(to_string(kind.estimand)) + " (" + to_string(kind.method) + "), " + level +
         "% intervals";
}

inline void run_analyze(const AnalyzeOptions& o, const CommonOptions& c) {
  auto in = open_input(o.input);
  const auto res = analyze(in, o, c);
  if (c.format == "csv") {
    std::ostringstream s;
    io::write_analysis_csv(s, res.rows);
    emit(c.out, s.str());
  } else {
    emit(c.out, io::analysis_json({res.kind, res.n, c.seed, o.input}, res.rows).dump(2) + "\n");
  }
  if (!o.plot.empty()) emit(o.plot, io::render_interval_svg(res.rows, plot_title(res.kind, c.alpha)));
}

// ---- simulate ----

struct SimulateOptions {
  double beta_A = 0.5;
  double beta_Y = 0.5;
  std::size_t reps = 1000;
  std::size_t n = 200;
};

inline std::vector<sim::CoverageRow> simulate(const SimulateOptions& o, const CommonOptions& c) {
  const sim::SimSetting s{o.beta_A, o.beta_Y, o.n};
  const auto lambdas = checked_lambdas(c.lambdas, {0.0, 0.1, 0.2, 0.5, 1.0, 2.0});
  return sim::coverage_study(s, lambdas, o.reps, bootstrap_config(c));
}

inline void run_simulate(const SimulateOptions& o, const CommonOptions& c) {
  const auto rows = simulate(o, c);
  if (c.format == "csv") {
    std::ostringstream out;
    io::write_simulation_csv(out, rows);
    emit(c.out, out.str());
  } else {
    emit(c.out, io::simulation_json(rows, c.seed, c.B, c.alpha).dump(2) + "\n");
  }
}

// ---- oracle ----

struct OracleOptions {
  std::string input;
  bool no_brute_force = false;
  std::string out;
};

inline std::vector<double> number_array(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array())
    throw Error(Errc::parse_error, std::string("oracle instance: '") + key + "' must be an array");
  std::vector<double> v;
  for (const auto& e : j[key]) {
    if (!e.is_number())
      throw Error(Errc::parse_error, std::string("oracle instance: '") + key + "' must hold numbers");
    v.push_back(e.get<double>());
  }
  return v;
}

/// Instance {y, w, lambda | Lambda, cell_weights?, unit_term?}; rows need
/// not be sorted.
inline FractionalProblem parse_instance(const json& j) {
  if (!j.is_object()) throw Error(Errc::parse_error, "oracle instance must be a JSON object");
  const auto y = number_array(j, "y");
  const auto w = number_array(j, "w");
  std::vector<double> c;
  if (j.contains("cell_weights")) c = number_array(j, "cell_weights");
  if (w.size() != y.size() || (!c.empty() && c.size() != y.size()))
    throw Error(Errc::dimension_mismatch, "oracle instance: array lengths differ");

  FractionalProblem p;
  if (j.contains("Lambda") && j["Lambda"].is_number())
    p.Lambda = j["Lambda"].get<double>();
  else if (j.contains("lambda") && j["lambda"].is_number())
    p.Lambda = std::exp(j["lambda"].get<double>());
  else
    throw Error(Errc::parse_error, "oracle instance: needs a numeric 'lambda' or 'Lambda'");
  if (j.contains("unit_term")) {
    if (!j["unit_term"].is_boolean())
      throw Error(Errc::parse_error, "oracle instance: 'unit_term' must be a boolean");
    p.unit_term = j["unit_term"].get<bool>();
  }

  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  for (std::size_t i : order) {
    p.y.push_back(y[i]);
    p.w.push_back(w[i]);
    if (!c.empty()) p.cell_weights.push_back(c[i]);
  }
  p.validate();
  return p;
}

inline json oracle_report(const FractionalProblem& p, bool brute_force) {
  if (brute_force && p.size() > 20)
    throw Error(Errc::size_cap, "brute force limited to m <= 20 (got " + std::to_string(p.size()) +
                                    "); pass --no-brute-force");
  json j;
  j["schema_version"] = io::kSchemaVersion;
  j["command"] = "oracle";
  j["m"] = p.size();
  j["Lambda"] = p.Lambda;
  double worst = 0.0;
  for (Direction dir : {Direction::minimize, Direction::maximize}) {
    const double t = threshold_extremum(p, dir).value;
    const double lp = charnes_cooper_lp(p, dir).value;
    json r = {{"threshold", t}, {"lp", lp}};
    worst = std::max(worst, std::abs(t - lp));
    if (brute_force) {
      const double b = vertex_enumeration_extremum(p, dir).value;
      r["brute_force"] = b;
      worst = std::max({worst, std::abs(t - b), std::abs(lp - b)});
    }
    j[dir == Direction::minimize ? "min" : "max"] = r;
  }
  j["max_discrepancy"] = worst;
  return j;
}

inline void run_oracle(const OracleOptions& o) {
  auto in = open_input(o.input);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("oracle instance: ") + e.what());
  }
  emit(o.out, oracle_report(parse_instance(j), !o.no_brute_force).dump(2) + "\n");
}

}  // namespace sensipw::cli
