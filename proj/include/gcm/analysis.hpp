#ifndef GCM_ANALYSIS_HPP
#define GCM_ANALYSIS_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcm/csv.hpp"
#include "gcm/dataset.hpp"
#include "gcm/design.hpp"
#include "gcm/estimation.hpp"
#include "gcm/gls.hpp"
#include "gcm/inference.hpp"
#include "gcm/types.hpp"

namespace gcm {

struct AnalysisConfig {
  std::string input;
  ColumnMapping mapping;
  double alpha_global = 0.05;
  double alpha_fdr = 0.1;
  int K = 0;  // region pairs pooled for the temporal estimate; 0 means R
  std::string out_dir = ".";
  std::uint64_t seed = 0;  // reserved for stochastic tie-breaking; unused
  bool standardize = true;
  int n_threads = 1;

  void validate() const {
    if (input.empty()) throw ValidationError("analysis config: input path is required");
    if (!(alpha_global > 0.0 && alpha_global < 1.0))
      throw ValidationError("analysis config: alpha_global must lie in (0, 1)");
    if (!(alpha_fdr > 0.0 && alpha_fdr < 1.0))
      throw ValidationError("analysis config: alpha_fdr must lie in (0, 1)");
    if (K < 0) throw ValidationError("analysis config: K must be non-negative");
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ValidationError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

}  // namespace detail

// Flat key = value configuration file; '#' starts a comment. Keys mirror the
// AnalysisConfig fields.
inline void apply_config_file(AnalysisConfig& config, const std::string& path) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot open config file '" + path + "'");
  std::string line;
  long line_number = 0;
  while (std::getline(file, line)) {
    ++line_number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_number) +
                            ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key == "input") config.input = value;
    else if (key == "id_col") config.mapping.id_col = value;
    else if (key == "time_col") config.mapping.time_col = value;
    else if (key == "static_cols") config.mapping.static_cols = detail::split_list(value);
    else if (key == "dynamic_cols") config.mapping.dynamic_cols = detail::split_list(value);
    else if (key == "response_cols") config.mapping.response_cols = detail::split_list(value);
    else if (key == "alpha_global") config.alpha_global = std::stod(value);
    else if (key == "alpha_fdr") config.alpha_fdr = std::stod(value);
    else if (key == "K") config.K = std::stoi(value);
    else if (key == "out") config.out_dir = value;
    else if (key == "seed") config.seed = std::stoull(value);
    else if (key == "standardize") config.standardize = detail::parse_bool(value, key);
    else if (key == "threads") config.n_threads = std::stoi(value);
    else
      throw ValidationError("config line " + std::to_string(line_number) + ": unknown key '" +
                            key + "'");
  }
}

struct AnalysisResult {
  CovarianceComponents components;
  FitResult fit;
  GlobalTestReport global;
  MultipleTestReport multiple;
  Diagnostics diagnostics;
  std::vector<std::string> standardized_columns;
  std::vector<std::string> region_names;
  std::vector<std::string> coefficient_names;
  int n_subjects = 0, n_times = 0;
};

namespace detail {

// Zero-mean/unit-variance rescaling of the covariate columns that look
// continuous (more than two distinct values). Binary indicators keep their
// coding.
inline void standardize_covariates(GrowthCurveDataset& data,
                                   std::vector<std::string>& standardized) {
  auto is_continuous = [](const std::vector<double>& values) {
    std::set<double> distinct(values.begin(), values.end());
    return distinct.size() > 2;
  };
  for (int j = 0; j < data.n_static; ++j) {
    std::vector<double> values(data.n_subjects);
    for (int i = 0; i < data.n_subjects; ++i) values[i] = data.static_covariates(i, j);
    if (!is_continuous(values)) continue;
    double mean = 0.0, sumsq = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    for (double v : values) sumsq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sumsq / static_cast<double>(values.size() - 1));
    if (!(sd > 0.0)) continue;
    for (int i = 0; i < data.n_subjects; ++i)
      data.static_covariates(i, j) = (data.static_covariates(i, j) - mean) / sd;
    standardized.push_back(j < static_cast<int>(data.static_names.size())
                               ? data.static_names[j]
                               : "x" + std::to_string(j + 1));
  }
  for (int j = 0; j < data.n_dynamic; ++j) {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(data.n_subjects) * data.n_times);
    for (int i = 0; i < data.n_subjects; ++i)
      for (int t = 0; t < data.n_times; ++t) values.push_back(data.dynamic_covariates[i](t, j));
    if (!is_continuous(values)) continue;
    double mean = 0.0, sumsq = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    for (double v : values) sumsq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sumsq / static_cast<double>(values.size() - 1));
    if (!(sd > 0.0)) continue;
    for (int i = 0; i < data.n_subjects; ++i)
      for (int t = 0; t < data.n_times; ++t)
        data.dynamic_covariates[i](t, j) = (data.dynamic_covariates[i](t, j) - mean) / sd;
    standardized.push_back(j < static_cast<int>(data.dynamic_names.size())
                               ? data.dynamic_names[j]
                               : "z" + std::to_string(j + 1));
  }
}

inline std::vector<std::string> coefficient_names(const GrowthCurveDataset& data,
                                                  const std::string& time_col) {
  auto static_name = [&](int j) {
    return j < static_cast<int>(data.static_names.size()) ? data.static_names[j]
                                                          : "x" + std::to_string(j + 1);
  };
  auto dynamic_name = [&](int j) {
    return j < static_cast<int>(data.dynamic_names.size()) ? data.dynamic_names[j]
                                                           : "z" + std::to_string(j + 1);
  };
  std::vector<std::string> names;
  names.push_back("(intercept)");
  names.push_back(time_col);
  for (int j = 0; j < data.n_static; ++j) names.push_back(static_name(j));
  for (int j = 0; j < data.n_static; ++j) names.push_back(time_col + ":" + static_name(j));
  for (int j = 0; j < data.n_dynamic; ++j) names.push_back(dynamic_name(j));
  return names;
}

}  // namespace detail

// Full pipeline on an ingested dataset: covariance decomposition, per-region
// weighted least squares, then the global and multiple testing procedures.
inline AnalysisResult run_analysis(const AnalysisConfig& config) {
  config.validate();
  GrowthCurveDataset data = ingest_csv(config.input, config.mapping);

  AnalysisResult result;
  if (config.standardize) detail::standardize_covariates(data, result.standardized_columns);

  EstimationOptions options;
  options.K = config.K;
  result.components = estimate_all(data, options, &result.diagnostics);
  const DesignMatrix design = build_design(data);
  result.fit = gls_fit(data, design, result.components, config.n_threads, &result.diagnostics);
  result.global = global_test(result.fit.statistics, config.alpha_global);
  result.multiple = multiple_test(result.fit.statistics, config.alpha_fdr);
  result.region_names = data.region_names;
  result.coefficient_names = detail::coefficient_names(data, config.mapping.time_col);
  result.n_subjects = data.n_subjects;
  result.n_times = data.n_times;
  return result;
}

namespace detail {

inline nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

// Emits report.json (machine readable), summary.txt (human readable) and
// coefficients.tsv / rejections.tsv under out_dir. Outputs contain no
// timestamps; identical input bytes and configuration give identical files.
inline void write_analysis_outputs(const AnalysisResult& result, const AnalysisConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  const fs::path out(config.out_dir);

  nlohmann::ordered_json report;
  report["input"] = config.input;
  report["n_subjects"] = result.n_subjects;
  report["n_times"] = result.n_times;
  report["n_regions"] = result.region_names.size();
  report["alpha_global"] = config.alpha_global;
  report["alpha_fdr"] = config.alpha_fdr;
  report["standardized_covariates"] = result.standardized_columns;

  report["components"]["kappa"] = result.components.kappa;
  report["components"]["sigma_T"] = detail::matrix_to_json(result.components.sigma_T);
  report["components"]["sigma_zeta"] = detail::matrix_to_json(result.components.sigma_zeta);
  report["components"]["sigma_R"] = detail::matrix_to_json(result.components.sigma_R);

  nlohmann::ordered_json regions = nlohmann::ordered_json::array();
  const int R = result.fit.coefficients.n_regions();
  const int m = static_cast<int>(result.fit.coefficients.per_region.cols());
  const int eta = result.fit.coefficients.eta_size();
  for (int r = 0; r < R; ++r) {
    nlohmann::ordered_json region;
    region["region"] = result.region_names[r];
    nlohmann::ordered_json beta = nlohmann::ordered_json::array();
    nlohmann::ordered_json se = nlohmann::ordered_json::array();
    for (int j = 0; j < m; ++j) {
      beta.push_back(result.fit.coefficients.per_region(r, j));
      se.push_back(std::sqrt(result.fit.precision_diagonals(r, j)));
    }
    region["beta"] = std::move(beta);
    region["se"] = std::move(se);
    nlohmann::ordered_json stats = nlohmann::ordered_json::array();
    for (int j = 0; j < eta; ++j) stats.push_back(result.fit.statistics(r, j));
    region["statistics"] = std::move(stats);
    regions.push_back(std::move(region));
  }
  report["coefficients"] = std::move(regions);

  report["global_test"] = {{"statistic", result.global.statistic},
                           {"threshold", result.global.threshold},
                           {"q_alpha", result.global.q_alpha},
                           {"p_tilde", result.global.p_tilde},
                           {"reject", result.global.reject},
                           {"approx_p_value", result.global.approx_p_value}};

  nlohmann::ordered_json rejections = nlohmann::ordered_json::array();
  for (const auto& [r, j] : result.multiple.rejections) {
    rejections.push_back({{"region", result.region_names[r]},
                          {"coefficient", result.coefficient_names[j]},
                          {"statistic", result.fit.statistics(r, j)}});
  }
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const auto& [tau, fdp] : result.multiple.fdp_curve) curve.push_back({tau, fdp});
  report["multiple_test"] = {{"tau_hat", result.multiple.tau_hat},
                             {"t_cap", result.multiple.t_cap},
                             {"fallback_used", result.multiple.fallback_used},
                             {"n_rejections", result.multiple.rejections.size()},
                             {"rejections", std::move(rejections)},
                             {"fdp_curve", std::move(curve)}};

  report["diagnostics"] = {{"dropped_pairs", result.diagnostics.dropped_pairs},
                           {"psd_repairs", result.diagnostics.psd_repairs},
                           {"floored_variances", result.diagnostics.floored_variances},
                           {"notes", result.diagnostics.notes}};

  {
    std::ofstream file(out / "report.json");
    if (!file) throw IoError("cannot write report.json under '" + config.out_dir + "'");
    file << report.dump(2) << '\n';
  }

  {
    std::ofstream file(out / "coefficients.tsv");
    file << "region\tcoefficient\tbeta\tse\tstatistic\n";
    for (int r = 0; r < R; ++r)
      for (int j = 0; j < m; ++j) {
        file << result.region_names[r] << '\t' << result.coefficient_names[j] << '\t'
             << format_double(result.fit.coefficients.per_region(r, j)) << '\t'
             << format_double(std::sqrt(result.fit.precision_diagonals(r, j))) << '\t'
             << (j < eta ? format_double(result.fit.statistics(r, j)) : std::string("NA")) << '\n';
      }
  }

  {
    std::ofstream file(out / "rejections.tsv");
    file << "region\tcoefficient\tstatistic\ttau_hat\n";
    for (const auto& [r, j] : result.multiple.rejections)
      file << result.region_names[r] << '\t' << result.coefficient_names[j] << '\t'
           << format_double(result.fit.statistics(r, j)) << '\t'
           << format_double(result.multiple.tau_hat) << '\n';
  }

  {
    std::ofstream file(out / "summary.txt");
    file << "growth curve analysis of " << config.input << "\n"
         << "  subjects: " << result.n_subjects << ", times: " << result.n_times
         << ", regions: " << result.region_names.size() << "\n"
         << "  standardized covariates: ";
    if (result.standardized_columns.empty())
      file << "(none)";
    else
      for (std::size_t k = 0; k < result.standardized_columns.size(); ++k)
        file << (k ? ", " : "") << result.standardized_columns[k];
    file << "\n\nglobal test (alpha = " << config.alpha_global << ")\n"
         << "  statistic " << result.global.statistic << " vs threshold "
         << result.global.threshold << " -> "
         << (result.global.reject ? "REJECT the global null" : "fail to reject") << "\n"
         << "  approximate p-value " << result.global.approx_p_value << "\n"
         << "\nmultiple testing (FDR level " << config.alpha_fdr << ")\n"
         << "  tau_hat " << result.multiple.tau_hat
         << (result.multiple.fallback_used ? " (fallback)" : "") << ", rejected "
         << result.multiple.rejections.size() << " of "
         << result.multiple.p_tilde << " hypotheses\n"
         << "\ndiagnostics: " << result.diagnostics.dropped_pairs << " dropped pairs, "
         << result.diagnostics.psd_repairs << " psd repairs, "
         << result.diagnostics.floored_variances << " floored variances\n";
  }
}

}  // namespace gcm

#endif  // GCM_ANALYSIS_HPP
