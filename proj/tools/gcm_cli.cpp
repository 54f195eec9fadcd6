// Command-line front end: `fit` analyses a long-format dataset, `simulate`
// generates synthetic data from the model, and `study` runs Monte-Carlo
// replication studies (table presets or a single custom cell).

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcm/gcm.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

gcm::TemporalKind parse_temporal(const std::string& name) {
  if (name == "ar" || name == "autoregressive") return gcm::TemporalKind::autoregressive;
  if (name == "ma" || name == "moving-average") return gcm::TemporalKind::moving_average;
  throw gcm::ValidationError("unknown temporal structure '" + name + "' (expected ar|ma)");
}

gcm::SpatialKind parse_spatial(const std::string& name) {
  if (name == "hub") return gcm::SpatialKind::hub;
  if (name == "small-world" || name == "small_world" || name == "small")
    return gcm::SpatialKind::small_world;
  throw gcm::ValidationError("unknown spatial structure '" + name + "' (expected hub|small-world)");
}

gcm::ErrorFamily parse_family(const std::string& name) {
  if (name == "gaussian") return gcm::ErrorFamily::gaussian;
  if (name == "sub-gaussian" || name == "sub_gaussian") return gcm::ErrorFamily::sub_gaussian;
  throw gcm::ValidationError("unknown error family '" + name +
                             "' (expected gaussian|sub-gaussian)");
}

std::string cell_description(const gcm::StudyConfig& config) {
  std::ostringstream out;
  out << "kind=" << gcm::to_string(config.kind) << " N=" << config.sim.N << " T=" << config.sim.T
      << " R=" << config.sim.R << " p=" << config.sim.p << " q=" << config.sim.q
      << " temporal=" << gcm::to_string(config.sim.temporal_kind)
      << " spatial=" << gcm::to_string(config.sim.spatial_kind) << " omega=" << config.sim.omega
      << " signal=" << config.sim.signal_value << " xi=" << config.sim.xi_value
      << " family=" << gcm::to_string(config.sim.error_family) << " alpha=" << config.alpha
      << " reps=" << config.n_reps;
  return out.str();
}

struct StudyRow {
  gcm::StudyConfig config;
  gcm::StudyReport report;
  // For table presets the size run and power run of one cell share a row.
  bool has_secondary = false;
  gcm::StudyReport secondary;
};

void write_study_tsv(const std::string& path, const std::string& label, std::uint64_t seed,
                     const std::vector<StudyRow>& rows) {
  std::ofstream file(path);
  if (!file) throw gcm::IoError("cannot write '" + path + "'");
  std::string all_cells;
  for (const auto& row : rows) all_cells += cell_description(row.config) + ";";
  file << "# gcm-inference " << kVersion << "\n"
       << "# study: " << label << "\n"
       << "# seed: " << seed << "\n"
       << "# config-hash: " << fnv1a(all_cells) << "\n";

  const gcm::StudyKind kind = rows.front().config.kind;
  file << "kind\tN\tT\tR\ttemporal\tspatial\tomega\tsignal\treps\tfailed";
  if (kind == gcm::StudyKind::bias)
    file << "\tcov_bias\tcov_se\tcoef_bias\tcoef_se\n";
  else if (kind == gcm::StudyKind::global)
    file << "\tsize\tpower\n";
  else
    file << "\tfdr\tpower\n";

  for (const auto& row : rows) {
    const auto& sim = row.config.sim;
    file << gcm::to_string(row.config.kind) << '\t' << sim.N << '\t' << sim.T << '\t' << sim.R
         << '\t' << gcm::to_string(sim.temporal_kind) << '\t' << gcm::to_string(sim.spatial_kind)
         << '\t' << gcm::format_double(sim.omega) << '\t' << gcm::format_double(sim.signal_value)
         << '\t' << row.config.n_reps << '\t' << row.report.failed_reps;
    if (kind == gcm::StudyKind::bias) {
      file << '\t' << gcm::format_double(row.report.cov_bias_mean) << '\t'
           << gcm::format_double(row.report.cov_bias_sd) << '\t'
           << gcm::format_double(row.report.coef_bias_mean) << '\t'
           << gcm::format_double(row.report.coef_bias_sd);
    } else if (kind == gcm::StudyKind::global) {
      file << '\t' << gcm::format_double(row.report.rejection_rate) << '\t'
           << (row.has_secondary ? gcm::format_double(row.secondary.rejection_rate)
                                 : std::string("NA"));
    } else {
      file << '\t' << gcm::format_double(row.report.empirical_fdr) << '\t'
           << gcm::format_double(row.report.empirical_power);
    }
    file << '\n';
  }
}

int run_fit(const gcm::AnalysisConfig& config) {
  const gcm::AnalysisResult result = gcm::run_analysis(config);
  gcm::write_analysis_outputs(result, config);
  std::cout << "global test: " << (result.global.reject ? "reject" : "fail to reject")
            << " (statistic " << result.global.statistic << ", threshold "
            << result.global.threshold << ")\n"
            << "multiple testing: " << result.multiple.rejections.size() << " of "
            << result.multiple.p_tilde << " hypotheses rejected at tau_hat "
            << result.multiple.tau_hat << (result.multiple.fallback_used ? " (fallback)" : "")
            << "\n"
            << "outputs written to " << config.out_dir << "\n";
  return 0;
}

struct SimulateOptions {
  gcm::SimulationConfig sim;
  std::string out_dir = ".";
};

int run_simulate(const SimulateOptions& options) {
  namespace fs = std::filesystem;
  fs::create_directories(options.out_dir);

  gcm::Rng truth_rng = gcm::Rng::substream(options.sim.seed, 0xffffffffffffffffULL);
  const gcm::GroundTruth truth = gcm::make_truth(options.sim, truth_rng);
  gcm::Rng rng = gcm::Rng::substream(options.sim.seed, 0);
  const gcm::GrowthCurveDataset data = gcm::sample_dataset(options.sim, truth, rng);

  const fs::path out(options.out_dir);
  gcm::write_dataset_csv(data, (out / "dataset.csv").string());

  nlohmann::ordered_json truth_json;
  truth_json["seed"] = options.sim.seed;
  truth_json["kappa"] = truth.components.kappa;
  truth_json["coefficients"] = nlohmann::ordered_json::array();
  for (int r = 0; r < truth.coefficients.n_regions(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int j = 0; j < truth.coefficients.per_region.cols(); ++j)
      row.push_back(truth.coefficients.per_region(r, j));
    truth_json["coefficients"].push_back(std::move(row));
  }
  auto matrix = [](const Eigen::MatrixXd& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (int r = 0; r < m.rows(); ++r) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  truth_json["sigma_T"] = matrix(truth.components.sigma_T);
  truth_json["sigma_R"] = matrix(truth.components.sigma_R);
  truth_json["sigma_zeta"] = matrix(truth.components.sigma_zeta);
  std::ofstream truth_file(out / "truth.json");
  truth_file << truth_json.dump(2) << '\n';

  std::cout << "wrote " << (out / "dataset.csv").string() << " (N=" << options.sim.N
            << ", T=" << options.sim.T << ", R=" << options.sim.R << ")\n";
  return 0;
}

struct StudyOptions {
  std::string preset;
  gcm::StudyConfig config;
  std::string kind = "global";
  std::string temporal = "ar";
  std::string spatial = "hub";
  std::string family = "gaussian";
  std::string out_dir = ".";
  bool reps_given = false;
};

std::vector<StudyRow> run_table_preset(const std::string& preset, const StudyOptions& options) {
  const bool t8 = preset.size() >= 2 && preset.substr(preset.size() - 2) == "T8";
  const int T = t8 ? 8 : 4;
  std::vector<StudyRow> rows;

  auto base_sim = [&](int R, int N, gcm::TemporalKind tk, gcm::SpatialKind sk) {
    gcm::SimulationConfig sim = options.config.sim;
    sim.N = N;
    sim.T = T;
    sim.R = R;
    sim.p = 10;
    sim.q = 2;
    sim.temporal_kind = tk;
    sim.spatial_kind = sk;
    return sim;
  };

  for (int R : {50, 100})
    for (int N : {100, 200})
      for (auto tk : {gcm::TemporalKind::autoregressive, gcm::TemporalKind::moving_average})
        for (auto sk : {gcm::SpatialKind::hub, gcm::SpatialKind::small_world}) {
          if (preset.rfind("table1", 0) == 0) {
            for (double omega : {0.03, 0.05}) {
              StudyRow row;
              row.config = options.config;
              row.config.kind = gcm::StudyKind::bias;
              row.config.sim = base_sim(R, N, tk, sk);
              row.config.sim.omega = omega;
              row.config.sim.signal_value = 0.5;
              row.config.sim.xi_value = 0.5;
              row.report = gcm::run_replication_study(row.config);
              rows.push_back(std::move(row));
            }
          } else if (preset.rfind("table2", 0) == 0) {
            StudyRow row;
            row.config = options.config;
            row.config.kind = gcm::StudyKind::global;
            row.config.sim = base_sim(R, N, tk, sk);
            row.config.sim.omega = 0.0;  // size
            row.config.sim.signal_value = 0.2;
            row.config.sim.xi_value = 0.2;
            row.report = gcm::run_replication_study(row.config);
            gcm::StudyConfig power = row.config;
            power.sim.omega = 0.05;  // power
            row.secondary = gcm::run_replication_study(power);
            row.has_secondary = true;
            rows.push_back(std::move(row));
          } else {  // table3
            for (double omega : {0.03, 0.05}) {
              StudyRow row;
              row.config = options.config;
              row.config.kind = gcm::StudyKind::fdr;
              row.config.sim = base_sim(R, N, tk, sk);
              row.config.sim.omega = omega;
              row.config.sim.signal_value = 0.5;
              row.config.sim.xi_value = 0.5;
              row.config.alpha = 0.1;
              row.report = gcm::run_replication_study(row.config);
              rows.push_back(std::move(row));
            }
          }
        }
  return rows;
}

int run_study(StudyOptions options) {
  namespace fs = std::filesystem;
  fs::create_directories(options.out_dir);

  std::vector<StudyRow> rows;
  std::string label;
  if (!options.preset.empty()) {
    static const std::vector<std::string> known = {"table1-T4", "table1-T8", "table2-T4",
                                                   "table2-T8", "table3-T4", "table3-T8",
                                                   "smoke"};
    if (std::find(known.begin(), known.end(), options.preset) == known.end()) {
      std::string list;
      for (const auto& name : known) list += (list.empty() ? "" : ", ") + name;
      throw gcm::ValidationError("unknown preset '" + options.preset + "'; valid presets: " +
                                 list);
    }
    label = options.preset;
    if (options.preset == "smoke") {
      StudyRow row;
      row.config = options.config;
      row.config.kind = gcm::StudyKind::global;
      row.config.sim.N = 100;
      row.config.sim.T = 4;
      row.config.sim.R = 50;
      row.config.sim.p = 10;
      row.config.sim.q = 2;
      if (!options.reps_given) row.config.n_reps = 1;
      row.report = gcm::run_replication_study(row.config);
      rows.push_back(std::move(row));
    } else {
      rows = run_table_preset(options.preset, options);
    }
  } else {
    label = "custom";
    StudyRow row;
    row.config = options.config;
    if (options.kind == "bias") row.config.kind = gcm::StudyKind::bias;
    else if (options.kind == "global") row.config.kind = gcm::StudyKind::global;
    else if (options.kind == "fdr") row.config.kind = gcm::StudyKind::fdr;
    else throw gcm::ValidationError("unknown study kind '" + options.kind + "'");
    row.config.sim.temporal_kind = parse_temporal(options.temporal);
    row.config.sim.spatial_kind = parse_spatial(options.spatial);
    row.config.sim.error_family = parse_family(options.family);
    row.report = gcm::run_replication_study(row.config);
    rows.push_back(std::move(row));
  }

  const std::string path =
      (fs::path(options.out_dir) / ("study_" + label + ".tsv")).string();
  write_study_tsv(path, label, options.config.sim.seed, rows);
  for (const auto& row : rows) {
    std::cout << cell_description(row.config) << " -> ";
    switch (row.config.kind) {
      case gcm::StudyKind::bias:
        std::cout << "coef bias " << row.report.coef_bias_mean << " (sd "
                  << row.report.coef_bias_sd << "), cov bias " << row.report.cov_bias_mean
                  << " (sd " << row.report.cov_bias_sd << ")";
        break;
      case gcm::StudyKind::global:
        std::cout << "rejection rate " << row.report.rejection_rate;
        if (row.has_secondary) std::cout << ", power " << row.secondary.rejection_rate;
        break;
      case gcm::StudyKind::fdr:
        std::cout << "fdr " << row.report.empirical_fdr << ", power "
                  << row.report.empirical_power;
        break;
    }
    std::cout << '\n';
  }
  std::cout << "wrote " << path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"estimation and inference for the multi-response growth curve model"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // fit
  gcm::AnalysisConfig fit_config;
  std::string fit_config_path, fit_statics, fit_dynamics, fit_responses;
  bool no_standardize = false;
  auto* fit = app.add_subcommand("fit", "analyse a long-format dataset");
  fit->add_option("--input", fit_config.input, "input CSV path");
  fit->add_option("--config", fit_config_path, "key = value configuration file");
  fit->add_option("--id-col", fit_config.mapping.id_col, "subject id column");
  fit->add_option("--time-col", fit_config.mapping.time_col, "time column");
  fit->add_option("--static-cols", fit_statics, "comma-separated time-invariant covariates");
  fit->add_option("--dynamic-cols", fit_dynamics, "comma-separated time-variant covariates");
  fit->add_option("--response-cols", fit_responses,
                  "comma-separated responses (default: all remaining columns)");
  fit->add_option("--alpha-global", fit_config.alpha_global, "global test level");
  fit->add_option("--alpha-fdr", fit_config.alpha_fdr, "FDR level");
  fit->add_option("--K", fit_config.K, "region pairs pooled for the temporal estimate (0 = R)");
  fit->add_option("--seed", fit_config.seed, "reserved");
  fit->add_option("--threads", fit_config.n_threads, "worker threads (0 = hardware)");
  fit->add_option("--out", fit_config.out_dir, "output directory");
  fit->add_flag("--no-standardize", no_standardize,
                "keep continuous covariates on their original scale");

  // simulate
  SimulateOptions sim_options;
  std::string sim_temporal = "ar", sim_spatial = "hub", sim_family = "gaussian";
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  simulate->add_option("--N", sim_options.sim.N, "subjects");
  simulate->add_option("--T", sim_options.sim.T, "time points");
  simulate->add_option("--R", sim_options.sim.R, "responses");
  simulate->add_option("--p", sim_options.sim.p, "time-invariant covariates");
  simulate->add_option("--q", sim_options.sim.q, "time-variant covariates");
  simulate->add_option("--temporal", sim_temporal, "ar|ma");
  simulate->add_option("--spatial", sim_spatial, "hub|small-world");
  simulate->add_option("--omega", sim_options.sim.omega, "fraction of nonzero mean coefficients");
  simulate->add_option("--signal", sim_options.sim.signal_value, "nonzero coefficient value");
  simulate->add_option("--xi-sparsity", sim_options.sim.xi_sparsity,
                       "fraction of nonzero time-variant coefficients");
  simulate->add_option("--xi-value", sim_options.sim.xi_value, "nonzero time-variant value");
  simulate->add_option("--family", sim_family, "gaussian|sub-gaussian");
  simulate->add_option("--seed", sim_options.sim.seed, "root seed");
  simulate->add_option("--out", sim_options.out_dir, "output directory");

  // study
  StudyOptions study_options;
  auto* study = app.add_subcommand("study", "run Monte-Carlo replication studies");
  study->add_option("--preset", study_options.preset,
                    "table1-T4|table1-T8|table2-T4|table2-T8|table3-T4|table3-T8|smoke");
  study->add_option("--kind", study_options.kind, "bias|global|fdr (custom cell)");
  study->add_option("--N", study_options.config.sim.N, "subjects");
  study->add_option("--T", study_options.config.sim.T, "time points");
  study->add_option("--R", study_options.config.sim.R, "responses");
  study->add_option("--p", study_options.config.sim.p, "time-invariant covariates");
  study->add_option("--q", study_options.config.sim.q, "time-variant covariates");
  study->add_option("--temporal", study_options.temporal, "ar|ma");
  study->add_option("--spatial", study_options.spatial, "hub|small-world");
  study->add_option("--omega", study_options.config.sim.omega, "fraction of nonzero coefficients");
  study->add_option("--signal", study_options.config.sim.signal_value, "nonzero value");
  study->add_option("--xi-value", study_options.config.sim.xi_value, "nonzero time-variant value");
  study->add_option("--family", study_options.family, "gaussian|sub-gaussian");
  auto* reps_opt = study->add_option("--reps", study_options.config.n_reps, "replications");
  study->add_option("--alpha", study_options.config.alpha, "test / FDR level");
  study->add_option("--seed", study_options.config.sim.seed, "root seed");
  study->add_option("--threads", study_options.config.n_threads, "worker threads (0 = hardware)");
  study->add_option("--out", study_options.out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) {
      if (!fit_config_path.empty()) gcm::apply_config_file(fit_config, fit_config_path);
      auto split = [](const std::string& s) {
        return s.empty() ? std::vector<std::string>{} : gcm::detail::split_list(s);
      };
      if (!fit_statics.empty()) fit_config.mapping.static_cols = split(fit_statics);
      if (!fit_dynamics.empty()) fit_config.mapping.dynamic_cols = split(fit_dynamics);
      if (!fit_responses.empty()) fit_config.mapping.response_cols = split(fit_responses);
      if (no_standardize) fit_config.standardize = false;
      return run_fit(fit_config);
    }
    if (simulate->parsed()) {
      sim_options.sim.temporal_kind = parse_temporal(sim_temporal);
      sim_options.sim.spatial_kind = parse_spatial(sim_spatial);
      sim_options.sim.error_family = parse_family(sim_family);
      return run_simulate(sim_options);
    }
    if (study->parsed()) {
      study_options.reps_given = reps_opt->count() > 0;
      return run_study(std::move(study_options));
    }
  } catch (const gcm::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
