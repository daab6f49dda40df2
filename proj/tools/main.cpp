// Batch front-end: `simulate` runs a Monte Carlo study from a key=value
// config, `fit` runs the three-stage estimator on one dataset, `sensitivity`
// sweeps measurement-error variances on a real-data-shaped file, and `mimic`
// emits the bundled synthetic dataset.
#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ltrcsimex/harness.hpp"
#include "ltrcsimex/io.hpp"
#include "ltrcsimex/rng.hpp"
#include "ltrcsimex/simex.hpp"

namespace {

using namespace ltrcsimex;

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for '" + key + "': " + s);
  }
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for '" + key + "': " + s);
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream iss(s);
  while (std::getline(iss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

struct SimulateFiles {
  std::string csv_path;    // empty -> stdout only
  std::string table_path;  // empty -> stdout only
};

ScenarioConfig load_scenario_config(const std::string& path, SimulateFiles& files) {
  auto kv = read_key_value_file(path);
  ScenarioConfig cfg;
  auto take = [&](const char* key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) return {};
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  if (auto v = take("model"); !v.empty()) cfg.model = static_cast<int>(parse_u64(v, "model"));
  if (auto v = take("n"); !v.empty()) cfg.n = parse_u64(v, "n");
  if (auto v = take("p_x"); !v.empty()) cfg.p_x = parse_u64(v, "p_x");
  if (auto v = take("p_z"); !v.empty()) cfg.p_z = parse_u64(v, "p_z");
  if (auto v = take("sigma_eps"); !v.empty()) cfg.sigma_eps_diag = parse_double(v, "sigma_eps");
  if (auto v = take("censoring"); !v.empty()) cfg.target_censoring = parse_double(v, "censoring");
  if (auto v = take("replications"); !v.empty()) cfg.replications = parse_u64(v, "replications");
  if (auto v = take("B"); !v.empty()) cfg.simex.replicates = static_cast<int>(parse_u64(v, "B"));
  if (auto v = take("seed"); !v.empty()) cfg.seed = parse_u64(v, "seed");
  if (auto v = take("workers"); !v.empty()) cfg.workers = static_cast<int>(parse_u64(v, "workers"));
  if (auto v = take("truncation_mean"); !v.empty())
    cfg.truncation_mean = parse_double(v, "truncation_mean");
  if (auto v = take("penalties"); !v.empty()) {
    cfg.penalties.clear();
    for (const auto& name : split_list(v))
      cfg.penalties.push_back(penalty_family_from_string(name));
  }
  if (auto v = take("zetas"); !v.empty()) {
    cfg.simex.zetas.clear();
    for (const auto& z : split_list(v))
      cfg.simex.zetas.push_back(parse_double(z, "zetas"));
  }
  files.csv_path = take("out_csv");
  files.table_path = take("out_table");
  if (!kv.empty()) throw ConfigError("config: unknown key '" + kv.begin()->first + "'");
  cfg.validate();
  return cfg;
}

int run_simulate(const std::string& config_path, std::int64_t seed_override,
                 int workers_override) {
  SimulateFiles files;
  ScenarioConfig cfg = load_scenario_config(config_path, files);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (workers_override > 0) cfg.workers = workers_override;
  StudyResult result = run_study(cfg);
  std::string csv = result.to_csv();
  std::string table = result.to_table();
  if (!files.csv_path.empty()) atomic_write_file(files.csv_path, csv);
  if (!files.table_path.empty()) atomic_write_file(files.table_path, table);
  std::cout << table;
  if (files.csv_path.empty()) std::cout << "\n" << csv;
  return 0;
}

int nonzero_count(const Coefficients& c) {
  int k = 0;
  for (double v : c.concat())
    if (v != 0.0) ++k;
  return k;
}

int run_fit(const std::string& data_path, const std::string& schema_path,
            const std::string& sigma_path, const std::string& penalty_name,
            const std::string& out_path, int replicates, std::uint64_t seed,
            int workers) {
  RealDataSchema schema = read_schema_file(schema_path);
  IngestResult ing = ingest(data_path, schema);
  if (ing.dropped_rows > 0)
    std::cerr << "fit: dropped " << ing.dropped_rows
              << " row(s) violating a <= y\n";
  Eigen::MatrixXd sigma_eps = read_matrix_csv(sigma_path);
  if (sigma_eps.rows() != static_cast<Eigen::Index>(ing.data.p_x) ||
      sigma_eps.cols() != static_cast<Eigen::Index>(ing.data.p_x))
    throw InvalidInputError("fit: sigma-eps must be p_x x p_x");

  PenaltySpec spec;
  spec.family = penalty_family_from_string(penalty_name);
  SimexGrid grid;
  grid.replicates = replicates;
  grid.seed = seed;
  ProfileFitOptions options;
  std::cerr << "fit: n=" << ing.data.n() << " p_x=" << ing.data.p_x
            << " p_z=" << ing.data.p_z << " penalty=" << to_string(spec.family)
            << " B=" << grid.replicates << "\n";
  FitResult fr = simex_fit(ing.data, sigma_eps, spec, grid, options, {}, {}, workers);

  // Report the coefficients on the raw covariate scale alongside the
  // standardized-scale estimates.
  nlohmann::json j = nlohmann::json::parse(fr.to_json());
  Coefficients raw = ing.transform.back_map(fr.beta_hat);
  j["beta_hat_raw_scale"] = {{"beta_x", raw.beta_x}, {"beta_z", raw.beta_z}};
  atomic_write_file(out_path, j.dump(2) + "\n");
  std::cerr << "fit: wrote " << out_path << "\n";
  return 0;
}

Eigen::MatrixXd sample_cov_w(const Dataset& data) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index p = static_cast<Eigen::Index>(data.p_x);
  Eigen::MatrixXd w(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      w(i, j) = data.subjects[static_cast<std::size_t>(i)].w[static_cast<std::size_t>(j)];
  Eigen::RowVectorXd mean = w.colwise().mean();
  Eigen::MatrixXd centered = w.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(n - 1);
}

std::string format_sigma(double v) {
  std::ostringstream oss;
  oss << v;
  return oss.str();
}

int run_sensitivity(const std::string& data_path, const std::string& schema_path,
                    const std::string& sigma_list, const std::string& out_dir,
                    const std::string& penalty_list, int replicates,
                    std::uint64_t seed, int workers, bool zero_sample_cov) {
  RealDataSchema schema = read_schema_file(schema_path);
  IngestResult ing = ingest(data_path, schema);
  if (ing.dropped_rows > 0)
    std::cerr << "sensitivity: dropped " << ing.dropped_rows
              << " row(s) violating a <= y\n";
  std::vector<double> sigma_es;
  for (const auto& s : split_list(sigma_list))
    sigma_es.push_back(parse_double(s, "--sigma-e"));
  if (sigma_es.empty()) throw InvalidInputError("sensitivity: empty --sigma-e list");
  std::vector<PenaltyFamily> families;
  for (const auto& name : split_list(penalty_list))
    families.push_back(penalty_family_from_string(name));
  if (families.empty()) throw InvalidInputError("sensitivity: empty --penalties list");

  std::filesystem::create_directories(out_dir);
  const Eigen::Index p = static_cast<Eigen::Index>(ing.data.p_x);
  Eigen::MatrixXd base = zero_sample_cov
                             ? Eigen::MatrixXd::Zero(p, p).eval()
                             : sample_cov_w(ing.data);
  ProfileFitOptions options;

  // Naive fits are independent of sigma_e; run once per family.
  std::vector<Coefficients> naive(families.size());
  for (std::size_t f = 0; f < families.size(); ++f) {
    PenaltySpec spec;
    spec.family = families[f];
    std::cerr << "sensitivity: naive " << to_string(families[f]) << "\n";
    naive[f] = naive_fit(ing.data, spec, options);
  }

  // proposed[s][f]
  std::vector<std::vector<FitResult>> proposed(sigma_es.size());
  for (std::size_t s = 0; s < sigma_es.size(); ++s) {
    Eigen::MatrixXd sigma_eps =
        base + sigma_es[s] * Eigen::MatrixXd::Identity(p, p);
    for (std::size_t f = 0; f < families.size(); ++f) {
      PenaltySpec spec;
      spec.family = families[f];
      SimexGrid grid;
      grid.replicates = replicates;
      grid.seed = mix_key(seed, s, f);
      std::cerr << "sensitivity: sigma_e=" << sigma_es[s] << " "
                << to_string(families[f]) << " B=" << replicates << "\n";
      FitResult fr =
          simex_fit(ing.data, sigma_eps, spec, grid, options, {}, {}, workers);
      std::string json_name = "fit_sigma" + format_sigma(sigma_es[s]) + "_" +
                              to_string(families[f]) + ".json";
      atomic_write_file((std::filesystem::path(out_dir) / json_name).string(),
                        fr.to_json() + "\n");
      proposed[s].push_back(std::move(fr));
    }
  }

  // Covariate rows, (sigma_e x penalty) proposed columns, naive columns, #S footer.
  std::vector<std::string> row_names;
  for (const auto& c : schema.w_columns) row_names.push_back(c);
  for (const auto& c : schema.z_columns) row_names.push_back(c);
  std::ostringstream table;
  table << std::left << std::setw(12) << "covariate";
  for (std::size_t s = 0; s < sigma_es.size(); ++s)
    for (std::size_t f = 0; f < families.size(); ++f)
      table << std::right << std::setw(14)
            << (to_string(families[f]) + "@" + format_sigma(sigma_es[s]));
  for (std::size_t f = 0; f < families.size(); ++f)
    table << std::right << std::setw(14) << ("naive-" + to_string(families[f]));
  table << "\n";
  table << std::fixed << std::setprecision(4);
  const std::size_t p_total = ing.data.p_x + ing.data.p_z;
  for (std::size_t r = 0; r < p_total; ++r) {
    table << std::left << std::setw(12) << row_names[r];
    for (std::size_t s = 0; s < sigma_es.size(); ++s)
      for (std::size_t f = 0; f < families.size(); ++f) {
        double v = proposed[s][f].beta_hat.concat()[r];
        if (v == 0.0)
          table << std::right << std::setw(14) << "-";
        else
          table << std::right << std::setw(14) << v;
      }
    for (std::size_t f = 0; f < families.size(); ++f) {
      double v = naive[f].concat()[r];
      if (v == 0.0)
        table << std::right << std::setw(14) << "-";
      else
        table << std::right << std::setw(14) << v;
    }
    table << "\n";
  }
  table << std::left << std::setw(12) << "#S";
  for (std::size_t s = 0; s < sigma_es.size(); ++s)
    for (std::size_t f = 0; f < families.size(); ++f)
      table << std::right << std::setw(14)
            << (proposed[s][f].selected_x.size() + proposed[s][f].selected_z.size());
  for (std::size_t f = 0; f < families.size(); ++f)
    table << std::right << std::setw(14) << nonzero_count(naive[f]);
  table << "\n";
  atomic_write_file(
      (std::filesystem::path(out_dir) / "sensitivity_table.txt").string(),
      table.str());
  std::cout << table.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variable selection and estimation for additive hazards under "
               "left truncation, right censoring, and covariate measurement "
               "error"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo study from a config file");
  std::string sim_config;
  std::int64_t sim_seed = -1;
  int sim_workers = 0;
  sim->add_option("--config", sim_config, "key=value config file")->required();
  sim->add_option("--seed", sim_seed, "master seed override");
  sim->add_option("--workers", sim_workers, "worker thread override");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit one dataset with measurement-error correction");
  std::string fit_data, fit_schema, fit_sigma, fit_penalty, fit_out;
  int fit_B = 50;
  std::uint64_t fit_seed = 0;
  int fit_workers = 1;
  fit->add_option("--data", fit_data, "dataset CSV")->required();
  fit->add_option("--schema", fit_schema, "column-mapping schema file")->required();
  fit->add_option("--sigma-eps", fit_sigma, "measurement-error covariance CSV")->required();
  fit->add_option("--penalty", fit_penalty, "LASSO | ALASSO | SCAD")->required();
  fit->add_option("--out", fit_out, "output JSON path")->required();
  fit->add_option("--replicates", fit_B, "noise replicates B");
  fit->add_option("--seed", fit_seed, "RNG seed");
  fit->add_option("--workers", fit_workers, "worker threads");

  // sensitivity
  auto* sens = app.add_subcommand("sensitivity", "Sweep measurement-error variances");
  std::string sens_data, sens_schema, sens_sigma_list, sens_out;
  std::string sens_penalties = "LASSO,ALASSO,SCAD";
  int sens_B = 50;
  std::uint64_t sens_seed = 0;
  int sens_workers = 1;
  bool sens_zero_cov = false;
  sens->add_option("--data", sens_data, "dataset CSV")->required();
  sens->add_option("--schema", sens_schema, "column-mapping schema file")->required();
  sens->add_option("--sigma-e", sens_sigma_list, "comma list of error variances")->required();
  sens->add_option("--out", sens_out, "output directory")->required();
  sens->add_option("--penalties", sens_penalties, "comma list of penalty families");
  sens->add_option("--replicates", sens_B, "noise replicates B");
  sens->add_option("--seed", sens_seed, "RNG seed");
  sens->add_option("--workers", sens_workers, "worker threads");
  sens->add_flag("--no-sample-cov", sens_zero_cov,
                 "use sigma_e * I alone, without the sample covariance of w");

  // mimic
  auto* mim = app.add_subcommand("mimic", "Write the bundled synthetic dataset");
  std::string mim_out, mim_schema_out;
  std::uint64_t mim_seed = 20240501;
  mim->add_option("--out", mim_out, "dataset CSV path")->required();
  mim->add_option("--schema-out", mim_schema_out, "also write the matching schema file");
  mim->add_option("--seed", mim_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return run_simulate(sim_config, sim_seed, sim_workers);
    if (fit->parsed())
      return run_fit(fit_data, fit_schema, fit_sigma, fit_penalty, fit_out,
                     fit_B, fit_seed, fit_workers);
    if (sens->parsed())
      return run_sensitivity(sens_data, sens_schema, sens_sigma_list, sens_out,
                             sens_penalties, sens_B, sens_seed, sens_workers,
                             sens_zero_cov);
    if (mim->parsed()) {
      write_mimic_csv(mim_out, mim_seed);
      if (!mim_schema_out.empty()) {
        std::ostringstream s;
        RealDataSchema sc = mimic_schema();
        s << "time=" << sc.time_column << "\n";
        s << "trunc=" << sc.trunc_column << "\n";
        s << "status=" << sc.status_column << "\n";
        s << "w=";
        for (std::size_t i = 0; i < sc.w_columns.size(); ++i)
          s << (i ? "," : "") << sc.w_columns[i];
        s << "\nz=";
        for (std::size_t i = 0; i < sc.z_columns.size(); ++i)
          s << (i ? "," : "") << sc.z_columns[i];
        s << "\nstandardize_z=";
        for (std::size_t i = 0; i < sc.standardize_z.size(); ++i)
          s << (i ? "," : "") << sc.standardize_z[i];
        s << "\n";
        atomic_write_file(mim_schema_out, s.str());
      }
      return 0;
    }
  } catch (const EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
