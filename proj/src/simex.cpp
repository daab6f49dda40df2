#include "ltrcsimex/simex.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ltrcsimex/estimators.hpp"
#include "ltrcsimex/rng.hpp"

namespace ltrcsimex {

namespace {

// Static task partition: deterministic results regardless of worker count.
void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int k = std::min<int>(workers, static_cast<int>(count));
  pool.reserve(static_cast<std::size_t>(k));
  for (int t = 0; t < k; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

std::vector<double> quantile_grid(std::vector<double> v, std::size_t k) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  out.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t idx = v.size() == 1 ? 0 : j * (v.size() - 1) / (k - 1);
    out.push_back(v[idx]);
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Mean over replicates in fixed ascending order; identical inputs are
// returned bit-exactly.
double ordered_mean(const std::vector<double>& v) {
  bool all_equal = true;
  for (double x : v)
    if (x != v.front()) { all_equal = false; break; }
  if (all_equal) return v.front();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols())
    throw InvalidInputError("psd_factor: matrix must be square");
  if ((sigma - sigma.transpose()).lpNorm<Eigen::Infinity>() > 1e-10)
    throw InvalidInputError("psd_factor: matrix must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  Eigen::VectorXd ev = es.eigenvalues();
  double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-10 * scale)
      throw InvalidInputError("psd_factor: matrix is not positive semidefinite");
    if (ev[i] < 0.0) ev[i] = 0.0;
  }
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

Eigen::MatrixXd generate_pseudo_covariates(const Eigen::MatrixXd& w,
                                           const Eigen::MatrixXd& sigma_eps,
                                           double zeta, std::uint64_t seed_key) {
  if (!(zeta >= 0.0)) throw InvalidInputError("generate_pseudo_covariates: zeta < 0");
  if (sigma_eps.rows() != w.cols())
    throw InvalidInputError("generate_pseudo_covariates: covariance dimension mismatch");
  if (zeta == 0.0 || sigma_eps.isZero(0.0)) return w;

  Eigen::MatrixXd L = psd_factor(sigma_eps);
  const double root = std::sqrt(zeta);
  Eigen::MatrixXd out = w;
  const Eigen::Index p = w.cols();
  Eigen::VectorXd g(p);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    auto eng = make_engine(mix_key(seed_key, static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index j = 0; j < p; ++j) g[j] = nd(eng);
    out.row(i) += root * (L * g).transpose();
  }
  return out;
}

double extrapolate(const std::vector<double>& zetas,
                   const std::vector<double>& values, double target) {
  if (zetas.size() != values.size())
    throw InvalidInputError("extrapolate: length mismatch");
  std::vector<double> distinct(zetas);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3)
    throw InvalidInputError("extrapolate: need at least 3 distinct zeta values");

  bool constant = true;
  for (double v : values)
    if (v != values.front()) { constant = false; break; }
  if (constant) return values.front();

  Eigen::MatrixXd X(zetas.size(), 3);
  Eigen::VectorXd y(zetas.size());
  for (std::size_t i = 0; i < zetas.size(); ++i) {
    X(static_cast<Eigen::Index>(i), 0) = 1.0;
    X(static_cast<Eigen::Index>(i), 1) = zetas[i];
    X(static_cast<Eigen::Index>(i), 2) = zetas[i] * zetas[i];
    y[static_cast<Eigen::Index>(i)] = values[i];
  }
  Eigen::Vector3d gamma = X.colPivHouseholderQr().solve(y);
  return gamma[0] + gamma[1] * target + gamma[2] * target * target;
}

std::vector<double> isotonic_nondecreasing(std::vector<double> v) {
  // Pool-adjacent-violators with unit weights.
  std::vector<double> level;
  std::vector<std::size_t> count;
  for (double x : v) {
    level.push_back(x);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      double merged = (level[level.size() - 2] * count[count.size() - 2] +
                       level.back() * count.back()) /
                      static_cast<double>(count[count.size() - 2] + count.back());
      count[count.size() - 2] += count.back();
      level[level.size() - 2] = merged;
      level.pop_back();
      count.pop_back();
    }
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t k = 0; k < level.size(); ++k)
    out.insert(out.end(), count[k], level[k]);
  return out;
}

Coefficients naive_fit(const Dataset& data, const PenaltySpec& penalty,
                       const ProfileFitOptions& options) {
  data.validate();
  Eigen::MatrixXd V = covariate_matrix(data);
  TuningResult res =
      select_tuning(data, V, penalty, default_tuning_grid(data, V), options);
  std::vector<double> b(res.fit.beta.data(), res.fit.beta.data() + res.fit.beta.size());
  return Coefficients::split(b, data.p_x);
}

FitResult simex_fit(const Dataset& data, const Eigen::MatrixXd& sigma_eps,
                    const PenaltySpec& penalty, const SimexGrid& grid,
                    const ProfileFitOptions& options,
                    std::vector<double> eval_times, std::vector<double> eval_ages,
                    int workers) {
  data.validate();
  grid.validate();
  if (sigma_eps.rows() != static_cast<Eigen::Index>(data.p_x))
    throw InvalidInputError("simex_fit: sigma_eps must be p_x x p_x");
  psd_factor(sigma_eps);  // dimension/PSD check up front

  const std::size_t n = data.n();
  const std::size_t p = data.p();
  const std::size_t M = grid.zetas.size();
  const std::size_t B = static_cast<std::size_t>(grid.replicates);

  Eigen::MatrixXd W(n, data.p_x);
  Eigen::MatrixXd Z(n, data.p_z);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < data.p_x; ++j) W(i, j) = data.subjects[i].w[j];
    for (std::size_t j = 0; j < data.p_z; ++j) Z(i, j) = data.subjects[i].z[j];
  }

  if (eval_times.empty()) {
    std::vector<double> ys;
    for (const auto& s : data.subjects) ys.push_back(s.y);
    eval_times = quantile_grid(std::move(ys), 50);
  }
  if (eval_ages.empty()) {
    std::vector<double> as;
    for (const auto& s : data.subjects) as.push_back(s.a);
    eval_ages = quantile_grid(std::move(as), 50);
  }

  // At zeta = 0 the pseudo-covariates equal W for every b, so one fit stands
  // in for all B replicates.
  struct Task {
    std::size_t zi;
    std::size_t b;
  };
  std::vector<Task> tasks;
  tasks.push_back({0, 0});
  // With a zero error covariance every pseudo-covariate draw equals W, so a
  // single fit stands in for the whole (b, zeta) grid.
  const bool no_noise = sigma_eps.isZero(0.0);
  if (!no_noise)
    for (std::size_t zi = 1; zi < M; ++zi)
      for (std::size_t b = 0; b < B; ++b) tasks.push_back({zi, b});

  auto task_covariates = [&](const Task& t) {
    Eigen::MatrixXd V(n, p);
    V.leftCols(data.p_x) = generate_pseudo_covariates(
        W, sigma_eps, grid.zetas[t.zi],
        mix_key(grid.seed, t.b, t.zi));
    V.rightCols(data.p_z) = Z;
    return V;
  };

  std::vector<Eigen::VectorXd> task_beta(tasks.size());
  std::vector<int> task_status(tasks.size(), 0);  // 1 ok, -1 failed
  std::vector<int> task_converged(tasks.size(), 0);
  std::vector<std::string> task_error(tasks.size());

  parallel_for(tasks.size(), workers, [&](std::size_t k) {
    try {
      Eigen::MatrixXd V = task_covariates(tasks[k]);
      TuningResult res =
          select_tuning(data, V, penalty, default_tuning_grid(data, V), options);
      task_beta[k] = res.fit.beta;
      task_converged[k] = res.fit.converged ? 1 : 0;
      task_status[k] = 1;
    } catch (const std::exception& e) {
      task_status[k] = -1;
      task_error[k] = e.what();
    }
  });

  // Conceptual replicate count: the zeta = 0 fit stands for B replicates,
  // and under a zero error covariance for the entire grid.
  auto task_multiplicity = [&](std::size_t k) {
    if (no_noise) return B * M;
    return tasks[k].zi == 0 ? B : std::size_t{1};
  };
  // Multiplicity within one zeta level of the averaging loops below.
  auto level_multiplicity = [&](std::size_t k) {
    return (no_noise || tasks[k].zi == 0) ? B : std::size_t{1};
  };
  auto task_covers = [&](std::size_t k, std::size_t zi) {
    return no_noise || tasks[k].zi == zi;
  };
  std::size_t total = 0, failed = 0, converged = 0;
  std::string first_error;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    std::size_t mult = task_multiplicity(k);
    total += mult;
    if (task_status[k] < 0) {
      failed += mult;
      if (first_error.empty()) {
        std::ostringstream os;
        os << "(b=" << tasks[k].b + 1 << ", zeta=" << grid.zetas[tasks[k].zi]
           << "): " << task_error[k];
        first_error = os.str();
      }
    } else if (task_converged[k]) {
      converged += mult;
    }
  }
  if (failed * 5 > total) {
    std::ostringstream os;
    os << "simex_fit: " << failed << "/" << total
       << " replicate fits failed; first failure " << first_error;
    throw EstimationError(os.str());
  }

  FitResult out;
  out.zetas = grid.zetas;
  out.converged_fraction =
      static_cast<double>(converged) / static_cast<double>(total - failed);

  // Average over b per zeta, in ascending b order.
  out.beta_by_zeta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(M),
                                           static_cast<Eigen::Index>(p));
  std::vector<std::size_t> sel_count(p, 0);
  std::size_t ok_total = 0;
  for (std::size_t zi = 0; zi < M; ++zi) {
    std::vector<std::vector<double>> per_b(p);
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      if (!task_covers(k, zi) || task_status[k] != 1) continue;
      std::size_t mult = level_multiplicity(k);
      ok_total += mult;
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t rep = 0; rep < mult; ++rep)
          per_b[r].push_back(task_beta[k][static_cast<Eigen::Index>(r)]);
        if (task_beta[k][static_cast<Eigen::Index>(r)] != 0.0)
          sel_count[r] += mult;
      }
    }
    if (per_b[0].empty())
      throw EstimationError("simex_fit: every replicate failed at zeta=" +
                            std::to_string(grid.zetas[zi]));
    for (std::size_t r = 0; r < p; ++r)
      out.beta_by_zeta(static_cast<Eigen::Index>(zi),
                       static_cast<Eigen::Index>(r)) = ordered_mean(per_b[r]);
  }

  // Extrapolate each coordinate, then apply the majority-vote sparsity rule:
  // a coordinate selected in fewer than half of the (b, zeta) fits is set to
  // an exact zero.
  std::vector<double> beta_full(p, 0.0);
  for (std::size_t r = 0; r < p; ++r) {
    std::vector<double> series(M);
    for (std::size_t zi = 0; zi < M; ++zi)
      series[zi] = out.beta_by_zeta(static_cast<Eigen::Index>(zi),
                                    static_cast<Eigen::Index>(r));
    double val = extrapolate(out.zetas, series, -1.0);
    if (2 * sel_count[r] < ok_total) val = 0.0;
    beta_full[r] = val;
  }
  out.beta_hat = Coefficients::split(beta_full, data.p_x);
  for (std::size_t r = 0; r < data.p_x; ++r)
    if (out.beta_hat.beta_x[r] != 0.0) out.selected_x.push_back(r);
  for (std::size_t r = 0; r < data.p_z; ++r)
    if (out.beta_hat.beta_z[r] != 0.0) out.selected_z.push_back(r);

  // Post-selection curves: Breslow baseline and NPMLE of H at the selected
  // columns with the extrapolated coefficients, per (b, zeta), averaged over
  // b and extrapolated pointwise.
  const std::size_t psel = out.selected_x.size() + out.selected_z.size();
  Eigen::VectorXd beta_sel(static_cast<Eigen::Index>(psel));
  {
    Eigen::Index c = 0;
    for (std::size_t r : out.selected_x) beta_sel[c++] = out.beta_hat.beta_x[r];
    for (std::size_t r : out.selected_z) beta_sel[c++] = out.beta_hat.beta_z[r];
  }

  const std::size_t nt = eval_times.size();
  const std::size_t na = eval_ages.size();
  std::vector<std::vector<double>> task_lam(tasks.size()), task_h(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t k) {
    if (task_status[k] != 1) return;
    try {
      Eigen::MatrixXd V = task_covariates(tasks[k]);
      Eigen::MatrixXd Vsel(n, psel);
      Eigen::Index c = 0;
      for (std::size_t r : out.selected_x)
        Vsel.col(c++) = V.col(static_cast<Eigen::Index>(r));
      for (std::size_t r : out.selected_z)
        Vsel.col(c++) = V.col(static_cast<Eigen::Index>(data.p_x + r));
      StepFunction lam = breslow_baseline(data, beta_sel, Vsel);
      StepFunction H = npmle_truncation(data, beta_sel, Vsel, lam);
      task_lam[k].resize(nt);
      for (std::size_t t = 0; t < nt; ++t) task_lam[k][t] = lam(eval_times[t]);
      task_h[k].resize(na);
      for (std::size_t t = 0; t < na; ++t) task_h[k][t] = H(eval_ages[t]);
    } catch (const std::exception&) {
      task_status[k] = -2;  // curve-stage failure, excluded from averaging
    }
  });

  auto extrapolate_curve = [&](const std::vector<std::vector<double>>& per_task,
                               std::size_t npts) {
    std::vector<double> result(npts);
    for (std::size_t t = 0; t < npts; ++t) {
      std::vector<double> by_zeta(M);
      for (std::size_t zi = 0; zi < M; ++zi) {
        std::vector<double> vals;
        for (std::size_t k = 0; k < tasks.size(); ++k) {
          if (!task_covers(k, zi) || task_status[k] != 1) continue;
          vals.insert(vals.end(), level_multiplicity(k), per_task[k][t]);
        }
        if (vals.empty())
          throw EstimationError("simex_fit: curve estimation failed at zeta=" +
                                std::to_string(grid.zetas[zi]));
        by_zeta[zi] = ordered_mean(vals);
      }
      result[t] = extrapolate(out.zetas, by_zeta, -1.0);
    }
    return result;
  };

  out.lambda0_times = eval_times;
  out.lambda0_values = extrapolate_curve(task_lam, nt);
  out.trunc_ages = eval_ages;
  std::vector<double> h_vals = extrapolate_curve(task_h, na);
  for (double& v : h_vals) v = std::min(1.0, std::max(0.0, v));
  out.trunc_values = isotonic_nondecreasing(std::move(h_vals));
  for (double& v : out.trunc_values) v = std::min(1.0, std::max(0.0, v));

  return out;
}

std::string FitResult::to_json() const {
  nlohmann::json j;
  j["beta_hat"]["beta_x"] = beta_hat.beta_x;
  j["beta_hat"]["beta_z"] = beta_hat.beta_z;
  j["selected_x"] = selected_x;
  j["selected_z"] = selected_z;
  j["zetas"] = zetas;
  std::vector<std::vector<double>> bz;
  for (Eigen::Index i = 0; i < beta_by_zeta.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(beta_by_zeta.cols()));
    for (Eigen::Index r = 0; r < beta_by_zeta.cols(); ++r)
      row[static_cast<std::size_t>(r)] = beta_by_zeta(i, r);
    bz.push_back(std::move(row));
  }
  j["beta_by_zeta"] = bz;
  j["lambda0_curve"]["times"] = lambda0_times;
  j["lambda0_curve"]["values"] = lambda0_values;
  j["trunc_dist_curve"]["ages"] = trunc_ages;
  j["trunc_dist_curve"]["values"] = trunc_values;
  j["converged_fraction"] = converged_fraction;
  return j.dump(2);
}

}  // namespace ltrcsimex
