#include "ltrcsimex/harness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

#include "ltrcsimex/estimators.hpp"
#include "ltrcsimex/rng.hpp"

namespace ltrcsimex {

namespace {

double baseline_antiderivative(double t, BaselineKind kind) {
  switch (kind) {
    case BaselineKind::SqrtHalf:
      return std::pow(t, 1.5) / 3.0;
    case BaselineKind::Log:
      return t <= 0.0 ? 0.0 : t * std::log(t) - t;
    case BaselineKind::Exp2:
      return 0.5 * (std::exp(2.0 * t) - 1.0);
  }
  return 0.0;
}

// Time at which lambda0(t) + eta crosses 0 (the baselines are increasing,
// so the clamped hazard vanishes exactly on [0, s0]).
double hazard_crossing(double eta, BaselineKind kind) {
  switch (kind) {
    case BaselineKind::SqrtHalf:
      return eta < 0.0 ? 4.0 * eta * eta : 0.0;
    case BaselineKind::Log:
      return std::exp(-eta);
    case BaselineKind::Exp2:
      return eta < -1.0 ? 0.5 * std::log(-eta) : 0.0;
  }
  return 0.0;
}

}  // namespace

double clamped_cumhaz(double t, double eta, BaselineKind baseline) {
  if (t <= 0.0) return 0.0;
  double s0 = hazard_crossing(eta, baseline);
  if (t <= s0) return 0.0;
  return baseline_antiderivative(t, baseline) -
         baseline_antiderivative(s0, baseline) + eta * (t - s0);
}

double sample_event_time(double eta, BaselineKind baseline, double u) {
  if (!std::isfinite(eta)) throw InvalidInputError("sample_event_time: non-finite eta");
  if (!(u > 0.0 && u < 1.0))
    throw InvalidInputError("sample_event_time: u must be in (0,1)");
  const double target = -std::log(u);
  double lo = hazard_crossing(eta, baseline);
  double hi = std::max(lo, 1.0);
  for (int k = 0; k < 400 && clamped_cumhaz(hi, eta, baseline) < target; ++k)
    hi = hi * 1.5 + 0.5;
  for (int k = 0; k < 200 && (hi - lo) > 1e-10 * std::max(1.0, hi); ++k) {
    double mid = 0.5 * (lo + hi);
    if (clamped_cumhaz(mid, eta, baseline) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

Coefficients make_true_beta(std::size_t p_x, std::size_t p_z) {
  if (p_x != p_z)
    throw InvalidInputError("make_true_beta: p_x == p_z required");
  if (p_x < 4) throw InvalidInputError("make_true_beta: p_x >= 4 required");
  auto block = [](std::size_t p) {
    std::vector<double> b(p, 0.0);
    std::size_t q4 = p / 4;
    for (std::size_t i = 0; i < q4; ++i) b[i] = 1.0;
    for (std::size_t i = q4; i < 2 * q4; ++i) b[i] = -1.0;
    return b;
  };
  return Coefficients(block(p_x), block(p_z));
}

Eigen::MatrixXd build_covariance(std::size_t p_x, std::size_t p_z, double sigma_x2,
                                 double sigma_z2, double rho) {
  const Eigen::Index px = static_cast<Eigen::Index>(p_x);
  const Eigen::Index pz = static_cast<Eigen::Index>(p_z);
  Eigen::MatrixXd S(px + pz, px + pz);
  for (Eigen::Index i = 0; i < px; ++i)
    for (Eigen::Index j = 0; j < px; ++j)
      S(i, j) = sigma_x2 * std::pow(rho, std::abs(i - j));
  for (Eigen::Index i = 0; i < pz; ++i)
    for (Eigen::Index j = 0; j < pz; ++j)
      S(px + i, px + j) = sigma_z2 * std::pow(rho, std::abs(i - j));
  for (Eigen::Index i = 0; i < px; ++i)
    for (Eigen::Index j = 0; j < pz; ++j) {
      double v = std::pow(0.5, 2.0 + std::abs(i - j));
      S(i, px + j) = v;
      S(px + j, i) = v;
    }
  return S;
}

namespace {

struct AcceptedPool {
  std::vector<double> a, t;
};

// Accepted (A*, T*) pairs via rejection on T* >= A*.
AcceptedPool draw_accepted(const ScenarioConfig& config, std::size_t count,
                           std::uint64_t key, Eigen::MatrixXd* x_out,
                           Eigen::MatrixXd* z_out) {
  const Eigen::MatrixXd sigma = build_covariance(config.p_x, config.p_z);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw ConfigError("generate_scenario: covariance not positive definite");
  Eigen::MatrixXd L = llt.matrixL();
  const Coefficients beta0 = make_true_beta(config.p_x, config.p_z);
  const std::vector<double> b = beta0.concat();
  const BaselineKind kind = config.baseline();

  auto eng = make_engine(mix_key(key, 0xACCE) );
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::exponential_distribution<double> ed(1.0 / config.truncation_mean);

  AcceptedPool pool;
  if (x_out) x_out->resize(static_cast<Eigen::Index>(count),
                           static_cast<Eigen::Index>(config.p_x));
  if (z_out) z_out->resize(static_cast<Eigen::Index>(count),
                           static_cast<Eigen::Index>(config.p_z));
  const Eigen::Index p = static_cast<Eigen::Index>(config.p_x + config.p_z);
  Eigen::VectorXd g(p), v(p);
  std::size_t attempts = 0;
  while (pool.a.size() < count) {
    ++attempts;
    if (attempts >= 100000 && pool.a.size() * 10000 < attempts)
      throw ConfigError("generate_scenario: acceptance probability below 1e-4 "
                        "(degenerate truncation)");
    for (Eigen::Index j = 0; j < p; ++j) g[j] = nd(eng);
    v = L * g;
    double eta = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) eta += b[static_cast<std::size_t>(j)] * v[j];
    double a_star = config.model == 1 ? 100.0 * ud(eng) : ed(eng);
    double u = ud(eng);
    while (u <= 0.0) u = ud(eng);
    double t_star = sample_event_time(eta, kind, u);
    if (t_star < a_star) continue;
    std::size_t i = pool.a.size();
    pool.a.push_back(a_star);
    pool.t.push_back(t_star);
    if (x_out)
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(config.p_x); ++j)
        (*x_out)(static_cast<Eigen::Index>(i), j) = v[j];
    if (z_out)
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(config.p_z); ++j)
        (*z_out)(static_cast<Eigen::Index>(i), j) =
            v[static_cast<Eigen::Index>(config.p_x) + j];
  }
  return pool;
}

std::mutex g_calib_mutex;
std::map<std::string, double> g_calib_cache;

}  // namespace

double calibrate_censoring(const ScenarioConfig& config, double target) {
  if (!(target > 0.0 && target < 1.0))
    throw InvalidInputError("calibrate_censoring: target must be in (0,1)");
  std::ostringstream keys;
  keys << config.model << ":" << config.p_x << ":" << config.p_z << ":"
       << config.truncation_mean << ":" << target;
  {
    std::lock_guard<std::mutex> lock(g_calib_mutex);
    auto it = g_calib_cache.find(keys.str());
    if (it != g_calib_cache.end()) return it->second;
  }

  // Calibration pool is keyed by the configuration only, not the master
  // seed, so the cached constant is stable across studies.
  const std::uint64_t key = mix_key(0xCA11B7A7E5EEDULL,
                                    static_cast<std::uint64_t>(config.model),
                                    config.p_x, config.p_z);
  const std::size_t pool_n = 10000;
  AcceptedPool pool = draw_accepted(config, pool_n, key, nullptr, nullptr);
  auto eng = make_engine(mix_key(key, 0xCE
  ));
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<double> uc(pool_n);
  for (auto& u : uc) u = ud(eng);

  // Censoring fraction at scale c; exactly nonincreasing in c on the pool.
  auto frac = [&](double c) {
    std::size_t censored = 0;
    for (std::size_t i = 0; i < pool_n; ++i)
      if (pool.t[i] > pool.a[i] + c * uc[i]) ++censored;
    return static_cast<double>(censored) / static_cast<double>(pool_n);
  };

  double lo = 1e-3, hi = 1e3;
  if (frac(lo) < target || frac(hi) > target)
    throw ConfigError("calibrate_censoring: target censoring rate " +
                      std::to_string(target) + " outside the bracket [1e-3, 1e3]");
  for (int k = 0; k < 80 && (hi - lo) > 1e-9 * hi; ++k) {
    double mid = 0.5 * (lo + hi);
    if (frac(mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  double c = 0.5 * (lo + hi);
  if (std::abs(frac(c) - target) > 0.01)
    throw ConfigError("calibrate_censoring: could not match target within 0.01");
  {
    std::lock_guard<std::mutex> lock(g_calib_mutex);
    g_calib_cache[keys.str()] = c;
  }
  return c;
}

GeneratedScenario generate_scenario(const ScenarioConfig& config,
                                    std::uint64_t rep_seed) {
  config.validate();
  const std::uint64_t key = mix_key(config.seed, rep_seed);

  Eigen::MatrixXd X, Z;
  AcceptedPool pool = draw_accepted(config, config.n, key, &X, &Z);
  const double c = calibrate_censoring(config, config.target_censoring);

  auto eng_c = make_engine(mix_key(key, 0xCE));
  auto eng_e = make_engine(mix_key(key, 0xE9));
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double eps_sd = std::sqrt(config.sigma_eps_diag);

  GeneratedScenario out;
  out.beta0 = make_true_beta(config.p_x, config.p_z);
  out.true_x = X;
  out.data.p_x = config.p_x;
  out.data.p_z = config.p_z;
  out.data.subjects.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    SubjectRecord s;
    s.a = pool.a[i];
    double cc = pool.a[i] + c * ud(eng_c);
    s.y = std::min(pool.t[i], cc);
    s.delta = pool.t[i] <= cc ? 1 : 0;
    s.w.resize(config.p_x);
    for (std::size_t j = 0; j < config.p_x; ++j)
      s.w[j] = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +
               eps_sd * nd(eng_e);
    s.z.resize(config.p_z);
    for (std::size_t j = 0; j < config.p_z; ++j)
      s.z[j] = Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    out.data.subjects.push_back(std::move(s));
  }
  out.data.validate();
  return out;
}

Metrics evaluate(const Coefficients& beta_hat, const Coefficients& beta0) {
  if (beta_hat.size() != beta0.size())
    throw InvalidInputError("evaluate: coefficient length mismatch");
  const std::vector<double> bh = beta_hat.concat();
  const std::vector<double> b0 = beta0.concat();
  Metrics m;
  for (std::size_t i = 0; i < bh.size(); ++i) {
    double d = bh[i] - b0[i];
    m.l1 += std::abs(d);
    m.l2 += d * d;
    if (bh[i] != 0.0) m.num_selected += 1.0;
    if (b0[i] != 0.0 && bh[i] == 0.0) m.num_false_negative += 1.0;
  }
  m.l2 = std::sqrt(m.l2);
  return m;
}

StudyResult run_study(const ScenarioConfig& config) {
  config.validate();
  calibrate_censoring(config, config.target_censoring);  // warm the cache

  Eigen::MatrixXd sigma_eps =
      config.sigma_eps_diag *
      Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(config.p_x),
                                static_cast<Eigen::Index>(config.p_x));
  ProfileFitOptions options;

  struct Acc {
    Metrics sum;
    std::size_t count = 0;
  };
  std::map<std::pair<std::size_t, std::string>, Acc> acc;
  auto add = [&](std::size_t fam, const std::string& est, const Metrics& m) {
    Acc& a = acc[{fam, est}];
    a.sum.l1 += m.l1;
    a.sum.l2 += m.l2;
    a.sum.num_selected += m.num_selected;
    a.sum.num_false_negative += m.num_false_negative;
    a.count += 1;
  };

  for (std::size_t rep = 0; rep < config.replications; ++rep) {
    GeneratedScenario sc = generate_scenario(config, rep);
    Dataset true_data = sc.data;
    for (std::size_t i = 0; i < true_data.n(); ++i)
      for (std::size_t j = 0; j < config.p_x; ++j)
        true_data.subjects[i].w[j] =
            sc.true_x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));

    for (std::size_t f = 0; f < config.penalties.size(); ++f) {
      PenaltySpec spec;
      spec.family = config.penalties[f];
      SimexGrid grid = config.simex;
      grid.seed = mix_key(config.seed, 0x51 , rep * 8 + f);
      FitResult proposed = simex_fit(sc.data, sigma_eps, spec, grid, options, {},
                                     {}, config.workers);
      Coefficients naive = naive_fit(sc.data, spec, options);
      Coefficients truex = naive_fit(true_data, spec, options);
      add(f, "proposed", evaluate(proposed.beta_hat, sc.beta0));
      add(f, "naive", evaluate(naive, sc.beta0));
      add(f, "trueX", evaluate(truex, sc.beta0));
    }
  }

  StudyResult out;
  out.config = config;
  for (std::size_t f = 0; f < config.penalties.size(); ++f)
    for (const std::string est : {"proposed", "naive", "trueX"}) {
      const Acc& a = acc[{f, est}];
      StudyRow row;
      row.family = config.penalties[f];
      row.estimator = est;
      double cnt = static_cast<double>(a.count);
      row.mean.l1 = a.sum.l1 / cnt;
      row.mean.l2 = a.sum.l2 / cnt;
      row.mean.num_selected = a.sum.num_selected / cnt;
      row.mean.num_false_negative = a.sum.num_false_negative / cnt;
      out.rows.push_back(row);
    }
  return out;
}

std::string StudyResult::to_csv() const {
  std::ostringstream os;
  os << "penalty,estimator,l1,l2,num_selected,num_false_negative\n";
  os << std::setprecision(17);
  for (const auto& r : rows)
    os << to_string(r.family) << "," << r.estimator << "," << r.mean.l1 << ","
       << r.mean.l2 << "," << r.mean.num_selected << ","
       << r.mean.num_false_negative << "\n";
  return os.str();
}

std::string StudyResult::to_table() const {
  auto find = [&](PenaltyFamily f, const std::string& est) -> const Metrics* {
    for (const auto& r : rows)
      if (r.family == f && r.estimator == est) return &r.mean;
    return nullptr;
  };
  std::ostringstream os;
  os << "model " << config.model << "  n=" << config.n
     << "  p=" << config.p_x + config.p_z
     << "  sigma_eps=" << config.sigma_eps_diag
     << "  replications=" << config.replications << "\n";
  os << std::left << std::setw(10) << "method" << std::right;
  for (const char* h : {"L1", "L2", "#S", "#FN"}) os << std::setw(9) << h;
  os << "   ";
  for (const char* h : {"L1", "L2", "#S", "#FN"}) os << std::setw(9) << h;
  os << "\n" << std::setw(46) << "(proposed)" << std::setw(39) << "(naive)" << "\n";
  os << std::fixed << std::setprecision(3);
  std::vector<PenaltyFamily> fams;
  for (const auto& r : rows)
    if (std::find(fams.begin(), fams.end(), r.family) == fams.end())
      fams.push_back(r.family);
  for (auto f : fams) {
    const Metrics* p = find(f, "proposed");
    const Metrics* nv = find(f, "naive");
    os << std::left << std::setw(10) << to_string(f) << std::right;
    for (const Metrics* m : {p, nv}) {
      if (m)
        os << std::setw(9) << m->l1 << std::setw(9) << m->l2 << std::setw(9)
           << m->num_selected << std::setw(9) << m->num_false_negative;
      else
        for (int k = 0; k < 4; ++k) os << std::setw(9) << "-";
      os << "   ";
    }
    os << "\n";
  }
  for (auto f : fams) {
    const Metrics* tx = find(f, "trueX");
    os << std::left << std::setw(10) << ("trueX-" + to_string(f)) << std::right;
    if (tx)
      os << std::setw(9) << tx->l1 << std::setw(9) << tx->l2 << std::setw(9)
         << tx->num_selected << std::setw(9) << tx->num_false_negative;
    os << "   ";
    for (int k = 0; k < 4; ++k) os << std::setw(9) << "-";
    os << "\n";
  }
  return os.str();
}

}  // namespace ltrcsimex
