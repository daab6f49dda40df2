#include "ltrcsimex/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ltrcsimex {

namespace {

constexpr double kEpanechnikovPeak = 0.75;

inline double epanechnikov(double u) {
  double u2 = u * u;
  return u2 <= 1.0 ? 0.75 * (1.0 - u2) : 0.0;
}

std::vector<double> sorted_distinct(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

Eigen::MatrixXd covariate_matrix(const Dataset& data) {
  const std::size_t n = data.n();
  Eigen::MatrixXd V(n, data.p());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data.subjects[i];
    for (std::size_t j = 0; j < data.p_x; ++j) V(i, j) = s.w[j];
    for (std::size_t j = 0; j < data.p_z; ++j) V(i, data.p_x + j) = s.z[j];
  }
  return V;
}

StepFunction breslow_baseline(const Dataset& data, const Eigen::VectorXd& beta,
                              const Eigen::MatrixXd& covariates) {
  const std::size_t n = data.n();
  if (covariates.rows() != static_cast<Eigen::Index>(n) ||
      covariates.cols() != beta.size())
    throw InvalidInputError("breslow_baseline: covariate/beta shape mismatch");

  Eigen::VectorXd eta = covariates * beta;

  // Breakpoints where the at-risk or counting process can jump.
  std::vector<double> bp;
  bp.reserve(2 * n + 1);
  bp.push_back(0.0);
  for (const auto& s : data.subjects) {
    bp.push_back(s.a);
    bp.push_back(s.y);
  }
  bp = sorted_distinct(bp);

  // Subjects sorted by entry and by exit for the sweep.
  std::vector<std::size_t> by_a(n), by_y(n);
  std::iota(by_a.begin(), by_a.end(), std::size_t{0});
  by_y = by_a;
  std::sort(by_a.begin(), by_a.end(), [&](std::size_t i, std::size_t j) {
    return data.subjects[i].a < data.subjects[j].a;
  });
  std::sort(by_y.begin(), by_y.end(), [&](std::size_t i, std::size_t j) {
    return data.subjects[i].y < data.subjects[j].y;
  });

  // Events and output grid: distinct observed y-times.
  std::vector<double> grid;
  grid.reserve(n);
  for (std::size_t k = 0; k < n; ++k) grid.push_back(data.subjects[by_y[k]].y);
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::vector<double> grid_inc(grid.size(), 0.0);
  auto grid_index = [&](double t) {
    return static_cast<std::size_t>(
        std::lower_bound(grid.begin(), grid.end(), t) - grid.begin());
  };

  std::size_t ia = 0, iy = 0;
  long risk_count = 0;
  double risk_eta = 0.0;
  for (std::size_t k = 0; k < bp.size(); ++k) {
    const double t = bp[k];
    // Entries at t join the risk set before the event jump at t is taken.
    while (ia < n && data.subjects[by_a[ia]].a == t) {
      risk_count += 1;
      risk_eta += eta[static_cast<Eigen::Index>(by_a[ia])];
      ++ia;
    }
    // Event jump: sum_i dN_i(t) / sum_i R_i(t).
    long events = 0;
    std::size_t iy_scan = iy;
    while (iy_scan < n && data.subjects[by_y[iy_scan]].y == t) {
      if (data.subjects[by_y[iy_scan]].delta == 1) ++events;
      ++iy_scan;
    }
    if (events > 0) {
      if (risk_count <= 0)
        throw EstimationError("breslow_baseline: empty risk set at event time " +
                              std::to_string(t));
      grid_inc[grid_index(t)] += static_cast<double>(events) /
                                 static_cast<double>(risk_count);
    }
    // Exits at t leave the risk set after the jump.
    while (iy < n && data.subjects[by_y[iy]].y == t) {
      risk_count -= 1;
      risk_eta -= eta[static_cast<Eigen::Index>(by_y[iy])];
      ++iy;
    }
    // Drift over (t, next breakpoint]: risk set constant on the open interval.
    if (k + 1 < bp.size() && risk_count > 0) {
      double drift = -risk_eta * (bp[k + 1] - t) / static_cast<double>(risk_count);
      // Accumulated into the next y-grid point at or after bp[k+1].
      std::size_t gi = grid_index(bp[k + 1]);
      if (gi < grid.size()) grid_inc[gi] += drift;
    }
  }

  std::vector<double> values(grid.size());
  double cum = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    cum += grid_inc[k];
    values[k] = cum;
  }
  return StepFunction(std::move(grid), std::move(values));
}

double kernel_hazard(const StepFunction& cum_baseline, double sigma, double t) {
  if (!(sigma > 0.0)) throw InvalidInputError("kernel_hazard: sigma must be > 0");
  const auto& times = cum_baseline.times;
  auto lo = std::lower_bound(times.begin(), times.end(), t - sigma);
  auto hi = std::upper_bound(times.begin(), times.end(), t + sigma);
  double sum = 0.0;
  double prev = (lo == times.begin())
                    ? 0.0
                    : cum_baseline.values[static_cast<std::size_t>(lo - times.begin()) - 1];
  for (auto it = lo; it != hi; ++it) {
    std::size_t j = static_cast<std::size_t>(it - times.begin());
    double inc = cum_baseline.values[j] - prev;
    prev = cum_baseline.values[j];
    sum += epanechnikov((t - *it) / sigma) * inc;
  }
  return sum / sigma;
}

double select_bandwidth(const Dataset& data, const Eigen::VectorXd& beta,
                        const Eigen::MatrixXd& covariates) {
  const std::size_t n = data.n();
  if (n < 10) throw InvalidInputError("select_bandwidth: n >= 10 required");

  double mean = 0.0;
  for (const auto& s : data.subjects) mean += s.y;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (const auto& s : data.subjects) ss += (s.y - mean) * (s.y - mean);
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0))
    throw InvalidInputError("select_bandwidth: degenerate y (all equal)");

  const double anchor = sd * std::pow(static_cast<double>(n), -0.2);
  const double factors[] = {0.5, 0.75, 1.0, 1.5, 2.0};

  StepFunction cum = breslow_baseline(data, beta, covariates);

  // Per-event jump share 1/|risk set at y_i|, used for the leave-one-out term.
  std::vector<double> event_y, event_share;
  for (const auto& s : data.subjects) {
    if (s.delta != 1) continue;
    long risk = 0;
    for (const auto& r : data.subjects)
      if (r.a <= s.y && s.y <= r.y) ++risk;
    event_y.push_back(s.y);
    event_share.push_back(1.0 / static_cast<double>(risk));
  }

  double best_sigma = 0.0;
  double best_score = std::numeric_limits<double>::infinity();
  for (double c : factors) {
    const double sigma = c * anchor;
    // Integral of the squared smoothed hazard by trapezoid on a fine grid.
    double t_lo = cum.times.front() - sigma;
    double t_hi = cum.times.back() + sigma;
    if (t_lo < 0.0) t_lo = 0.0;
    const int m = 512;
    const double h = (t_hi - t_lo) / m;
    double integral = 0.0;
    for (int k = 0; k <= m; ++k) {
      double lam = kernel_hazard(cum, sigma, t_lo + k * h);
      double w = (k == 0 || k == m) ? 0.5 : 1.0;
      integral += w * lam * lam;
    }
    integral *= h;

    double cv_sum = 0.0;
    for (std::size_t e = 0; e < event_y.size(); ++e) {
      double loo = kernel_hazard(cum, sigma, event_y[e]) -
                   kEpanechnikovPeak / sigma * event_share[e];
      cv_sum += loo * event_share[e];
    }
    double score = integral - 2.0 * cv_sum;
    if (score < best_score) {
      best_score = score;
      best_sigma = sigma;
    }
  }
  return best_sigma;
}

StepFunction npmle_truncation(const Dataset& data, const Eigen::VectorXd& beta,
                              const Eigen::MatrixXd& covariates,
                              const StepFunction& cum_baseline) {
  const std::size_t n = data.n();
  Eigen::VectorXd eta = covariates * beta;

  std::vector<double> weight(n);
  double total = 0.0;
  std::string offenders;
  for (std::size_t i = 0; i < n; ++i) {
    double a = data.subjects[i].a;
    double s = additive_survivor(a, eta[static_cast<Eigen::Index>(i)],
                                 cum_baseline(a));
    if (s <= 0.0 || !std::isfinite(1.0 / s)) {
      offenders += (offenders.empty() ? "" : ", ") + std::to_string(i);
      continue;
    }
    weight[i] = 1.0 / s;
    total += weight[i];
  }
  if (!offenders.empty())
    throw EstimationError("npmle_truncation: zero survivor at truncation time for subjects " +
                          offenders);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return data.subjects[i].a < data.subjects[j].a;
  });

  std::vector<double> times, values;
  double cum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double a = data.subjects[order[k]].a;
    cum += weight[order[k]];
    if (!times.empty() && times.back() == a)
      values.back() = cum / total;
    else {
      times.push_back(a);
      values.push_back(cum / total);
    }
  }
  values.back() = 1.0;
  return StepFunction(std::move(times), std::move(values));
}

PluginSet compute_plugins(const Dataset& data, const Eigen::VectorXd& beta,
                          const Eigen::MatrixXd& covariates) {
  PluginSet out;
  out.cum_baseline = breslow_baseline(data, beta, covariates);
  out.bandwidth = select_bandwidth(data, beta, covariates);
  out.trunc_dist = npmle_truncation(data, beta, covariates, out.cum_baseline);
  return out;
}

LoglikWorkspace::LoglikWorkspace(const Dataset& data,
                                 const Eigen::MatrixXd& covariates,
                                 const PluginSet& plugins)
    : n_(data.n()), cov_(covariates) {
  if (cov_.rows() != static_cast<Eigen::Index>(n_))
    throw InvalidInputError("LoglikWorkspace: covariate row count mismatch");
  if (!(plugins.bandwidth > 0.0))
    throw InvalidInputError("LoglikWorkspace: bandwidth must be > 0");
  if (!plugins.trunc_dist.is_cdf(1e-12))
    throw InvalidInputError("LoglikWorkspace: trunc_dist is not a valid CDF");

  const Eigen::Index n = static_cast<Eigen::Index>(n_);
  y_.resize(n);
  a_.resize(n);
  delta_.resize(n_);
  lambda_at_y_.resize(n);
  cum_at_y_.resize(n);
  cum_at_a_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = data.subjects[static_cast<std::size_t>(i)];
    y_[i] = s.y;
    a_[i] = s.a;
    delta_[static_cast<std::size_t>(i)] = s.delta;
    lambda_at_y_[i] = s.delta == 1
                          ? kernel_hazard(plugins.cum_baseline, plugins.bandwidth, s.y)
                          : 0.0;
    cum_at_y_[i] = plugins.cum_baseline(s.y);
    cum_at_a_[i] = plugins.cum_baseline(s.a);
  }

  const auto& H = plugins.trunc_dist;
  const std::size_t m = H.size();
  atom_times_.resize(static_cast<Eigen::Index>(m));
  atom_mass_.resize(static_cast<Eigen::Index>(m));
  cum_at_atoms_.resize(static_cast<Eigen::Index>(m));
  auto inc = H.increments();
  for (std::size_t j = 0; j < m; ++j) {
    atom_times_[static_cast<Eigen::Index>(j)] = H.times[j];
    atom_mass_[static_cast<Eigen::Index>(j)] = inc[j];
    cum_at_atoms_[static_cast<Eigen::Index>(j)] = plugins.cum_baseline(H.times[j]);
  }

  sum_log_mass_at_a_ = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = std::lower_bound(H.times.begin(), H.times.end(), a_[i]);
    if (it == H.times.end() || *it != a_[i])
      throw EstimationError("LoglikWorkspace: truncation time " +
                            std::to_string(a_[i]) + " is not an atom of H-hat");
    double mass = inc[static_cast<std::size_t>(it - H.times.begin())];
    if (!(mass > 0.0))
      throw EstimationError("LoglikWorkspace: zero H-hat mass at truncation time " +
                            std::to_string(a_[i]));
    sum_log_mass_at_a_ += std::log(mass);
  }
}

double LoglikWorkspace::eval(const Eigen::VectorXd& beta,
                             Eigen::VectorXd* grad) const {
  if (beta.size() != cov_.cols())
    throw InvalidInputError("LoglikWorkspace: beta length mismatch");
  const Eigen::Index n = static_cast<Eigen::Index>(n_);
  const Eigen::Index m = atom_times_.size();
  const double inv_n = 1.0 / static_cast<double>(n_);

  Eigen::VectorXd eta = cov_ * beta;
  Eigen::VectorXd coef;
  if (grad) coef = Eigen::VectorXd::Zero(n);

  Eigen::ArrayXd c_buf(m), e_buf(m);
  const Eigen::ArrayXd mass_times_time =
      atom_mass_.array() * atom_times_.array();

  double loglik = sum_log_mass_at_a_;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ei = eta[i];
    if (delta_[static_cast<std::size_t>(i)] == 1) {
      double haz = lambda_at_y_[i] + ei;
      if (!(haz > 0.0)) return -std::numeric_limits<double>::infinity();
      loglik += std::log(haz);
      if (grad) coef[i] += 1.0 / haz;
    }
    // log S(y_i) from the conditional part; the +-log S(a_i) terms of the
    // conditional and marginal factors cancel exactly.
    double cy = cum_at_y_[i] + ei * y_[i];
    if (cy > 0.0) {
      loglik -= cy;
      if (grad) coef[i] -= y_[i];
    }

    // Marginal normalizer D_i = sum_j h_j S(u_j | v_i). The clamped survivor
    // is exp(-max(c, 0)), so the whole atom sweep vectorizes as one array
    // exponential; the gradient sum runs over unclamped (c > 0) atoms only.
    c_buf = cum_at_atoms_.array() + ei * atom_times_.array();
    e_buf = (-c_buf.cwiseMax(0.0)).exp();
    double D = (atom_mass_.array() * e_buf).sum();
    if (!(D > 0.0) || !std::isfinite(D))
      throw EstimationError("pseudo_loglik: zero marginal integral for subject " +
                            std::to_string(i));
    loglik -= std::log(D);
    if (grad) {
      double dsum =
          (mass_times_time * (e_buf - (c_buf <= 0.0).cast<double>())).sum();
      coef[i] += dsum / D;
    }
  }

  if (grad) *grad = inv_n * (cov_.transpose() * coef);
  return loglik * inv_n;
}

void LoglikWorkspace::gradient_interval(const Eigen::VectorXd& beta,
                                        Eigen::VectorXd& lo, Eigen::VectorXd& hi,
                                        double boundary_eps) const {
  if (beta.size() != cov_.cols())
    throw InvalidInputError("LoglikWorkspace: beta length mismatch");
  const Eigen::Index n = static_cast<Eigen::Index>(n_);
  const Eigen::Index m = atom_times_.size();
  const double inv_n = 1.0 / static_cast<double>(n_);

  Eigen::VectorXd eta = cov_ * beta;
  Eigen::VectorXd coef_lo = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd coef_hi = Eigen::VectorXd::Zero(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const double ei = eta[i];
    double base = 0.0, extra_lo = 0.0, extra_hi = 0.0;
    if (delta_[static_cast<std::size_t>(i)] == 1) {
      double haz = lambda_at_y_[i] + ei;
      if (haz > 0.0) base += 1.0 / haz;
    }
    double cy = cum_at_y_[i] + ei * y_[i];
    if (std::abs(cy) <= boundary_eps) {
      extra_lo += -y_[i];  // the -y_i term may be on or off at the crease
    } else if (cy > 0.0) {
      base -= y_[i];
    }

    double D = 0.0;
    double dsum = 0.0;
    double dsum_boundary = 0.0;  // ambiguous (on-the-crease) atom terms
    const double* ut = atom_times_.data();
    const double* hm = atom_mass_.data();
    const double* cl = cum_at_atoms_.data();
    for (Eigen::Index j = 0; j < m; ++j) {
      double c = cl[j] + ei * ut[j];
      if (std::abs(c) <= boundary_eps) {
        D += hm[j];
        dsum_boundary += hm[j] * ut[j];
      } else if (c > 0.0) {
        double s = hm[j] * std::exp(-c);
        D += s;
        dsum += s * ut[j];
      } else {
        D += hm[j];
      }
    }
    if (D > 0.0 && std::isfinite(D)) {
      base += dsum / D;
      extra_hi += dsum_boundary / D;
    }
    coef_lo[i] = base + extra_lo;
    coef_hi[i] = base + extra_hi;
  }

  lo.resize(cov_.cols());
  hi.resize(cov_.cols());
  for (Eigen::Index r = 0; r < cov_.cols(); ++r) {
    double l = 0.0, h = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double a = cov_(i, r) * coef_lo[i];
      double b = cov_(i, r) * coef_hi[i];
      l += std::min(a, b);
      h += std::max(a, b);
    }
    lo[r] = l * inv_n;
    hi[r] = h * inv_n;
  }
}

double LoglikWorkspace::value(const Eigen::VectorXd& beta) const {
  return eval(beta, nullptr);
}

Eigen::VectorXd LoglikWorkspace::gradient(const Eigen::VectorXd& beta) const {
  Eigen::VectorXd g;
  eval(beta, &g);
  return g;
}

double LoglikWorkspace::value_and_gradient(const Eigen::VectorXd& beta,
                                           Eigen::VectorXd& grad) const {
  return eval(beta, &grad);
}

double pseudo_loglik(const Dataset& data, const Eigen::VectorXd& beta,
                     const Eigen::MatrixXd& covariates, const PluginSet& plugins) {
  return LoglikWorkspace(data, covariates, plugins).value(beta);
}

Eigen::VectorXd pseudo_loglik_grad(const Dataset& data, const Eigen::VectorXd& beta,
                                   const Eigen::MatrixXd& covariates,
                                   const PluginSet& plugins) {
  return LoglikWorkspace(data, covariates, plugins).gradient(beta);
}

}  // namespace ltrcsimex
