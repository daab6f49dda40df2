#ifndef LTRCSIMEX_ESTIMATORS_HPP
#define LTRCSIMEX_ESTIMATORS_HPP

#include <Eigen/Dense>

#include "ltrcsimex/types.hpp"

namespace ltrcsimex {

// Plug-in nuisance estimates held fixed while maximizing over beta:
// Breslow-type cumulative baseline hazard, kernel bandwidth for the smoothed
// baseline hazard, and the NPMLE of the truncation-time distribution.
struct PluginSet {
  StepFunction cum_baseline;
  double bandwidth = 0.0;
  StepFunction trunc_dist;
};

// Breslow-type estimator of the cumulative baseline hazard on the grid of
// distinct observed y-times. Increments may be negative: the additive model
// does not force monotonicity. The drift term -sum_i R_i(u) eta_i du is
// integrated exactly between jumps of the at-risk and counting processes.
StepFunction breslow_baseline(const Dataset& data, const Eigen::VectorXd& beta,
                              const Eigen::MatrixXd& covariates);

// Kernel-smoothed baseline hazard at time t: (1/sigma) sum_j K((t-t_j)/sigma) dL(t_j)
// with the Epanechnikov kernel K(u) = 0.75 (1-u^2) I(|u|<=1).
double kernel_hazard(const StepFunction& cum_baseline, double sigma, double t);

// Least-squares cross-validation over the candidate grid
// {c * sd(y) * n^(-1/5) : c in {0.5, 0.75, 1.0, 1.5, 2.0}}.
double select_bandwidth(const Dataset& data, const Eigen::VectorXd& beta,
                        const Eigen::MatrixXd& covariates);

// NPMLE of the truncation-time distribution H:
// H(a) = [sum_i I(a_i <= a)/S_i] / [sum_i 1/S_i] with the additive-form
// survivor S_i = exp{-clamp(Lambda0(a_i) + eta_i a_i)}.
StepFunction npmle_truncation(const Dataset& data, const Eigen::VectorXd& beta,
                              const Eigen::MatrixXd& covariates,
                              const StepFunction& cum_baseline);

// All three plug-ins at the current beta.
PluginSet compute_plugins(const Dataset& data, const Eigen::VectorXd& beta,
                          const Eigen::MatrixXd& covariates);

// Pseudo-log-likelihood of the corrected likelihood with plug-ins fixed,
// scaled by 1/n. Precomputes everything that does not depend on beta so that
// repeated evaluations during optimization touch only the O(n * atoms)
// survivor sums. Returns -inf when some event has nonpositive hazard.
class LoglikWorkspace {
public:
  LoglikWorkspace(const Dataset& data, const Eigen::MatrixXd& covariates,
                  const PluginSet& plugins);

  double value(const Eigen::VectorXd& beta) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& beta) const;
  // Shares the survivor-matrix pass between objective and gradient.
  double value_and_gradient(const Eigen::VectorXd& beta, Eigen::VectorXd& grad) const;

  // Componentwise bounds on the (Clarke) subgradient. The clamped survivor
  // makes the objective piecewise smooth; terms whose clamp argument lies
  // within boundary_eps of 0 contribute an on/off interval instead of a
  // point value. Away from creases this collapses to the plain gradient.
  void gradient_interval(const Eigen::VectorXd& beta, Eigen::VectorXd& lo,
                         Eigen::VectorXd& hi, double boundary_eps = 1e-6) const;

  std::size_t n() const { return n_; }
  std::size_t p() const { return static_cast<std::size_t>(cov_.cols()); }

private:
  double eval(const Eigen::VectorXd& beta, Eigen::VectorXd* grad) const;

  std::size_t n_;
  Eigen::MatrixXd cov_;            // n x p effective covariates
  Eigen::VectorXd y_, a_;
  std::vector<int> delta_;
  Eigen::VectorXd lambda_at_y_;    // kernel-smoothed hazard at each y_i
  Eigen::VectorXd cum_at_y_, cum_at_a_;
  Eigen::VectorXd atom_times_;     // jump points of H-hat
  Eigen::VectorXd atom_mass_;
  Eigen::VectorXd cum_at_atoms_;
  double sum_log_mass_at_a_;       // sum_i log dH(a_i), beta-free
};

double pseudo_loglik(const Dataset& data, const Eigen::VectorXd& beta,
                     const Eigen::MatrixXd& covariates, const PluginSet& plugins);

Eigen::VectorXd pseudo_loglik_grad(const Dataset& data, const Eigen::VectorXd& beta,
                                   const Eigen::MatrixXd& covariates,
                                   const PluginSet& plugins);

// Effective covariate matrix [W | Z] of a dataset.
Eigen::MatrixXd covariate_matrix(const Dataset& data);

}  // namespace ltrcsimex

#endif
