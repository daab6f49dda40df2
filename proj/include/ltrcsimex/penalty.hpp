#ifndef LTRCSIMEX_PENALTY_HPP
#define LTRCSIMEX_PENALTY_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "ltrcsimex/estimators.hpp"
#include "ltrcsimex/types.hpp"

namespace ltrcsimex {

enum class PenaltyFamily { LASSO, ALASSO, SCAD };

PenaltyFamily penalty_family_from_string(const std::string& name);
std::string to_string(PenaltyFamily family);

struct PenaltySpec {
  PenaltyFamily family = PenaltyFamily::LASSO;
  double tuning = 0.0;          // vartheta >= 0
  double scad_a = 3.7;
  double alasso_gamma = 1.0;
  std::optional<Eigen::VectorXd> alasso_weights;  // computed from a pilot if absent

  void validate() const {
    if (!(tuning >= 0.0)) throw InvalidInputError("PenaltySpec: tuning must be >= 0");
    if (family == PenaltyFamily::SCAD && !(scad_a > 2.0))
      throw InvalidInputError("PenaltySpec: scad_a must be > 2");
    if (!(alasso_gamma > 0.0))
      throw InvalidInputError("PenaltySpec: alasso_gamma must be > 0");
    if (alasso_weights)
      for (Eigen::Index r = 0; r < alasso_weights->size(); ++r)
        if (!((*alasso_weights)[r] > 0.0))
          throw InvalidInputError("PenaltySpec: ALASSO weights must be positive");
  }
};

struct ProfileFitOptions {
  int max_outer_iterations = 60;
  double beta_tolerance = 1e-6;
  int max_inner_iterations = 200;
  double inner_tolerance = 1e-8;
  double initial_step = 1.0;
  double backtrack_factor = 0.5;
  double step_growth = 1.25;
};

// SCAD derivative with the Fan-Li scaling: vartheta * [I(u <= vt) +
// (a*vt - u)_+ / ((a-1) vt) * I(u > vt)], so that tuning * rho reproduces
// the standard SCAD penalty.
double scad_derivative(double u, double tuning, double a);

// Penalty value rho(beta): sum |beta_r| (LASSO), sum w_r |beta_r| (ALASSO),
// or sum_r p_vt(|beta_r|) for SCAD (where the tuning enters p_vt itself).
double penalty_value(const Eigen::VectorXd& beta, const PenaltySpec& spec);

struct FitOutput {
  Eigen::VectorXd beta;
  bool converged = false;
  PluginSet plugins;     // plug-ins at the final beta
  double loglik = 0.0;   // pseudo-log-likelihood at the final beta
  int outer_iterations = 0;
};

// Profile-iteration penalized maximizer: alternate recomputing the plug-ins
// at the current beta with proximal-gradient ascent on loglik - penalty.
// SCAD is handled by local linear approximation (reweighted L1).
FitOutput fit_penalized(const Dataset& data, const Eigen::MatrixXd& covariates,
                        const PenaltySpec& spec, const ProfileFitOptions& options,
                        const Eigen::VectorXd& init);

// Smallest LASSO tuning value that forces beta-hat = 0 (sup norm of the
// unpenalized gradient at 0 with plug-ins at 0).
double lasso_max_tuning(const Dataset& data, const Eigen::MatrixXd& covariates);

// 15 log-spaced values from vt_max down to vt_max / 100, descending.
std::vector<double> default_tuning_grid(const Dataset& data,
                                        const Eigen::MatrixXd& covariates);

struct TuningResult {
  double tuning = 0.0;
  FitOutput fit;
  std::vector<double> bic;  // aligned with the grid as given
};

// BIC selection over a tuning grid; ties break toward the larger (sparser)
// tuning value. Fits are warm-started along the descending path.
TuningResult select_tuning(const Dataset& data, const Eigen::MatrixXd& covariates,
                           PenaltySpec spec_template, std::vector<double> grid,
                           const ProfileFitOptions& options);

int count_nonzero(const Eigen::VectorXd& beta);

}  // namespace ltrcsimex

#endif
