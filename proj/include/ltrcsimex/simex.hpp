#ifndef LTRCSIMEX_SIMEX_HPP
#define LTRCSIMEX_SIMEX_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ltrcsimex/penalty.hpp"
#include "ltrcsimex/types.hpp"

namespace ltrcsimex {

struct SimexGrid {
  int replicates = 500;  // B
  std::vector<double> zetas = {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
  std::uint64_t seed = 0;

  void validate() const {
    if (replicates < 1) throw InvalidInputError("SimexGrid: B >= 1 required");
    if (zetas.empty() || zetas.front() != 0.0)
      throw InvalidInputError("SimexGrid: zeta grid must start at 0");
    for (std::size_t k = 1; k < zetas.size(); ++k)
      if (!(zetas[k] > zetas[k - 1]))
        throw InvalidInputError("SimexGrid: zetas must be strictly increasing");
  }
};

struct FitResult {
  Coefficients beta_hat;               // extrapolated to zeta = -1
  std::vector<std::size_t> selected_x; // nonzero beta_x indices
  std::vector<std::size_t> selected_z;
  std::vector<double> zetas;
  Eigen::MatrixXd beta_by_zeta;        // |zetas| x p, averaged over b
  std::vector<double> lambda0_times;
  std::vector<double> lambda0_values;  // extrapolated cumulative baseline
  std::vector<double> trunc_ages;
  std::vector<double> trunc_values;    // extrapolated, clipped, re-monotonized
  double converged_fraction = 0.0;

  std::string to_json() const;
};

// Pseudo-covariates W + sqrt(zeta) U with rows U_i iid N(0, sigma_eps).
// Substreams are keyed per subject from seed_key, so results do not depend
// on evaluation order.
Eigen::MatrixXd generate_pseudo_covariates(const Eigen::MatrixXd& w,
                                           const Eigen::MatrixXd& sigma_eps,
                                           double zeta, std::uint64_t seed_key);

// Least-squares quadratic fit of values over zetas, evaluated at target.
// A constant series is returned unchanged so that zero-noise runs collapse
// exactly onto the naive fit.
double extrapolate(const std::vector<double>& zetas,
                   const std::vector<double>& values, double target = -1.0);

// Lower-triangular factor of a symmetric PSD matrix, with eigenvalue
// clipping at 0 for borderline cases (tolerance 1e-10).
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& sigma);

// Pool-adjacent-violators projection onto nondecreasing sequences.
std::vector<double> isotonic_nondecreasing(std::vector<double> v);

// Full three-stage procedure: simulate pseudo-covariates, select and
// estimate per (b, zeta) with BIC-tuned penalties, average over b,
// extrapolate to zeta = -1, then reconstruct the post-selection cumulative
// baseline hazard and truncation-time distribution curves.
FitResult simex_fit(const Dataset& data, const Eigen::MatrixXd& sigma_eps,
                    const PenaltySpec& penalty, const SimexGrid& grid,
                    const ProfileFitOptions& options,
                    std::vector<double> eval_times = {},
                    std::vector<double> eval_ages = {}, int workers = 1);

// Penalized fit on the observed covariates with no error correction.
Coefficients naive_fit(const Dataset& data, const PenaltySpec& penalty,
                       const ProfileFitOptions& options);

}  // namespace ltrcsimex

#endif
