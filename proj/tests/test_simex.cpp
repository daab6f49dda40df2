#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ltrcsimex/estimators.hpp"
#include "ltrcsimex/penalty.hpp"
#include "ltrcsimex/rng.hpp"
#include "ltrcsimex/simex.hpp"
#include "test_util.hpp"

using namespace ltrcsimex;

namespace {

const std::vector<double> kFullGrid = {0.0, 0.25, 0.5,  0.75, 1.0,
                                       1.25, 1.5, 1.75, 2.0};

// Quadratic least squares via explicitly accumulated normal equations,
// independent of the QR path used by the library.
double normal_equations_extrapolate(const std::vector<double>& zs,
                                    const std::vector<double>& vs,
                                    double target) {
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < zs.size(); ++i) {
    Eigen::Vector3d x(1.0, zs[i], zs[i] * zs[i]);
    A += x * x.transpose();
    b += vs[i] * x;
  }
  Eigen::Vector3d g = A.ldlt().solve(b);
  return g[0] + g[1] * target + g[2] * target * target;
}

}  // namespace

TEST_CASE("extrapolate recovers an exact quadratic") {
  const double g0 = 0.7, g1 = -1.3, g2 = 0.45;
  std::vector<double> vals;
  for (double z : kFullGrid) vals.push_back(g0 + g1 * z + g2 * z * z);
  const double expected = g0 - g1 + g2;  // value at zeta = -1
  CHECK(extrapolate(kFullGrid, vals, -1.0) == doctest::Approx(expected).epsilon(1e-10));
  // A linear series is a degenerate quadratic and must also be exact.
  std::vector<double> lin;
  for (double z : kFullGrid) lin.push_back(2.0 - 3.0 * z);
  CHECK(extrapolate(kFullGrid, lin, -1.0) == doctest::Approx(5.0).epsilon(1e-10));
}

TEST_CASE("extrapolate returns a constant series unchanged") {
  std::vector<double> vals(kFullGrid.size(), 0.3125);
  CHECK(extrapolate(kFullGrid, vals, -1.0) == 0.3125);
  std::vector<double> zeros(kFullGrid.size(), 0.0);
  CHECK(extrapolate(kFullGrid, zeros, -1.0) == 0.0);
}

TEST_CASE("extrapolate matches an independent least-squares solve") {
  // 1/(1+zeta) is the bias profile of a simple errors-in-variables slope;
  // it is not a quadratic, so the LS fit is non-trivial.
  std::vector<double> vals;
  for (double z : kFullGrid) vals.push_back(1.0 / (1.0 + z));
  double expected = normal_equations_extrapolate(kFullGrid, vals, -1.0);
  CHECK(extrapolate(kFullGrid, vals, -1.0) == doctest::Approx(expected).epsilon(1e-9));

  std::mt19937_64 eng(2026);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> noisy;
    for (double z : kFullGrid) noisy.push_back(0.5 - 0.2 * z + nd(eng));
    double want = normal_equations_extrapolate(kFullGrid, noisy, -1.0);
    CHECK(extrapolate(kFullGrid, noisy, -1.0) == doctest::Approx(want).epsilon(1e-8));
  }
}

TEST_CASE("extrapolate input validation") {
  CHECK_THROWS_AS(extrapolate({0.0, 0.5}, {1.0, 2.0, 3.0}), InvalidInputError);
  CHECK_THROWS_AS(extrapolate({0.0, 0.5}, {1.0, 2.0}), InvalidInputError);
  CHECK_THROWS_AS(extrapolate({0.0, 0.5, 0.5}, {1.0, 2.0, 3.0}), InvalidInputError);
}

TEST_CASE("SimexGrid validation") {
  SimexGrid g;
  CHECK_NOTHROW(g.validate());
  g.replicates = 0;
  CHECK_THROWS_AS(g.validate(), InvalidInputError);
  g.replicates = 5;
  g.zetas = {0.25, 0.5};
  CHECK_THROWS_AS(g.validate(), InvalidInputError);
  g.zetas = {0.0, 0.5, 0.5};
  CHECK_THROWS_AS(g.validate(), InvalidInputError);
  g.zetas = {0.0, 0.5, 1.0};
  CHECK_NOTHROW(g.validate());
}

TEST_CASE("psd_factor reproduces the input as L L^T") {
  Eigen::MatrixXd sigma(3, 3);
  sigma << 2.0, 0.5, 0.1, 0.5, 1.0, -0.2, 0.1, -0.2, 1.5;
  Eigen::MatrixXd L = psd_factor(sigma);
  CHECK((L * L.transpose() - sigma).lpNorm<Eigen::Infinity>() < 1e-12);

  // Rank-deficient PSD matrix: Cholesky fails, the eigen fallback must work.
  Eigen::VectorXd v(3);
  v << 1.0, -2.0, 0.5;
  Eigen::MatrixXd rank1 = v * v.transpose();
  Eigen::MatrixXd L1 = psd_factor(rank1);
  CHECK((L1 * L1.transpose() - rank1).lpNorm<Eigen::Infinity>() < 1e-10);

  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.3, 0.0, 1.0;
  CHECK_THROWS_AS(psd_factor(asym), InvalidInputError);
  Eigen::MatrixXd neg = -Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(psd_factor(neg), InvalidInputError);
  CHECK_THROWS_AS(psd_factor(Eigen::MatrixXd::Zero(2, 3)), InvalidInputError);
}

TEST_CASE("isotonic projection: hand examples and invariants") {
  CHECK(isotonic_nondecreasing({3.0, 1.0, 2.0}) ==
        std::vector<double>{2.0, 2.0, 2.0});
  CHECK(isotonic_nondecreasing({1.0, 3.0, 2.0}) ==
        std::vector<double>{1.0, 2.5, 2.5});
  CHECK(isotonic_nondecreasing({1.0, 2.0, 3.0}) ==
        std::vector<double>{1.0, 2.0, 3.0});

  std::mt19937_64 eng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int rep = 0; rep < 25; ++rep) {
    std::vector<double> v(30);
    for (double& x : v) x = nd(eng);
    std::vector<double> out = isotonic_nondecreasing(v);
    REQUIRE(out.size() == v.size());
    double sv = 0.0, so = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      sv += v[i];
      so += out[i];
      if (i > 0) CHECK(out[i] >= out[i - 1]);
    }
    CHECK(so == doctest::Approx(sv).epsilon(1e-12));  // PAVA preserves the mean
  }
}

TEST_CASE("pseudo-covariates: exactness at zeta = 0 and zero covariance") {
  std::mt19937_64 eng(11);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd w(6, 3);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = nd(eng);
  Eigen::MatrixXd sigma = 0.25 * Eigen::MatrixXd::Identity(3, 3);

  CHECK(generate_pseudo_covariates(w, sigma, 0.0, 99) == w);
  CHECK(generate_pseudo_covariates(w, Eigen::MatrixXd::Zero(3, 3), 1.5, 99) == w);
  CHECK_THROWS_AS(generate_pseudo_covariates(w, sigma, -0.5, 99), InvalidInputError);
  CHECK_THROWS_AS(
      generate_pseudo_covariates(w, Eigen::MatrixXd::Identity(2, 2), 1.0, 99),
      InvalidInputError);
}

TEST_CASE("pseudo-covariates: determinism and sqrt-zeta scaling") {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(50, 2);
  Eigen::MatrixXd sigma(2, 2);
  sigma << 0.3, 0.1, 0.1, 0.2;

  Eigen::MatrixXd a = generate_pseudo_covariates(w, sigma, 1.0, 424242);
  Eigen::MatrixXd b = generate_pseudo_covariates(w, sigma, 1.0, 424242);
  CHECK(a == b);
  Eigen::MatrixXd c = generate_pseudo_covariates(w, sigma, 1.0, 424243);
  CHECK(a != c);

  // The same key draws the same underlying normals for every zeta, so the
  // perturbation scales exactly like sqrt(zeta).
  Eigen::MatrixXd d4 = generate_pseudo_covariates(w, sigma, 4.0, 424242);
  CHECK((d4 - 2.0 * a).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("pseudo-covariates: sample moments match the target covariance") {
  const Eigen::Index n = 4000;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd sigma(2, 2);
  sigma << 0.5, 0.15, 0.15, 0.25;
  const double zeta = 2.0;
  Eigen::MatrixXd u = generate_pseudo_covariates(w, sigma, zeta, 31337);

  Eigen::RowVector2d mean = u.colwise().mean();
  CHECK(mean.lpNorm<Eigen::Infinity>() < 0.05);
  Eigen::MatrixXd centered = u.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / double(n - 1);
  CHECK((cov - zeta * sigma).lpNorm<Eigen::Infinity>() < 0.05);
}

TEST_CASE("zero measurement error collapses onto the naive fit exactly") {
  Dataset d = ltrctest::make_random_dataset(501, 35, 2, 2);
  PenaltySpec spec;
  spec.family = PenaltyFamily::LASSO;
  ProfileFitOptions opt;

  Coefficients naive = naive_fit(d, spec, opt);

  SimexGrid grid;
  grid.replicates = 3;
  grid.zetas = {0.0, 0.5, 1.0};
  grid.seed = 17;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(2, 2);
  FitResult res = simex_fit(d, sigma, spec, grid, opt);

  // Every replicate sees the same covariates; the per-coordinate series is
  // constant and the extrapolation returns it bit-exactly.
  REQUIRE(res.beta_hat.beta_x.size() == naive.beta_x.size());
  REQUIRE(res.beta_hat.beta_z.size() == naive.beta_z.size());
  for (std::size_t r = 0; r < naive.beta_x.size(); ++r)
    CHECK(res.beta_hat.beta_x[r] == naive.beta_x[r]);
  for (std::size_t r = 0; r < naive.beta_z.size(); ++r)
    CHECK(res.beta_hat.beta_z[r] == naive.beta_z[r]);
  for (Eigen::Index zi = 1; zi < res.beta_by_zeta.rows(); ++zi)
    CHECK(res.beta_by_zeta.row(zi) == res.beta_by_zeta.row(0));
}

TEST_CASE("single-replicate run matches a scripted replay of the stages") {
  Dataset d = ltrctest::make_random_dataset(733, 32, 2, 1);
  PenaltySpec spec;
  spec.family = PenaltyFamily::LASSO;
  ProfileFitOptions opt;

  SimexGrid grid;
  grid.replicates = 1;
  grid.zetas = {0.0, 0.5, 1.0};
  grid.seed = 8080;
  Eigen::MatrixXd sigma = 0.09 * Eigen::MatrixXd::Identity(2, 2);

  FitResult res = simex_fit(d, sigma, spec, grid, opt);

  // Stage-by-stage replay with B = 1: one penalized fit per zeta on the
  // matching pseudo-covariates, then coordinate-wise extrapolation and the
  // majority-vote zero rule.
  const std::size_t n = d.n(), p = d.p();
  Eigen::MatrixXd W(n, d.p_x), Z(n, d.p_z);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d.p_x; ++j) W(i, j) = d.subjects[i].w[j];
    for (std::size_t j = 0; j < d.p_z; ++j) Z(i, j) = d.subjects[i].z[j];
  }
  std::vector<Eigen::VectorXd> betas;
  std::vector<std::size_t> sel_count(p, 0);
  for (std::size_t zi = 0; zi < grid.zetas.size(); ++zi) {
    Eigen::MatrixXd V(n, p);
    V.leftCols(d.p_x) = generate_pseudo_covariates(
        W, sigma, grid.zetas[zi], mix_key(grid.seed, 0, zi));
    V.rightCols(d.p_z) = Z;
    TuningResult tr =
        select_tuning(d, V, spec, default_tuning_grid(d, V), opt);
    betas.push_back(tr.fit.beta);
    for (std::size_t r = 0; r < p; ++r)
      if (tr.fit.beta[Eigen::Index(r)] != 0.0) ++sel_count[r];
  }
  for (std::size_t r = 0; r < p; ++r) {
    std::vector<double> series;
    for (const auto& b : betas) series.push_back(b[Eigen::Index(r)]);
    for (std::size_t zi = 0; zi < series.size(); ++zi)
      CHECK(res.beta_by_zeta(Eigen::Index(zi), Eigen::Index(r)) == series[zi]);
    double val = extrapolate(grid.zetas, series, -1.0);
    if (2 * sel_count[r] < grid.zetas.size()) val = 0.0;
    double got = r < d.p_x ? res.beta_hat.beta_x[r]
                           : res.beta_hat.beta_z[r - d.p_x];
    CHECK(got == doctest::Approx(val).epsilon(1e-12));
    if (val == 0.0) CHECK(got == 0.0);
  }
}

TEST_CASE("selected index lists mirror the nonzero pattern") {
  Dataset d = ltrctest::make_random_dataset(91, 30, 2, 2);
  PenaltySpec spec;
  spec.family = PenaltyFamily::LASSO;
  SimexGrid grid;
  grid.replicates = 2;
  grid.zetas = {0.0, 0.5, 1.0};
  grid.seed = 5;
  FitResult res =
      simex_fit(d, 0.04 * Eigen::MatrixXd::Identity(2, 2), spec, grid, {});

  std::vector<std::size_t> want_x, want_z;
  for (std::size_t r = 0; r < res.beta_hat.beta_x.size(); ++r)
    if (res.beta_hat.beta_x[r] != 0.0) want_x.push_back(r);
  for (std::size_t r = 0; r < res.beta_hat.beta_z.size(); ++r)
    if (res.beta_hat.beta_z[r] != 0.0) want_z.push_back(r);
  CHECK(res.selected_x == want_x);
  CHECK(res.selected_z == want_z);
  CHECK(res.converged_fraction >= 0.0);
  CHECK(res.converged_fraction <= 1.0);
}

TEST_CASE("reconstructed curves are valid and determinism holds across workers") {
  Dataset d = ltrctest::make_random_dataset(404, 32, 2, 1);
  PenaltySpec spec;
  spec.family = PenaltyFamily::LASSO;
  SimexGrid grid;
  grid.replicates = 2;
  grid.zetas = {0.0, 0.5, 1.0};
  grid.seed = 2024;
  Eigen::MatrixXd sigma = 0.09 * Eigen::MatrixXd::Identity(2, 2);

  FitResult r1 = simex_fit(d, sigma, spec, grid, {}, {}, {}, 1);
  FitResult r3 = simex_fit(d, sigma, spec, grid, {}, {}, {}, 3);

  CHECK(r1.beta_hat.concat() == r3.beta_hat.concat());
  CHECK(r1.beta_by_zeta == r3.beta_by_zeta);
  CHECK(r1.lambda0_values == r3.lambda0_values);
  CHECK(r1.trunc_values == r3.trunc_values);

  REQUIRE(r1.lambda0_times.size() == r1.lambda0_values.size());
  REQUIRE(r1.trunc_ages.size() == r1.trunc_values.size());
  REQUIRE(!r1.trunc_values.empty());
  for (std::size_t t = 0; t < r1.trunc_values.size(); ++t) {
    CHECK(r1.trunc_values[t] >= 0.0);
    CHECK(r1.trunc_values[t] <= 1.0);
    if (t > 0) CHECK(r1.trunc_values[t] >= r1.trunc_values[t - 1]);
  }
  // Evaluation grids come from the observed data, so they sit inside the
  // data range.
  for (double t : r1.lambda0_times) CHECK(t >= 0.0);
  CHECK(std::is_sorted(r1.lambda0_times.begin(), r1.lambda0_times.end()));
  CHECK(std::is_sorted(r1.trunc_ages.begin(), r1.trunc_ages.end()));

  // Serialization produces parseable, self-consistent JSON.
  std::string js = r1.to_json();
  CHECK(js.find("\"beta_hat\"") != std::string::npos);
  CHECK(js.find("\"trunc_dist_curve\"") != std::string::npos);
}

TEST_CASE("explicit evaluation grids are honored") {
  Dataset d = ltrctest::make_random_dataset(55, 30, 1, 1);
  PenaltySpec spec;
  spec.family = PenaltyFamily::LASSO;
  SimexGrid grid;
  grid.replicates = 1;
  grid.zetas = {0.0, 0.5, 1.0};
  grid.seed = 9;
  std::vector<double> times = {0.5, 1.0, 2.0};
  std::vector<double> ages = {0.05, 0.2};
  FitResult res = simex_fit(d, 0.04 * Eigen::MatrixXd::Identity(1, 1), spec,
                            grid, {}, times, ages);
  CHECK(res.lambda0_times == times);
  CHECK(res.trunc_ages == ages);
  CHECK(res.lambda0_values.size() == times.size());
  CHECK(res.trunc_values.size() == ages.size());
}

TEST_CASE("dimension mismatch in the error covariance is rejected") {
  Dataset d = ltrctest::make_random_dataset(3, 30, 2, 1);
  PenaltySpec spec;
  SimexGrid grid;
  grid.zetas = {0.0, 0.5, 1.0};
  grid.replicates = 1;
  CHECK_THROWS_AS(
      simex_fit(d, Eigen::MatrixXd::Identity(3, 3), spec, grid, {}),
      InvalidInputError);
}
