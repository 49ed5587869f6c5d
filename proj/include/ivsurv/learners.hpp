#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ivsurv/survival_data.hpp"

namespace ivsurv {

enum class LearnerMethod { LogisticParametric, TreeEnsemble };
enum class DensityMethod { ConditionalGaussian, KernelResidual };

/// Discrete hazards are either one person-period regression pooled over the
/// strata, with stratum and grid point as features, or a separate regression
/// per stratum and k.
enum class HazardFit { Pooled, PerTime };

struct ForestParams {
  int n_trees = 500;
  int min_node = 10;
  int mtry = 0;  // 0 -> ceil(sqrt(p))
  double subsample = 0.632;
  int max_bins = 64;
};

struct LearnerConfig {
  LearnerMethod method = LearnerMethod::LogisticParametric;
  double trunc_eps = 0.01;
  // Truncation applied to h and g. Unset means trunc_eps.
  std::optional<double> hazard_trunc_eps;
  // Truncation applied to the outcome regressions mu. Unset means trunc_eps.
  std::optional<double> outcome_trunc_eps;
  HazardFit hazard_fit = HazardFit::Pooled;
  ForestParams forest;
  DensityMethod density = DensityMethod::ConditionalGaussian;
  std::uint64_t seed = 0;

  double hazard_eps() const { return hazard_trunc_eps.value_or(trunc_eps); }
  double outcome_eps() const { return outcome_trunc_eps.value_or(trunc_eps); }
  void validate() const;
};

/// A fitted probability model; predictions are clamped to
/// [trunc_eps, 1 - trunc_eps].
class BinaryModel {
 public:
  struct Impl;

  BinaryModel();
  explicit BinaryModel(std::shared_ptr<const Impl> impl);

  static BinaryModel constant(double p, double trunc_eps);

  LearnerMethod method() const;
  std::size_t feature_dim() const;
  bool is_constant() const;

  double predict(std::span<const double> x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  /// Logistic coefficients on the original feature scale, intercept first.
  /// Empty for other model kinds.
  Eigen::VectorXd coefficients() const;

 private:
  std::shared_ptr<const Impl> impl_;
};

BinaryModel fit_binary_model(const Eigen::MatrixXd& features, std::span<const int> labels,
                             const LearnerConfig& config, std::uint64_t seed = 0);

/// Covariate matrices fed to each nuisance group. The misspecification
/// scenarios swap individual groups for transformed covariates. Hazards use
/// `mu` for h and `omega` for g.
struct FeatureSet {
  Eigen::MatrixXd mu;
  Eigen::MatrixXd omega;
  Eigen::MatrixXd pi;
  Eigen::MatrixXd delta;

  static FeatureSet uniform(const Eigen::MatrixXd& x);
  FeatureSet rows(std::span<const std::size_t> idx) const;
  std::size_t size() const { return static_cast<std::size_t>(mu.rows()); }
};

struct NuisanceSet {
  std::size_t n = 0;
  std::size_t n_times = 0;
  double trunc_eps = 0.01;
  std::vector<double> mu_;     // [(i * T + t) * 4 + z * 2 + a]
  std::vector<double> omega_;  // [i * 4 + z * 2 + a]
  std::vector<double> pi_;     // [i * 2 + z], P(A = 1 | Z = z, X)
  std::vector<double> delta_;  // [i * 2 + z]

  void resize(std::size_t n_rows, std::size_t times);
  double& mu(std::size_t i, std::size_t t, int z, int a) { return mu_[(i * n_times + t) * 4 + z * 2 + a]; }
  double mu(std::size_t i, std::size_t t, int z, int a) const { return mu_[(i * n_times + t) * 4 + z * 2 + a]; }
  double& omega(std::size_t i, int z, int a) { return omega_[i * 4 + z * 2 + a]; }
  double omega(std::size_t i, int z, int a) const { return omega_[i * 4 + z * 2 + a]; }
  double& pi(std::size_t i, int z) { return pi_[i * 2 + z]; }
  double pi(std::size_t i, int z) const { return pi_[i * 2 + z]; }
  double& delta(std::size_t i, int z) { return delta_[i * 2 + z]; }
  double delta(std::size_t i, int z) const { return delta_[i * 2 + z]; }
};

/// Discrete hazards and their product-limit curves. Index k runs over grid
/// points 1..tau stored at position k - 1. `cells` is 4 for (z, a) strata and
/// 2 for the a-only fit used by the naive estimator (z index fixed at 0).
struct HazardSet {
  std::size_t n = 0;
  std::size_t n_times = 0;
  int cells = 4;
  std::vector<double> h_, g_, S_, G_;  // [(i * T + k - 1) * cells + z * 2 + a]
  std::vector<double> pi_;             // [i * 2 + z]; a-only fit stores P(A = 1 | X) at z = 0
  std::vector<double> delta_;          // [i * 2 + z]

  void resize(std::size_t n_rows, std::size_t times, int n_cells);
  std::size_t at(std::size_t i, int k, int z, int a) const {
    return (i * n_times + static_cast<std::size_t>(k - 1)) * cells + z * 2 + a;
  }
  double h(std::size_t i, int k, int z, int a) const { return h_[at(i, k, z, a)]; }
  double g(std::size_t i, int k, int z, int a) const { return g_[at(i, k, z, a)]; }
  /// S and G at k = 0 are 1.
  double S(std::size_t i, int k, int z, int a) const { return k == 0 ? 1.0 : S_[at(i, k, z, a)]; }
  double G(std::size_t i, int k, int z, int a) const { return k == 0 ? 1.0 : G_[at(i, k, z, a)]; }
  double pi(std::size_t i, int z) const { return pi_[i * 2 + z]; }
  double delta(std::size_t i, int z) const { return delta_[i * 2 + z]; }

  /// Rebuilds S and G from h and g by the product recursion.
  void rebuild_products();
};

/// Nuisances for the continuous-instrument estimator. Shift index s is
/// 0 for Z_{-kappa}, 1 for the observed Z and 2 for Z_{+kappa}, with the
/// shifted points clamped to the empirical support.
struct ContinuousNuisanceSet {
  std::size_t n = 0;
  std::size_t n_times = 0;
  double kappa = 0.0;
  double z_min = 0.0;
  double z_max = 0.0;
  double trunc_eps = 0.01;
  std::vector<double> mu_;       // [((i * T + t) * 3 + s) * 2 + a]
  std::vector<double> pi_;       // [i * 3 + s]
  std::vector<double> omega_;    // [i * 2 + a], at the observed Z
  std::vector<double> density_;  // [i * 3 + s], at Z - kappa, Z, Z + kappa (unclamped)
  std::vector<char> shift_minus_, shift_plus_;  // whether the shift stays inside the support

  void resize(std::size_t n_rows, std::size_t times);
  double& mu(std::size_t i, std::size_t t, int s, int a) { return mu_[((i * n_times + t) * 3 + s) * 2 + a]; }
  double mu(std::size_t i, std::size_t t, int s, int a) const { return mu_[((i * n_times + t) * 3 + s) * 2 + a]; }
  double& pi(std::size_t i, int s) { return pi_[i * 3 + s]; }
  double pi(std::size_t i, int s) const { return pi_[i * 3 + s]; }
  double& omega(std::size_t i, int a) { return omega_[i * 2 + a]; }
  double omega(std::size_t i, int a) const { return omega_[i * 2 + a]; }
  double& density(std::size_t i, int s) { return density_[i * 3 + s]; }
  double density(std::size_t i, int s) const { return density_[i * 3 + s]; }
};

struct NuisanceOptions {
  // A = Z structurally in the Z = 0 arm: pi_0 is fixed at 0 and the
  // (Z = 0, A = 1) stratum is never fit.
  bool one_sided = false;
};

/// Fits on `train` (covariates `train_x`) and predicts for rows described by
/// `eval_x`.
NuisanceSet fit_nuisance_set(const SurvivalDataset& train, const FeatureSet& train_x,
                             const FeatureSet& eval_x, const TimeGrid& grid,
                             const LearnerConfig& config, NuisanceOptions opts = {});
NuisanceSet fit_nuisance_set(const SurvivalDataset& data, const TimeGrid& grid,
                             const LearnerConfig& config, NuisanceOptions opts = {});

/// `by_instrument` = false gives the a-only strata of the naive estimator.
HazardSet fit_hazard_set(const SurvivalDataset& train, const FeatureSet& train_x,
                         const FeatureSet& eval_x, const TimeGrid& grid, const LearnerConfig& config,
                         bool by_instrument = true, NuisanceOptions opts = {});
HazardSet fit_hazard_set(const SurvivalDataset& data, const TimeGrid& grid,
                         const LearnerConfig& config, bool by_instrument = true,
                         NuisanceOptions opts = {});

/// Conditional density of a continuous instrument given covariates.
class IvDensityModel {
 public:
  double operator()(double z, std::span<const double> x) const;
  double sigma() const { return sigma_; }
  double bandwidth() const { return bandwidth_; }

 private:
  friend IvDensityModel fit_iv_density_model(const Eigen::MatrixXd&, std::span<const double>,
                                             const LearnerConfig&);
  Eigen::VectorXd coef_;  // intercept first
  double sigma_ = 1.0;
  double bandwidth_ = 0.0;
  double floor_ = 0.01;
  DensityMethod method_ = DensityMethod::ConditionalGaussian;
  std::vector<double> residuals_;
};

IvDensityModel fit_iv_density_model(const Eigen::MatrixXd& x, std::span<const double> z,
                                    const LearnerConfig& config);

/// Density values at Z - kappa, Z, Z + kappa for every row of `data`; only
/// the density slots of the returned set are populated.
ContinuousNuisanceSet fit_iv_density(const SurvivalDataset& data, double kappa,
                                     const LearnerConfig& config);

/// Full continuous-instrument nuisance set. z_min / z_max come from `train`
/// unless given.
ContinuousNuisanceSet fit_continuous_nuisance_set(const SurvivalDataset& train,
                                                  const FeatureSet& train_x,
                                                  const SurvivalDataset& eval,
                                                  const FeatureSet& eval_x, const TimeGrid& grid,
                                                  double kappa, const LearnerConfig& config,
                                                  std::optional<std::pair<double, double>> support = {});

/// Empirical support of z, checked against kappa.
std::pair<double, double> instrument_support(const SurvivalDataset& data, double kappa);

}  // namespace ivsurv
