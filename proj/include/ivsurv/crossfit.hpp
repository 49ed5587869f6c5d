#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ivsurv/estimators.hpp"
#include "ivsurv/learners.hpp"
#include "ivsurv/survival_data.hpp"

namespace ivsurv {

struct FoldAssignment {
  std::size_t n = 0;
  int K = 2;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;

  std::vector<std::size_t> members(int fold) const;
  std::vector<std::size_t> complement(int fold) const;
};

FoldAssignment make_folds(std::size_t n, int K, std::uint64_t seed);

/// Replaces the learner-based binary nuisance fit; receives the training and
/// evaluation rows of a fold.
using NuisanceOverride = std::function<NuisanceSet(const SurvivalDataset& train, const SurvivalDataset& eval)>;

struct EstimationSettings {
  EstimatorKind kind = EstimatorKind::IfBinary;
  double kappa = 0.5;
  // K >= 2 cross-fits; K = 1 fits and evaluates on the full sample.
  int K = 2;
  LearnerConfig learner;
  NuisanceOptions nuisance;
  double denom_floor = kDefaultDenomFloor;
  NuisanceOverride override_fit;
};

struct CrossfitResult {
  EstimateCurve curve;
  std::vector<EstimateCurve> folds;
};

/// Fits nuisances on `train` and evaluates the estimator on `eval`.
/// `support` fixes z_min / z_max for continuous instruments.
EstimateCurve estimate_split(const SurvivalDataset& train, const FeatureSet& train_x, const SurvivalDataset& eval,
                             const FeatureSet& eval_x, const TimeGrid& grid, const EstimationSettings& settings,
                             std::optional<std::pair<double, double>> support = {});

/// Averages the K per-fold curves. `features` defaults to the dataset's
/// covariates for every nuisance group.
CrossfitResult crossfit_curve(const SurvivalDataset& data, const TimeGrid& grid, const EstimationSettings& settings,
                              std::uint64_t seed, const std::optional<FeatureSet>& features = {});

/// Dispatches on settings.K: cross-fitting, or a single full-sample fit.
EstimateCurve run_pipeline(const SurvivalDataset& data, const TimeGrid& grid, const EstimationSettings& settings,
                           std::uint64_t seed, const std::optional<FeatureSet>& features = {});

struct BootstrapConfig {
  int B = 500;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  void validate() const;
};

struct BootstrapResult {
  EstimateCurve curve;  // point estimate from the original sample, with bands
  std::vector<std::vector<double>> replicates;  // successful resamples only
  int failed = 0;
};

/// Pointwise percentile band from replicate curves.
std::pair<std::vector<double>, std::vector<double>> percentile_band(const std::vector<std::vector<double>>& reps,
                                                                    double alpha);

BootstrapResult bootstrap_curve(const SurvivalDataset& data, const TimeGrid& grid, const EstimationSettings& settings,
                                const BootstrapConfig& cfg, std::uint64_t seed);

}  // namespace ivsurv
