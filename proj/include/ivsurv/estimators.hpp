#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ivsurv/learners.hpp"
#include "ivsurv/survival_data.hpp"

namespace ivsurv {

enum class EstimatorKind {
  IfBinary,
  Ipw,
  PlugIn,
  NaiveHazard,
  IfHazard,
  IfContinuous,
  IpwContinuous,
  PlugInContinuous,
};

const char* estimator_name(EstimatorKind kind);
std::optional<EstimatorKind> parse_estimator(const std::string& name);
bool is_continuous(EstimatorKind kind);
bool is_hazard(EstimatorKind kind);

constexpr double kDefaultDenomFloor = 1e-3;

struct EstimateCurve {
  TimeGrid grid;
  std::vector<double> psi;
  std::vector<double> ci_lo, ci_hi;  // empty unless bootstrapped
  double denominator = 0.0;
  // |denominator| < floor: psi is NaN at every t.
  bool weak_instrument = false;
};

/// Influence-function pieces for instrument arm j at grid position t_idx.
double term_M(const SurvivalDataset& data, const NuisanceSet& nu, const TimeGrid& grid, std::size_t i, int j,
              std::size_t t_idx);
double term_Pi(const SurvivalDataset& data, const NuisanceSet& nu, std::size_t i, int j);

EstimateCurve estimate_if_binary(const SurvivalDataset& data, const NuisanceSet& nu, const TimeGrid& grid,
                                 double denom_floor = kDefaultDenomFloor);
EstimateCurve estimate_ipw(const SurvivalDataset& data, const NuisanceSet& nu, const TimeGrid& grid,
                           double denom_floor = kDefaultDenomFloor);
EstimateCurve estimate_plugin(const SurvivalDataset& data, const NuisanceSet& nu, const TimeGrid& grid,
                              double denom_floor = kDefaultDenomFloor);

/// `hz` must come from an a-only fit (cells = 2). Targets the ATE; the
/// denominator is reported as 1.
EstimateCurve estimate_naive_hazard(const SurvivalDataset& data, const HazardSet& hz, const TimeGrid& grid);
EstimateCurve estimate_if_hazard(const SurvivalDataset& data, const HazardSet& hz, const TimeGrid& grid,
                                 double denom_floor = kDefaultDenomFloor);

/// Per-subject hazard influence terms, exposed for testing.
double lambda_naive(const SurvivalDataset& data, const HazardSet& hz, std::size_t i, int a, int t);
double lambda_iv(const SurvivalDataset& data, const HazardSet& hz, std::size_t i, int z, int a, int t);

/// Shifted influence pieces; `plus` selects Z_{+kappa}.
double term_M_continuous(const SurvivalDataset& data, const ContinuousNuisanceSet& nu, const TimeGrid& grid,
                         std::size_t i, bool plus, std::size_t t_idx);
double term_Pi_continuous(const SurvivalDataset& data, const ContinuousNuisanceSet& nu, std::size_t i, bool plus);

EstimateCurve estimate_if_continuous(const SurvivalDataset& data, const ContinuousNuisanceSet& nu, double kappa,
                                     const TimeGrid& grid, double denom_floor = kDefaultDenomFloor);
EstimateCurve estimate_ipw_continuous(const SurvivalDataset& data, const ContinuousNuisanceSet& nu, double kappa,
                                      const TimeGrid& grid, double denom_floor = kDefaultDenomFloor);
EstimateCurve estimate_plugin_continuous(const SurvivalDataset& data, const ContinuousNuisanceSet& nu, double kappa,
                                         const TimeGrid& grid, double denom_floor = kDefaultDenomFloor);

}  // namespace ivsurv
