#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ivsurv/crossfit.hpp"
#include "ivsurv/estimators.hpp"
#include "ivsurv/rng.hpp"
#include "ivsurv/survival_data.hpp"

namespace ivsurv {

enum class Family { CoxPH, AdditiveHazards };
enum class Censoring { IndicatorLogistic, UniformIndep, GapUniform, Fixed };
enum class Specification { Correct, WrongOmegaDelta, WrongPiMu, WrongPiOmega, WrongPiOmegaMu };

const char* family_name(Family f);
const char* censoring_name(Censoring c);
const char* specification_name(Specification s);
std::optional<Family> parse_family(const std::string& s);
std::optional<Censoring> parse_censoring(const std::string& s);
std::optional<Specification> parse_specification(const std::string& s);

struct DgpConfig {
  Family family = Family::CoxPH;
  IvKind iv_kind = IvKind::Binary;
  std::vector<double> kappa_coef{-0.5, -0.5, 1.0, -1.0, -0.7};
  std::vector<double> kappa_tilde{-1.0, -1.0};
  std::vector<double> alpha_x{0.5, 0.5, -1.0, -1.0, 1.5};
  double alpha_0 = -0.1;
  double alpha_z = 2.0;
  double alpha_u = -0.3;
  std::vector<double> beta_x{0.5, 0.5, -0.5, -0.5, -0.5};
  double beta_a = 1.5;
  double beta_u = 0.5;
  double c1 = 0.0005;  // baseline h0(t) = c1 t + c2 t^2
  double c2 = 0.0003;
  std::vector<double> gamma_x{0.3, 0.3, -0.3, -0.3, -0.3};
  double gamma_z = -0.5;
  double gamma_a = 0.5;
  Censoring censoring = Censoring::IndicatorLogistic;
  double uniform_lo = 10.0, uniform_hi = 100.0;
  double gap_lo = -10.0, gap_hi = 50.0;
  double fixed_time = 20.0;
  bool discretize = false;
  std::size_t n = 1000;
  int tau = 30;
  std::uint64_t seed = 0;

  std::size_t q() const { return alpha_x.size(); }
  double t_max() const { return 10.0 * tau; }
  void validate() const;

  /// Binary instrument, Cox outcome, logistic censoring indicator.
  static DgpConfig cox_indicator();
  /// Cox outcome under censoring scenario 1, 2 or 3 with floored times.
  static DgpConfig cox_scenario(int scenario);
  static DgpConfig additive_binary();
  static DgpConfig additive_continuous();
};

/// Cumulative hazard H(t) = c1 t^2 / 2 + c2 t^3 / 3 scaled by `mult`, plus
/// `rate` * t.
struct CumulativeHazard {
  double c1 = 0.0, c2 = 0.0, mult = 1.0, rate = 0.0;
  double operator()(double t) const { return mult * (0.5 * c1 * t * t + c2 * t * t * t / 3.0) + rate * t; }
};

/// t with H(t) = target by bisection; t_max when H(t_max) < target.
double invert_cumulative_hazard(double target, const std::function<double(double)>& cumulative, double t_max);
double invert_cumulative_hazard(double target, const CumulativeHazard& H, double t_max);
/// Same, integrating a hazard rate numerically.
double invert_hazard_rate(double target, const std::function<double(double)>& hazard, double t_max);

/// Cumulative hazard of a subject under treatment a.
CumulativeHazard subject_hazard(const DgpConfig& cfg, std::span<const double> x, int a, double u);

struct LatentRecord {
  std::vector<double> T, C, U, V;
  std::vector<std::array<int, 2>> a_potential;  // binary instrument: A^{Z=0}, A^{Z=1}
};

struct SimDraw {
  SurvivalDataset data;
  LatentRecord latent;
};

SimDraw sample_cox(const DgpConfig& cfg, Rng& rng);
SimDraw sample_additive(const DgpConfig& cfg, Rng& rng);
SimDraw sample_dgp(const DgpConfig& cfg, Rng& rng);

struct CensorOutcome {
  double time = 0.0;
  int r = 0;
  double c = 0.0;  // NaN in indicator mode
};

/// Covariates, instrument and treatment are used only by the logistic
/// indicator mode.
CensorOutcome apply_censoring(double T, const DgpConfig& cfg, Rng& rng, std::span<const double> x = {},
                              double z = 0.0, int a = 0);

std::array<double, 5> kang_schafer(std::span<const double> x);
Eigen::MatrixXd kang_schafer(const Eigen::MatrixXd& x);

/// Covariates for each nuisance group under a misspecification pattern.
FeatureSet specification_features(const SurvivalDataset& data, Specification spec);

struct OracleCurve {
  std::vector<double> late;
  std::vector<double> ate;
  double complier_fraction = 0.0;
  std::size_t M = 0;
};

/// Brute-force truth on `grid`. Continuous instruments define compliers by
/// A^{Z+kappa} > A^{Z-kappa}. With cfg.discretize the potential times are
/// floored as in discretize_times.
OracleCurve oracle_late(const DgpConfig& cfg, const TimeGrid& grid, std::size_t M, std::uint64_t seed,
                        double kappa = 0.5);

struct Metrics {
  double bias = 0.0;
  double rmse = 0.0;
};

Metrics bias_rmse(const std::vector<std::vector<double>>& estimates, const std::vector<double>& truth, std::size_t n);

struct EstimatorSummary {
  EstimatorKind kind = EstimatorKind::IfBinary;
  Metrics metrics;
  int failed = 0;
  std::vector<double> mean_curve;
  std::vector<std::vector<double>> replicates;
};

struct SimReport {
  std::string scenario;
  Specification specification = Specification::Correct;
  std::size_t n = 0;
  int I = 0;
  std::vector<int> grid;
  std::vector<double> truth;
  std::vector<EstimatorSummary> entries;

  const EstimatorSummary& entry(EstimatorKind kind) const;
};

struct StudyConfig {
  DgpConfig dgp;
  std::string scenario = "default";
  Specification specification = Specification::Correct;
  std::vector<EstimatorKind> estimators{EstimatorKind::IfBinary, EstimatorKind::Ipw, EstimatorKind::PlugIn};
  int I = 10;
  EstimationSettings settings;  // kind is overwritten per estimator
  std::size_t oracle_M = 1000000;
  std::uint64_t seed = 0;
  // Precomputed truth; skips the oracle when set.
  std::optional<std::vector<double>> truth;
};

SimReport run_study(const StudyConfig& cfg);

void write_report_csv(std::ostream& out, const std::vector<SimReport>& reports);
void write_curve_csv(std::ostream& out, const SimReport& report, EstimatorKind kind);
std::string report_json(const std::vector<SimReport>& reports);

}  // namespace ivsurv
