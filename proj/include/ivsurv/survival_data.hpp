#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ivsurv {

enum class IvKind { Binary, Continuous };

/// One subject: baseline covariates, instrument, treatment, follow-up time
/// min(T, C) and the event indicator R = I(T < C).
struct Observation {
  std::vector<double> x0;
  double z = 0.0;
  int a = 0;
  double time = 0.0;
  int r = 0;
};

struct SurvivalDataset {
  std::vector<Observation> rows;
  std::size_t q = 0;
  int tau = 1;
  IvKind iv_kind = IvKind::Binary;

  std::size_t size() const { return rows.size(); }

  /// n x q covariate matrix.
  Eigen::MatrixXd covariates() const;
};

/// Unit-spaced evaluation points 1..tau.
struct TimeGrid {
  std::vector<int> points;

  static TimeGrid unit(int tau);
  std::size_t size() const { return points.size(); }
  int back() const { return points.back(); }
};

struct RiskCounters {
  int at_risk = 0;
  int event = 0;
  int censored = 0;
};

/// Checks every row invariant plus arm coverage; returns the input unchanged.
SurvivalDataset validate_dataset(SurvivalDataset raw);

/// Floors each follow-up time; anything that floors to 0 is kept at 1.
SurvivalDataset discretize_times(SurvivalDataset data);

/// I(T > t) when it is observable, nullopt when the subject was censored at
/// or before t.
std::optional<int> survival_indicator(const Observation& obs, int t);

/// Risk-set indicators at grid point k (Y_0 = 1, so everyone is at risk at k = 1).
RiskCounters risk_counters(const Observation& obs, int k);

SurvivalDataset subset(const SurvivalDataset& data, std::span<const std::size_t> rows);

/// Reads `x1,...,xq,z,a,time,event`. The dataset is validated before return.
SurvivalDataset read_csv(std::istream& in, int tau, IvKind kind, const std::string& source = "<csv>");
SurvivalDataset read_csv_file(const std::string& path, int tau, IvKind kind);
void write_csv(std::ostream& out, const SurvivalDataset& data);

}  // namespace ivsurv
