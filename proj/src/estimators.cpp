#include "ivsurv/estimators.hpp"

#include <cmath>
#include <limits>

#include "ivsurv/error.hpp"

namespace ivsurv {

namespace {

constexpr EstimatorKind kAllKinds[] = {
    EstimatorKind::IfBinary,   EstimatorKind::Ipw,          EstimatorKind::PlugIn,
    EstimatorKind::NaiveHazard, EstimatorKind::IfHazard,    EstimatorKind::IfContinuous,
    EstimatorKind::IpwContinuous, EstimatorKind::PlugInContinuous,
};

// Y_t where it is multiplied by r = 1; zero otherwise so the product vanishes.
double observed_y(const Observation& o, int t) {
  if (o.r != 1) return 0.0;
  return static_cast<double>(survival_indicator(o, t).value_or(0));
}

void require_binary(const SurvivalDataset& data) {
  if (data.iv_kind != IvKind::Binary)
    throw Error(ErrorCode::IncompatibleInstrument, "estimator requires a binary instrument");
}

void require_rows(std::size_t data_n, std::size_t nu_n) {
  if (data_n != nu_n) throw Error(ErrorCode::DimensionMismatch, "nuisance rows do not match the data");
}

EstimateCurve finish(const TimeGrid& grid, std::vector<double> num, double den, double floor) {
  EstimateCurve c;
  c.grid = grid;
  c.denominator = den;
  c.weak_instrument = !(std::abs(den) >= floor);
  c.psi.resize(num.size());
  for (std::size_t t = 0; t < num.size(); ++t)
    c.psi[t] = c.weak_instrument ? std::numeric_limits<double>::quiet_NaN() : num[t] / den;
  return c;
}

// indicator-guarded ratio: a zero indicator never meets a zero denominator
double guarded(bool on, double num, double den) { return on ? num / den : 0.0; }

void check_kappa(const ContinuousNuisanceSet& nu, double kappa) {
  if (!(kappa > 0.0)) throw Error(ErrorCode::KappaNonPositive, "kappa must be positive");
  if (!(2.0 * kappa < nu.z_max - nu.z_min))
    throw Error(ErrorCode::KappaNonPositive, "kappa must satisfy 2*kappa < z_max - z_min");
  if (kappa != nu.kappa) throw Error(ErrorCode::DimensionMismatch, "kappa differs from the nuisance fit");
}

}  // namespace

const char* estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::IfBinary: return "if";
    case EstimatorKind::Ipw: return "ipw";
    case EstimatorKind::PlugIn: return "plugin";
    case EstimatorKind::NaiveHazard: return "naive_hazard";
    case EstimatorKind::IfHazard: return "if_hazard";
    case EstimatorKind::IfContinuous: return "if_continuous";
    case EstimatorKind::IpwContinuous: return "ipw_continuous";
    case EstimatorKind::PlugInContinuous: return "plugin_continuous";
  }
  return "?";
}

std::optional<EstimatorKind> parse_estimator(const std::string& name) {
  for (EstimatorKind k : kAllKinds)
    if (name == estimator_name(k)) return k;
  return std::nullopt;
}

bool is_continuous(EstimatorKind kind) {
  return kind == EstimatorKind::IfContinuous || kind == EstimatorKind::IpwContinuous ||
         kind == EstimatorKind::PlugInContinuous;
}

bool is_hazard(EstimatorKind kind) { return kind == EstimatorKind::NaiveHazard || kind == EstimatorKind::IfHazard; }

double term_M(const SurvivalDataset& data, const NuisanceSet& nu, const TimeGrid& grid, std::size_t i, int j,
              std::size_t t_idx) {
  const Observation& o = data.rows[i];
  const double mu1 = nu.mu(i, t_idx, j, 1), mu0 = nu.mu(i, t_idx, j, 0), p = nu.pi(i, j);
  const double plug = mu1 * p + mu0 * (1.0 - p);
  if (static_cast<int>(o.z) != j) return plug;
  const double y = observed_y(o, grid.points[t_idx]);
  const double a = o.a;
  double c1 = mu1 * (a - p);
  if (o.r == 1 && o.a == 1) c1 += (y - mu1) / nu.omega(i, j, 1);
  double c0 = mu0 * ((1.0 - a) - (1.0 - p));
  if (o.r == 1 && o.a == 0) c0 += (y - mu0) / nu.omega(i, j, 0);
  return plug + (c1 + c0) / nu.delta(i, j);
}

double term_Pi(const SurvivalDataset& data, const NuisanceSet& nu, std::size_t i, int j) {
  const Observation& o = data.rows[i];
  const double p = nu.pi(i, j);
  if (static_cast<int>(o.z) != j) return p;
  return (o.a - p) / nu.delta(i, j) + p;
}

EstimateCurve estimate_if_binary(const SurvivalDataset& data, const NuisanceSet& nu, const TimeGrid& grid,
                                 double denom_floor) {
  require_binary(data);
  require_rows(data.size(), nu.n);
  const std::size_t n = data.size();
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) den += term_Pi(data, nu, i, 1) - term_Pi(data, nu, i, 0);
  den /= static_cast<double>(n);
  std::vector<double> num(grid.size(), 0.0);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += term_M(data, nu, grid, i, 1, t) - term_M(data, nu, grid, i, 0, t);
    num[t] = s / static_cast<double>(n);
  }
  return finish(grid, std::move(num), den, denom_floor);
}

EstimateCurve estimate_ipw(const SurvivalDataset& data, const NuisanceSet& nu, const TimeGrid& grid,
                           double denom_floor) {
  require_binary(data);
  require_rows(data.size(), nu.n);
  const std::size_t n = data.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  // arm weights P_n(A Z / delta_1) etc. do not depend on t
  double w[2][2] = {{0, 0}, {0, 0}};  // [z][a]
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Observation& o = data.rows[i];
    const int z = static_cast<int>(o.z);
    w[z][o.a] += inv_n / nu.delta(i, z);
    den += inv_n * (guarded(o.a == 1 && z == 1, 1.0, nu.delta(i, 1)) - guarded(o.a == 1 && z == 0, 1.0, nu.delta(i, 0)));
  }

  std::vector<double> num(grid.size(), 0.0);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double m[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < n; ++i) {
      const Observation& o = data.rows[i];
      if (o.r != 1) continue;
      const int z = static_cast<int>(o.z);
      const double y = observed_y(o, grid.points[t]);
      if (y == 0.0) continue;
      const double pa = o.a == 1 ? nu.pi(i, z) : 1.0 - nu.pi(i, z);
      m[z][o.a] += inv_n * y / (nu.omega(i, z, o.a) * pa * nu.delta(i, z));
    }
    num[t] = m[1][1] * w[1][1] + m[1][0] * w[1][0] - (m[0][1] * w[0][1] + m[0][0] * w[0][0]);
  }
  return finish(grid, std::move(num), den, denom_floor);
}

EstimateCurve estimate_plugin(const SurvivalDataset& data, const NuisanceSet& nu, const TimeGrid& grid,
                              double denom_floor) {
  require_binary(data);
  require_rows(data.size(), nu.n);
  const std::size_t n = data.size();
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) den += nu.pi(i, 1) - nu.pi(i, 0);
  den /= static_cast<double>(n);
  std::vector<double> num(grid.size(), 0.0);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p1 = nu.pi(i, 1), p0 = nu.pi(i, 0);
      s += nu.mu(i, t, 1, 1) * p1 + nu.mu(i, t, 1, 0) * (1.0 - p1);
      s -= nu.mu(i, t, 0, 1) * p0 + nu.mu(i, t, 0, 0) * (1.0 - p0);
    }
    num[t] = s / static_cast<double>(n);
  }
  return finish(grid, std::move(num), den, denom_floor);
}

namespace {

// Hazard-martingale sum shared by both hazard estimators; pz is the
// treatment probability for arm a.
double martingale_sum(const Observation& o, const HazardSet& hz, std::size_t i, int z, int a, int t, double pz) {
  const double st = hz.S(i, t, z, a);
  double sum = 0.0;
  for (int k = 1; k <= t; ++k) {
    const RiskCounters rc = risk_counters(o, k);
    if (!rc.at_risk) break;
    sum += st / hz.S(i, k, z, a) / (pz * hz.G(i, k - 1, z, a)) * (rc.event - hz.h(i, k, z, a));
  }
  return sum;
}

void check_grid(const HazardSet& hz, const TimeGrid& grid) {
  if (grid.size() != 0 && static_cast<std::size_t>(grid.back()) > hz.n_times)
    throw Error(ErrorCode::DimensionMismatch, "grid extends beyond the fitted hazards");
}

}  // namespace

double lambda_naive(const SurvivalDataset& data, const HazardSet& hz, std::size_t i, int a, int t) {
  const Observation& o = data.rows[i];
  const double p1 = hz.pi(i, 0);
  const double pa = a == 1 ? p1 : 1.0 - p1;
  double v = hz.S(i, t, 0, a);
  if (o.a == a) v -= martingale_sum(o, hz, i, 0, a, t, pa);
  return v;
}

double lambda_iv(const SurvivalDataset& data, const HazardSet& hz, std::size_t i, int z, int a, int t) {
  const Observation& o = data.rows[i];
  const double p1 = hz.pi(i, z);
  const double pa = a == 1 ? p1 : 1.0 - p1;
  const double st = hz.S(i, t, z, a);
  double v = st * pa;
  if (static_cast<int>(o.z) != z) return v;
  const double inv_delta = 1.0 / hz.delta(i, z);
  v += inv_delta * st * ((o.a == a ? 1.0 : 0.0) - pa);
  // pa times the stratum martingale
  if (o.a == a) v -= inv_delta * martingale_sum(o, hz, i, z, a, t, 1.0);
  return v;
}

EstimateCurve estimate_naive_hazard(const SurvivalDataset& data, const HazardSet& hz, const TimeGrid& grid) {
  require_rows(data.size(), hz.n);
  if (hz.cells != 2) throw Error(ErrorCode::DimensionMismatch, "naive estimator needs an a-only hazard fit");
  check_grid(hz, grid);
  const std::size_t n = data.size();
  std::vector<double> num(grid.size(), 0.0);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += lambda_naive(data, hz, i, 1, grid.points[t]) - lambda_naive(data, hz, i, 0, grid.points[t]);
    num[t] = s / static_cast<double>(n);
  }
  return finish(grid, std::move(num), 1.0, 0.0);
}

EstimateCurve estimate_if_hazard(const SurvivalDataset& data, const HazardSet& hz, const TimeGrid& grid,
                                 double denom_floor) {
  require_binary(data);
  require_rows(data.size(), hz.n);
  if (hz.cells != 4) throw Error(ErrorCode::DimensionMismatch, "IV hazard estimator needs (z, a) strata");
  check_grid(hz, grid);
  const std::size_t n = data.size();
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Observation& o = data.rows[i];
    for (int j = 0; j < 2; ++j) {
      const double p = hz.pi(i, j);
      const double pij = static_cast<int>(o.z) == j ? (o.a - p) / hz.delta(i, j) + p : p;
      den += j == 1 ? pij : -pij;
    }
  }
  den /= static_cast<double>(n);
  std::vector<double> num(grid.size(), 0.0);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    const int tt = grid.points[t];
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < 2; ++a) s += lambda_iv(data, hz, i, 1, a, tt) - lambda_iv(data, hz, i, 0, a, tt);
    num[t] = s / static_cast<double>(n);
  }
  return finish(grid, std::move(num), den, denom_floor);
}

namespace {

// density ratio delta(Z -+ kappa) / delta(Z); 1 when the shift is clamped
double shift_ratio(const ContinuousNuisanceSet& nu, std::size_t i, bool plus) {
  const bool shifted = plus ? nu.shift_plus_[i] : nu.shift_minus_[i];
  if (!shifted) return 1.0;
  return nu.density(i, plus ? 0 : 2) / nu.density(i, 1);
}

void require_continuous(const SurvivalDataset& data, const ContinuousNuisanceSet& nu) {
  if (data.iv_kind != IvKind::Continuous)
    throw Error(ErrorCode::IncompatibleInstrument, "estimator requires a continuous instrument");
  require_rows(data.size(), nu.n);
}

}  // namespace

double term_M_continuous(const SurvivalDataset& data, const ContinuousNuisanceSet& nu, const TimeGrid& grid,
                         std::size_t i, bool plus, std::size_t t_idx) {
  const Observation& o = data.rows[i];
  const int s = plus ? 2 : 0;
  const double ps = nu.pi(i, s);
  const double plug = nu.mu(i, t_idx, s, 1) * ps + nu.mu(i, t_idx, s, 0) * (1.0 - ps);
  const double y = observed_y(o, grid.points[t_idx]);
  const double a = o.a;
  const double p = nu.pi(i, 1);
  const double mu1 = nu.mu(i, t_idx, 1, 1), mu0 = nu.mu(i, t_idx, 1, 0);
  double corr = mu1 * (a - p) + mu0 * ((1.0 - a) - (1.0 - p));
  if (o.r == 1) corr += (y - (o.a == 1 ? mu1 : mu0)) / nu.omega(i, o.a);
  return plug + shift_ratio(nu, i, plus) * corr;
}

double term_Pi_continuous(const SurvivalDataset& data, const ContinuousNuisanceSet& nu, std::size_t i, bool plus) {
  const Observation& o = data.rows[i];
  return (o.a - nu.pi(i, 1)) * shift_ratio(nu, i, plus) + nu.pi(i, plus ? 2 : 0);
}

EstimateCurve estimate_if_continuous(const SurvivalDataset& data, const ContinuousNuisanceSet& nu, double kappa,
                                     const TimeGrid& grid, double denom_floor) {
  check_kappa(nu, kappa);
  require_continuous(data, nu);
  const std::size_t n = data.size();
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    den += term_Pi_continuous(data, nu, i, true) - term_Pi_continuous(data, nu, i, false);
  den /= static_cast<double>(n);
  std::vector<double> num(grid.size(), 0.0);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += term_M_continuous(data, nu, grid, i, true, t) - term_M_continuous(data, nu, grid, i, false, t);
    num[t] = s / static_cast<double>(n);
  }
  return finish(grid, std::move(num), den, denom_floor);
}

EstimateCurve estimate_ipw_continuous(const SurvivalDataset& data, const ContinuousNuisanceSet& nu, double kappa,
                                      const TimeGrid& grid, double denom_floor) {
  check_kappa(nu, kappa);
  require_continuous(data, nu);
  const std::size_t n = data.size();
  std::vector<double> w(n);
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = shift_ratio(nu, i, true) - shift_ratio(nu, i, false);
    den += w[i] * data.rows[i].a;
  }
  den /= static_cast<double>(n);
  std::vector<double> num(grid.size(), 0.0);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Observation& o = data.rows[i];
      if (o.r != 1) continue;
      s += w[i] * observed_y(o, grid.points[t]) / nu.omega(i, o.a);
    }
    num[t] = s / static_cast<double>(n);
  }
  return finish(grid, std::move(num), den, denom_floor);
}

EstimateCurve estimate_plugin_continuous(const SurvivalDataset& data, const ContinuousNuisanceSet& nu, double kappa,
                                         const TimeGrid& grid, double denom_floor) {
  check_kappa(nu, kappa);
  require_continuous(data, nu);
  const std::size_t n = data.size();
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) den += nu.pi(i, 2) - nu.pi(i, 0);
  den /= static_cast<double>(n);
  std::vector<double> num(grid.size(), 0.0);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (int sh : {2, 0}) {
        const double p = nu.pi(i, sh);
        const double v = nu.mu(i, t, sh, 1) * p + nu.mu(i, t, sh, 0) * (1.0 - p);
        s += sh == 2 ? v : -v;
      }
    num[t] = s / static_cast<double>(n);
  }
  return finish(grid, std::move(num), den, denom_floor);
}

}  // namespace ivsurv
