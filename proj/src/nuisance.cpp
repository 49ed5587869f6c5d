#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ivsurv/error.hpp"
#include "ivsurv/learners.hpp"
#include "ivsurv/parallel.hpp"
#include "ivsurv/rng.hpp"

namespace ivsurv {

namespace {

using Index = Eigen::Index;

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = x.row(static_cast<Index>(idx[k]));
  return out;
}

Eigen::MatrixXd append_column(const Eigen::MatrixXd& x, const Eigen::VectorXd& c) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()) = c;
  return out;
}

std::string cell_name(int z, int a) { return "(z=" + std::to_string(z) + ", a=" + std::to_string(a) + ")"; }

void check_features(const SurvivalDataset& train, const FeatureSet& fx) {
  const Index n = static_cast<Index>(train.size());
  if (fx.mu.rows() != n || fx.omega.rows() != n || fx.pi.rows() != n || fx.delta.rows() != n)
    throw Error(ErrorCode::DimensionMismatch, "feature matrices do not match the training rows");
}

template <typename Pred>
std::vector<std::size_t> select_rows(const SurvivalDataset& d, Pred pred) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (pred(d.rows[i])) idx.push_back(i);
  return idx;
}


BinaryModel fit_on(const Eigen::MatrixXd& x, std::span<const std::size_t> idx, const std::vector<int>& labels,
                   const LearnerConfig& cfg, std::uint64_t task) {
  return fit_binary_model(take_rows(x, idx), labels, cfg, stream_seed(cfg.seed, task));
}

// Instrument-arm and treatment models shared by both nuisance containers.
struct ArmModels {
  BinaryModel pi[2];
  BinaryModel delta1;
};

ArmModels fit_arm_models(const SurvivalDataset& train, const FeatureSet& tx, const LearnerConfig& cfg,
                         bool one_sided) {
  ArmModels m;
  for (int z = 0; z < 2; ++z) {
    if (z == 0 && one_sided) continue;
    const auto idx = select_rows(train, [z](const Observation& o) { return static_cast<int>(o.z) == z; });
    if (idx.empty()) throw Error(ErrorCode::EmptyCell, "instrument arm z=" + std::to_string(z) + " is empty");
    std::vector<int> lab;
    for (auto i : idx) lab.push_back(train.rows[i].a);
    m.pi[z] = fit_on(tx.pi, idx, lab, cfg, 0x9100 + static_cast<std::uint64_t>(z));
  }
  std::vector<std::size_t> all(train.size());
  std::vector<int> zl(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    all[i] = i;
    zl[i] = static_cast<int>(train.rows[i].z);
  }
  m.delta1 = fit_on(tx.delta, all, zl, cfg, 0xde17a);
  return m;
}

void predict_arms(const ArmModels& m, const FeatureSet& ex, bool one_sided, std::vector<double>& pi,
                  std::vector<double>& delta) {
  const std::size_t n = ex.size();
  pi.assign(n * 2, 0.0);
  delta.assign(n * 2, 0.0);
  const Eigen::VectorXd d1 = m.delta1.predict(ex.delta);
  const Eigen::VectorXd p1 = m.pi[1].predict(ex.pi);
  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(static_cast<Index>(n));
  if (!one_sided) p0 = m.pi[0].predict(ex.pi);
  for (std::size_t i = 0; i < n; ++i) {
    const Index ii = static_cast<Index>(i);
    pi[i * 2 + 0] = p0[ii];
    pi[i * 2 + 1] = p1[ii];
    delta[i * 2 + 1] = d1[ii];
    delta[i * 2 + 0] = 1.0 - d1[ii];
  }
}

}  // namespace

FeatureSet FeatureSet::uniform(const Eigen::MatrixXd& x) { return FeatureSet{x, x, x, x}; }

FeatureSet FeatureSet::rows(std::span<const std::size_t> idx) const {
  return FeatureSet{take_rows(mu, idx), take_rows(omega, idx), take_rows(pi, idx), take_rows(delta, idx)};
}

void NuisanceSet::resize(std::size_t n_rows, std::size_t times) {
  n = n_rows;
  n_times = times;
  mu_.assign(n * n_times * 4, 0.0);
  omega_.assign(n * 4, 0.0);
  pi_.assign(n * 2, 0.0);
  delta_.assign(n * 2, 0.0);
}

void HazardSet::resize(std::size_t n_rows, std::size_t times, int n_cells) {
  n = n_rows;
  n_times = times;
  cells = n_cells;
  const std::size_t sz = n * n_times * static_cast<std::size_t>(cells);
  h_.assign(sz, 0.0);
  g_.assign(sz, 0.0);
  S_.assign(sz, 1.0);
  G_.assign(sz, 1.0);
  pi_.assign(n * 2, 0.0);
  delta_.assign(n * 2, 0.5);
}

void HazardSet::rebuild_products() {
  const int zs = cells / 2;
  for (std::size_t i = 0; i < n; ++i)
    for (int z = 0; z < zs; ++z)
      for (int a = 0; a < 2; ++a) {
        double s = 1.0, g = 1.0;
        for (int k = 1; k <= static_cast<int>(n_times); ++k) {
          const std::size_t j = at(i, k, z, a);
          s *= 1.0 - h_[j];
          g *= 1.0 - g_[j];
          S_[j] = s;
          G_[j] = g;
        }
      }
}

void ContinuousNuisanceSet::resize(std::size_t n_rows, std::size_t times) {
  n = n_rows;
  n_times = times;
  mu_.assign(n * n_times * 6, 0.0);
  pi_.assign(n * 3, 0.0);
  omega_.assign(n * 2, 0.0);
  density_.assign(n * 3, 0.0);
  shift_minus_.assign(n, 0);
  shift_plus_.assign(n, 0);
}

NuisanceSet fit_nuisance_set(const SurvivalDataset& train, const FeatureSet& train_x, const FeatureSet& eval_x,
                             const TimeGrid& grid, const LearnerConfig& config, NuisanceOptions opts) {
  config.validate();
  if (train.iv_kind != IvKind::Binary)
    throw Error(ErrorCode::IncompatibleInstrument, "binary nuisance set requested for a continuous instrument");
  check_features(train, train_x);
  const std::size_t n_eval = eval_x.size();
  const std::size_t T = grid.size();

  std::vector<std::size_t> cell[2][2], cell_r[2][2];
  for (int z = 0; z < 2; ++z)
    for (int a = 0; a < 2; ++a) {
      if (opts.one_sided && z == 0 && a == 1) continue;
      cell[z][a] = select_rows(
          train, [z, a](const Observation& o) { return static_cast<int>(o.z) == z && o.a == a; });
      if (cell[z][a].empty()) throw Error(ErrorCode::EmptyCell, "stratum " + cell_name(z, a) + " is empty");
      for (auto i : cell[z][a])
        if (train.rows[i].r == 1) cell_r[z][a].push_back(i);
      if (cell_r[z][a].empty())
        throw Error(ErrorCode::EmptyCell, "stratum r=1, " + cell_name(z, a) + " is empty");
    }

  NuisanceSet nu;
  nu.trunc_eps = config.trunc_eps;
  nu.resize(n_eval, T);

  LearnerConfig mcfg = config;
  mcfg.trunc_eps = config.outcome_eps();

  // One task per (t, z, a) survival regression plus one per censoring model.
  const std::size_t n_mu = T * 4;
  parallel_for(n_mu + 4, [&](std::size_t task) {
    if (task < n_mu) {
      const std::size_t t = task / 4;
      const int z = static_cast<int>((task % 4) / 2), a = static_cast<int>(task % 2);
      if (opts.one_sided && z == 0 && a == 1) return;
      const auto& idx = cell_r[z][a];
      std::vector<int> lab(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k)
        lab[k] = survival_indicator(train.rows[idx[k]], grid.points[t]).value_or(0);
      const Eigen::VectorXd p = fit_on(train_x.mu, idx, lab, mcfg, 0x1000 + task).predict(eval_x.mu);
      for (std::size_t i = 0; i < n_eval; ++i) nu.mu(i, t, z, a) = p[static_cast<Index>(i)];
      return;
    }
    const std::size_t c = task - n_mu;
    const int z = static_cast<int>(c / 2), a = static_cast<int>(c % 2);
    if (opts.one_sided && z == 0 && a == 1) {
      for (std::size_t i = 0; i < n_eval; ++i) nu.omega(i, z, a) = 1.0;
      return;
    }
    const auto& idx = cell[z][a];
    std::vector<int> lab(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) lab[k] = train.rows[idx[k]].r;
    const Eigen::VectorXd p = fit_on(train_x.omega, idx, lab, config, 0x2000 + c).predict(eval_x.omega);
    for (std::size_t i = 0; i < n_eval; ++i) nu.omega(i, z, a) = p[static_cast<Index>(i)];
  });

  const ArmModels arms = fit_arm_models(train, train_x, config, opts.one_sided);
  predict_arms(arms, eval_x, opts.one_sided, nu.pi_, nu.delta_);
  return nu;
}

NuisanceSet fit_nuisance_set(const SurvivalDataset& data, const TimeGrid& grid, const LearnerConfig& config,
                             NuisanceOptions opts) {
  const FeatureSet fx = FeatureSet::uniform(data.covariates());
  return fit_nuisance_set(data, fx, fx, grid, config, opts);
}

namespace {

// Person-period design for one stratum: covariates plus the grid point.
struct PeriodData {
  Eigen::MatrixXd x;
  std::vector<int> event, censored;
};

// Logistic: one indicator per period after the first. Forest: the period itself.
void time_features(LearnerMethod method, int k, int tau, double* out) {
  if (method == LearnerMethod::LogisticParametric) {
    for (int j = 2; j <= tau; ++j) out[j - 2] = j == k ? 1.0 : 0.0;
  } else {
    out[0] = static_cast<double>(k);
  }
}

int n_time_features(LearnerMethod method, int tau) {
  return method == LearnerMethod::LogisticParametric ? std::max(tau - 1, 0) : 1;
}

// Strata columns: (z, a, z*a) when split by instrument, else (a).
int n_cell_features(bool by_instrument) { return by_instrument ? 3 : 1; }

void cell_features(bool by_instrument, int z, int a, double* out) {
  if (by_instrument) {
    out[0] = z;
    out[1] = a;
    out[2] = z * a;
  } else {
    out[0] = a;
  }
}

PeriodData person_periods(const SurvivalDataset& train, const Eigen::MatrixXd& x, std::span<const std::size_t> idx,
                          int tau, LearnerMethod method, bool by_instrument) {
  const int tf = n_time_features(method, tau);
  const int cf = n_cell_features(by_instrument);
  std::vector<std::pair<std::size_t, int>> rows;
  for (auto i : idx)
    for (int k = 1; k <= tau; ++k) {
      if (!risk_counters(train.rows[i], k).at_risk) break;
      rows.emplace_back(i, k);
    }
  PeriodData pd;
  pd.x.resize(static_cast<Index>(rows.size()), x.cols() + cf + tf);
  pd.event.resize(rows.size());
  pd.censored.resize(rows.size());
  std::vector<double> buf(static_cast<std::size_t>(cf + tf));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto [i, k] = rows[r];
    const Observation& o = train.rows[i];
    const Index rr = static_cast<Index>(r);
    pd.x.row(rr).head(x.cols()) = x.row(static_cast<Index>(i));
    cell_features(by_instrument, static_cast<int>(o.z), o.a, buf.data());
    time_features(method, k, tau, buf.data() + cf);
    for (int f = 0; f < cf + tf; ++f) pd.x(rr, x.cols() + f) = buf[static_cast<std::size_t>(f)];
    const RiskCounters rc = risk_counters(o, k);
    pd.event[r] = rc.event;
    pd.censored[r] = rc.censored;
  }
  return pd;
}

}  // namespace

HazardSet fit_hazard_set(const SurvivalDataset& train, const FeatureSet& train_x, const FeatureSet& eval_x,
                         const TimeGrid& grid, const LearnerConfig& config, bool by_instrument,
                         NuisanceOptions opts) {
  config.validate();
  if (train.iv_kind != IvKind::Binary)
    throw Error(ErrorCode::IncompatibleInstrument, "hazard set requested for a continuous instrument");
  check_features(train, train_x);
  const std::size_t n_eval = eval_x.size();
  const int tau = grid.back();
  const int zs = by_instrument ? 2 : 1;
  const double heps = config.hazard_eps();
  LearnerConfig hcfg = config;
  hcfg.trunc_eps = heps;

  HazardSet hz;
  hz.resize(n_eval, static_cast<std::size_t>(tau), zs * 2);

  const std::size_t n_cells = static_cast<std::size_t>(zs * 2);
  std::vector<std::vector<std::size_t>> cells(n_cells);
  for (int z = 0; z < zs; ++z)
    for (int a = 0; a < 2; ++a) {
      if (opts.one_sided && by_instrument && z == 0 && a == 1) continue;
      auto& idx = cells[static_cast<std::size_t>(z * 2 + a)];
      idx = select_rows(train, [&](const Observation& o) {
        return o.a == a && (!by_instrument || static_cast<int>(o.z) == z);
      });
      if (idx.empty())
        throw Error(ErrorCode::EmptyRiskSet, "k=1 " + (by_instrument ? cell_name(z, a) : "(a=" + std::to_string(a) + ")") +
                                                 ": stratum has no subjects at risk");
    }

  auto store = [&](std::vector<double>& dst, std::size_t i, int k, int z, int a, double v) {
    dst[hz.at(i, k, z, a)] = std::clamp(v, heps, 1.0 - heps);
  };

  if (config.hazard_fit == HazardFit::Pooled) {
    // One model per hazard over every stratum's person-periods, strata entering as covariates.
    std::vector<std::size_t> pooled;
    for (const auto& idx : cells) pooled.insert(pooled.end(), idx.begin(), idx.end());
    std::sort(pooled.begin(), pooled.end());
    const int tf = n_time_features(config.method, tau);
    const int cf = n_cell_features(by_instrument);
    parallel_for(2, [&](std::size_t task) {
      const bool censor = task == 1;
      const Eigen::MatrixXd& tx = censor ? train_x.omega : train_x.mu;
      const Eigen::MatrixXd& ex = censor ? eval_x.omega : eval_x.mu;
      const PeriodData pd = person_periods(train, tx, pooled, tau, config.method, by_instrument);
      const BinaryModel m = fit_binary_model(pd.x, censor ? pd.censored : pd.event, hcfg,
                                             stream_seed(config.seed, 0x4000 + task));
      std::vector<double> row(static_cast<std::size_t>(ex.cols() + cf + tf));
      for (std::size_t i = 0; i < n_eval; ++i) {
        for (Index j = 0; j < ex.cols(); ++j) row[static_cast<std::size_t>(j)] = ex(static_cast<Index>(i), j);
        for (std::size_t c = 0; c < n_cells; ++c) {
          if (cells[c].empty()) continue;
          const int z = static_cast<int>(c / 2), a = static_cast<int>(c % 2);
          cell_features(by_instrument, z, a, row.data() + ex.cols());
          for (int k = 1; k <= tau; ++k) {
            time_features(config.method, k, tau, row.data() + ex.cols() + cf);
            store(censor ? hz.g_ : hz.h_, i, k, z, a, m.predict(row));
          }
        }
      }
    });
  } else {
    parallel_for(n_cells * static_cast<std::size_t>(tau), [&](std::size_t task) {
      const std::size_t c = task % n_cells;
      const int k = static_cast<int>(task / n_cells) + 1;
      const int z = static_cast<int>(c / 2), a = static_cast<int>(c % 2);
      if (cells[c].empty()) return;
      std::vector<std::size_t> risk;
      std::vector<int> ev, ce;
      for (auto i : cells[c]) {
        const RiskCounters rc = risk_counters(train.rows[i], k);
        if (!rc.at_risk) continue;
        risk.push_back(i);
        ev.push_back(rc.event);
        ce.push_back(rc.censored);
      }
      if (risk.empty())
        throw Error(ErrorCode::EmptyRiskSet, "k=" + std::to_string(k) + " " + cell_name(z, a) + ": empty risk set");
      const BinaryModel mh = fit_on(train_x.mu, risk, ev, hcfg, 0x5000 + 2 * task);
      const BinaryModel mg = fit_on(train_x.omega, risk, ce, hcfg, 0x5001 + 2 * task);
      const Eigen::VectorXd ph = mh.predict(eval_x.mu);
      const Eigen::VectorXd pg = mg.predict(eval_x.omega);
      for (std::size_t i = 0; i < n_eval; ++i) {
        store(hz.h_, i, k, z, a, ph[static_cast<Index>(i)]);
        store(hz.g_, i, k, z, a, pg[static_cast<Index>(i)]);
      }
    });
  }
  // structural zeros stay exactly 0
  for (std::size_t c = 0; c < n_cells; ++c)
    if (cells[c].empty())
      for (std::size_t i = 0; i < n_eval; ++i)
        for (int k = 1; k <= tau; ++k) {
          hz.h_[hz.at(i, k, static_cast<int>(c / 2), static_cast<int>(c % 2))] = 0.0;
          hz.g_[hz.at(i, k, static_cast<int>(c / 2), static_cast<int>(c % 2))] = 0.0;
        }
  hz.rebuild_products();

  if (by_instrument) {
    const ArmModels arms = fit_arm_models(train, train_x, config, opts.one_sided);
    predict_arms(arms, eval_x, opts.one_sided, hz.pi_, hz.delta_);
  } else {
    std::vector<std::size_t> all(train.size());
    std::vector<int> lab(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      all[i] = i;
      lab[i] = train.rows[i].a;
    }
    const Eigen::VectorXd p = fit_on(train_x.pi, all, lab, config, 0x9200).predict(eval_x.pi);
    for (std::size_t i = 0; i < n_eval; ++i) hz.pi_[i * 2] = p[static_cast<Index>(i)];
  }
  return hz;
}

HazardSet fit_hazard_set(const SurvivalDataset& data, const TimeGrid& grid, const LearnerConfig& config,
                         bool by_instrument, NuisanceOptions opts) {
  const FeatureSet fx = FeatureSet::uniform(data.covariates());
  return fit_hazard_set(data, fx, fx, grid, config, by_instrument, opts);
}

double IvDensityModel::operator()(double z, std::span<const double> x) const {
  if (x.size() + 1 != static_cast<std::size_t>(coef_.size()))
    throw Error(ErrorCode::DimensionMismatch, "density: covariate length mismatch");
  double m = coef_[0];
  for (std::size_t j = 0; j < x.size(); ++j) m += coef_[static_cast<Index>(j + 1)] * x[j];
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double d;
  if (method_ == DensityMethod::ConditionalGaussian) {
    const double u = (z - m) / sigma_;
    d = inv_sqrt_2pi * std::exp(-0.5 * u * u) / sigma_;
  } else {
    double s = 0.0;
    for (double e : residuals_) {
      const double u = (z - m - e) / bandwidth_;
      s += std::exp(-0.5 * u * u);
    }
    d = inv_sqrt_2pi * s / (static_cast<double>(residuals_.size()) * bandwidth_);
  }
  return std::max(d, floor_);
}

IvDensityModel fit_iv_density_model(const Eigen::MatrixXd& x, std::span<const double> z, const LearnerConfig& config) {
  const Index n = x.rows();
  if (static_cast<std::size_t>(n) != z.size()) throw Error(ErrorCode::DimensionMismatch, "density: rows mismatch");
  if (n < 2) throw Error(ErrorCode::ZeroVarianceInstrument, "need at least two rows");
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteFeature, "density: non-finite covariates");
  Eigen::VectorXd zv(n);
  for (Index i = 0; i < n; ++i) zv[i] = z[static_cast<std::size_t>(i)];
  const double zbar = zv.mean();
  if ((zv.array() - zbar).square().sum() <= 0.0)
    throw Error(ErrorCode::ZeroVarianceInstrument, "instrument is constant");

  Eigen::MatrixXd d(n, x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  IvDensityModel m;
  m.coef_ = d.colPivHouseholderQr().solve(zv);
  const Eigen::VectorXd res = zv - d * m.coef_;
  const Index dof = n - d.cols() > 0 ? n - d.cols() : n;
  m.sigma_ = std::sqrt(res.squaredNorm() / static_cast<double>(dof));
  if (!(m.sigma_ > 1e-12)) throw Error(ErrorCode::ZeroVarianceInstrument, "instrument is a deterministic function of covariates");
  m.method_ = config.density;
  m.floor_ = config.trunc_eps;
  if (config.density == DensityMethod::KernelResidual) {
    m.residuals_.assign(res.data(), res.data() + n);
    std::vector<double> sorted = m.residuals_;
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double p) {
      const double pos = p * static_cast<double>(n - 1);
      const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
      return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    };
    const double mean = res.mean();
    const double sd = std::sqrt((res.array() - mean).square().sum() / static_cast<double>(n - 1));
    const double iqr = quantile(0.75) - quantile(0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    m.bandwidth_ = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  }
  return m;
}

std::pair<double, double> instrument_support(const SurvivalDataset& data, double kappa) {
  if (data.rows.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no rows");
  double lo = data.rows.front().z, hi = lo;
  for (const auto& o : data.rows) {
    lo = std::min(lo, o.z);
    hi = std::max(hi, o.z);
  }
  if (!(kappa > 0.0)) throw Error(ErrorCode::KappaNonPositive, "kappa must be positive");
  if (!(2.0 * kappa < hi - lo))
    throw Error(ErrorCode::KappaNonPositive, "kappa must satisfy 2*kappa < z_max - z_min");
  return {lo, hi};
}

namespace {

std::vector<double> instrument_values(const SurvivalDataset& d) {
  std::vector<double> z(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) z[i] = d.rows[i].z;
  return z;
}

void fill_density(ContinuousNuisanceSet& out, const IvDensityModel& dm, const SurvivalDataset& eval,
                  const Eigen::MatrixXd& ex) {
  std::vector<double> row(static_cast<std::size_t>(ex.cols()));
  for (std::size_t i = 0; i < eval.size(); ++i) {
    for (Index j = 0; j < ex.cols(); ++j) row[static_cast<std::size_t>(j)] = ex(static_cast<Index>(i), j);
    const double z = eval.rows[i].z;
    out.density(i, 0) = dm(z - out.kappa, row);
    out.density(i, 1) = dm(z, row);
    out.density(i, 2) = dm(z + out.kappa, row);
    out.shift_minus_[i] = z - out.kappa > out.z_min;
    out.shift_plus_[i] = z + out.kappa < out.z_max;
  }
}

}  // namespace

ContinuousNuisanceSet fit_iv_density(const SurvivalDataset& data, double kappa, const LearnerConfig& config) {
  config.validate();
  if (data.iv_kind != IvKind::Continuous)
    throw Error(ErrorCode::IncompatibleInstrument, "density fit requires a continuous instrument");
  ContinuousNuisanceSet out;
  const auto [lo, hi] = instrument_support(data, kappa);
  out.resize(data.size(), 0);
  out.kappa = kappa;
  out.z_min = lo;
  out.z_max = hi;
  out.trunc_eps = config.trunc_eps;
  const Eigen::MatrixXd x = data.covariates();
  const auto z = instrument_values(data);
  fill_density(out, fit_iv_density_model(x, z, config), data, x);
  return out;
}

ContinuousNuisanceSet fit_continuous_nuisance_set(const SurvivalDataset& train, const FeatureSet& train_x,
                                                  const SurvivalDataset& eval, const FeatureSet& eval_x,
                                                  const TimeGrid& grid, double kappa, const LearnerConfig& config,
                                                  std::optional<std::pair<double, double>> support) {
  config.validate();
  if (train.iv_kind != IvKind::Continuous || eval.iv_kind != IvKind::Continuous)
    throw Error(ErrorCode::IncompatibleInstrument, "continuous nuisance set requires a continuous instrument");
  check_features(train, train_x);
  if (eval_x.size() != eval.size()) throw Error(ErrorCode::DimensionMismatch, "eval features do not match eval rows");
  const auto [lo, hi] = support ? *support : instrument_support(train, kappa);
  if (!(kappa > 0.0) || !(2.0 * kappa < hi - lo))
    throw Error(ErrorCode::KappaNonPositive, "kappa must satisfy 0 < 2*kappa < z_max - z_min");

  const std::size_t n_eval = eval.size();
  const std::size_t T = grid.size();
  ContinuousNuisanceSet out;
  out.resize(n_eval, T);
  out.kappa = kappa;
  out.z_min = lo;
  out.z_max = hi;
  out.trunc_eps = config.trunc_eps;

  const auto tz = instrument_values(train);
  const Eigen::VectorXd tzv = Eigen::Map<const Eigen::VectorXd>(tz.data(), static_cast<Index>(tz.size()));
  fill_density(out, fit_iv_density_model(train_x.delta, tz, config), eval, eval_x.delta);

  // evaluation instruments at the clamped shifts
  Eigen::VectorXd zs[3];
  for (auto& v : zs) v.resize(static_cast<Index>(n_eval));
  for (std::size_t i = 0; i < n_eval; ++i) {
    const double z = eval.rows[i].z;
    const Index ii = static_cast<Index>(i);
    zs[0][ii] = out.shift_minus_[i] ? z - kappa : z;
    zs[1][ii] = z;
    zs[2][ii] = out.shift_plus_[i] ? z + kappa : z;
  }
  Eigen::MatrixXd mu_eval[3], pi_eval[3];
  for (int s = 0; s < 3; ++s) {
    mu_eval[s] = append_column(eval_x.mu, zs[s]);
    pi_eval[s] = append_column(eval_x.pi, zs[s]);
  }
  const Eigen::MatrixXd mu_train = append_column(train_x.mu, tzv);
  const Eigen::MatrixXd om_train = append_column(train_x.omega, tzv);
  const Eigen::MatrixXd pi_train = append_column(train_x.pi, tzv);
  const Eigen::MatrixXd om_eval = append_column(eval_x.omega, zs[1]);

  std::vector<std::size_t> cell[2], cell_r[2];
  for (int a = 0; a < 2; ++a) {
    cell[a] = select_rows(train, [a](const Observation& o) { return o.a == a; });
    for (auto i : cell[a])
      if (train.rows[i].r == 1) cell_r[a].push_back(i);
    if (cell_r[a].empty()) throw Error(ErrorCode::EmptyCell, "stratum r=1, a=" + std::to_string(a) + " is empty");
  }

  LearnerConfig mcfg = config;
  mcfg.trunc_eps = config.outcome_eps();

  const std::size_t n_mu = T * 2;
  parallel_for(n_mu + 3, [&](std::size_t task) {
    if (task < n_mu) {
      const std::size_t t = task / 2;
      const int a = static_cast<int>(task % 2);
      const auto& idx = cell_r[a];
      std::vector<int> lab(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k)
        lab[k] = survival_indicator(train.rows[idx[k]], grid.points[t]).value_or(0);
      const BinaryModel m = fit_on(mu_train, idx, lab, mcfg, 0x6000 + task);
      for (int s = 0; s < 3; ++s) {
        const Eigen::VectorXd p = m.predict(mu_eval[s]);
        for (std::size_t i = 0; i < n_eval; ++i) out.mu(i, t, s, a) = p[static_cast<Index>(i)];
      }
      return;
    }
    const std::size_t c = task - n_mu;
    if (c < 2) {
      const int a = static_cast<int>(c);
      std::vector<int> lab(cell[a].size());
      for (std::size_t k = 0; k < cell[a].size(); ++k) lab[k] = train.rows[cell[a][k]].r;
      const Eigen::VectorXd p = fit_on(om_train, cell[a], lab, config, 0x7000 + c).predict(om_eval);
      for (std::size_t i = 0; i < n_eval; ++i) out.omega(i, a) = p[static_cast<Index>(i)];
      return;
    }
    std::vector<std::size_t> all(train.size());
    std::vector<int> lab(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      all[i] = i;
      lab[i] = train.rows[i].a;
    }
    const BinaryModel m = fit_on(pi_train, all, lab, config, 0x7100);
    for (int s = 0; s < 3; ++s) {
      const Eigen::VectorXd p = m.predict(pi_eval[s]);
      for (std::size_t i = 0; i < n_eval; ++i) out.pi(i, s) = p[static_cast<Index>(i)];
    }
  });
  return out;
}

}  // namespace ivsurv
