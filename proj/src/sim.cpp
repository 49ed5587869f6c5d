#include "ivsurv/sim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "ivsurv/error.hpp"
#include "ivsurv/parallel.hpp"

namespace ivsurv {

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double dot(std::span<const double> a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) s += a[j] * b[j];
  return s;
}

template <typename E>
struct Named {
  E value;
  const char* name;
};

constexpr Named<Family> kFamilies[] = {{Family::CoxPH, "cox"}, {Family::AdditiveHazards, "additive"}};
constexpr Named<Censoring> kCensorings[] = {{Censoring::IndicatorLogistic, "indicator"},
                                            {Censoring::UniformIndep, "uniform"},
                                            {Censoring::GapUniform, "gap"},
                                            {Censoring::Fixed, "fixed"}};
constexpr Named<Specification> kSpecs[] = {{Specification::Correct, "correct"},
                                           {Specification::WrongOmegaDelta, "wrong_omega_delta"},
                                           {Specification::WrongPiMu, "wrong_pi_mu"},
                                           {Specification::WrongPiOmega, "wrong_pi_omega"},
                                           {Specification::WrongPiOmegaMu, "wrong_pi_omega_mu"}};

template <typename E, std::size_t N>
const char* name_of(const Named<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <typename E, std::size_t N>
std::optional<E> parse_named(const Named<E> (&table)[N], const std::string& s) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  return std::nullopt;
}

}  // namespace

const char* family_name(Family f) { return name_of(kFamilies, f); }
const char* censoring_name(Censoring c) { return name_of(kCensorings, c); }
const char* specification_name(Specification s) { return name_of(kSpecs, s); }
std::optional<Family> parse_family(const std::string& s) { return parse_named(kFamilies, s); }
std::optional<Censoring> parse_censoring(const std::string& s) { return parse_named(kCensorings, s); }
std::optional<Specification> parse_specification(const std::string& s) { return parse_named(kSpecs, s); }

void DgpConfig::validate() const {
  const std::size_t p = alpha_x.size();
  if (p == 0) throw Error(ErrorCode::Config, "alpha_x must be non-empty");
  if (beta_x.size() != p || gamma_x.size() != p)
    throw Error(ErrorCode::Config, "alpha_x, beta_x and gamma_x must share one length");
  if (iv_kind == IvKind::Binary && kappa_coef.size() != p)
    throw Error(ErrorCode::Config, "kappa_coef length must match the covariate dimension");
  if (iv_kind == IvKind::Continuous && (kappa_tilde.empty() || kappa_tilde.size() > p))
    throw Error(ErrorCode::Config, "kappa_tilde must have between 1 and q entries");
  if (c1 < 0.0 || c2 < 0.0) throw Error(ErrorCode::NegativeHazard, "baseline coefficients must be >= 0");
  if (n < 1) throw Error(ErrorCode::Config, "n must be >= 1");
  if (tau < 1) throw Error(ErrorCode::Config, "tau must be >= 1");
  if (censoring == Censoring::UniformIndep && !(uniform_lo < uniform_hi))
    throw Error(ErrorCode::Config, "uniform censoring needs lo < hi");
  if (censoring == Censoring::GapUniform && !(gap_lo < gap_hi)) throw Error(ErrorCode::Config, "gap censoring needs lo < hi");
  if (censoring == Censoring::Fixed && !(fixed_time > 0.0)) throw Error(ErrorCode::Config, "fixed censoring time must be > 0");
}

DgpConfig DgpConfig::cox_indicator() { return DgpConfig{}; }

DgpConfig DgpConfig::cox_scenario(int scenario) {
  DgpConfig c;
  c.discretize = true;
  switch (scenario) {
    case 1:
      c.alpha_u = 0.3;
      c.beta_u = 2.5;
      c.censoring = Censoring::UniformIndep;
      break;
    case 2:
      c.alpha_u = 0.3;
      c.beta_u = 2.5;
      c.censoring = Censoring::GapUniform;
      break;
    case 3:
      c.alpha_u = 0.0;
      c.beta_u = 0.0;
      c.censoring = Censoring::Fixed;
      break;
    default:
      throw Error(ErrorCode::Config, "censoring scenario must be 1, 2 or 3");
  }
  return c;
}

DgpConfig DgpConfig::additive_binary() {
  DgpConfig c;
  c.family = Family::AdditiveHazards;
  c.alpha_0 = 0.1;
  c.alpha_x = {0.1, 0.1, -0.2, -0.2, 0.3};
  c.alpha_u = 0.3;
  c.beta_a = 0.03;
  c.beta_x = {0.01, 0.01, -0.01, -0.01, -0.01};
  c.beta_u = -0.01;
  c.gamma_z = 0.5;
  c.gamma_a = -0.5;
  c.gamma_x = {-0.3, -0.3, 0.3, 0.3, 0.3};
  return c;
}

DgpConfig DgpConfig::additive_continuous() {
  DgpConfig c = additive_binary();
  c.iv_kind = IvKind::Continuous;
  c.beta_u = -0.02;
  return c;
}

namespace {

template <typename F>
double bisect_cumulative(double target, const F& cumulative, double t_max) {
  if (!(target >= 0.0)) throw Error(ErrorCode::InvalidObservation, "target must be >= 0");
  if (target == 0.0) return 0.0;
  if (cumulative(t_max) < target) return t_max;
  double lo = 0.0, hi = t_max;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cumulative(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double invert_cumulative_hazard(double target, const std::function<double(double)>& cumulative, double t_max) {
  return bisect_cumulative(target, cumulative, t_max);
}

double invert_cumulative_hazard(double target, const CumulativeHazard& H, double t_max) {
  return bisect_cumulative(target, H, t_max);
}

namespace {

// Adaptive Simpson on [a, b]; negative rates abort.
double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  if (flm < 0.0 || frm < 0.0) throw Error(ErrorCode::NegativeHazard, "hazard is negative at t=" + std::to_string(lm));
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

double integrate_rate(const std::function<double(double)>& f, double b) {
  if (b <= 0.0) return 0.0;
  const double fa = f(0.0), fm = f(0.5 * b), fb = f(b);
  if (fa < 0.0 || fm < 0.0 || fb < 0.0) throw Error(ErrorCode::NegativeHazard, "hazard is negative");
  return simpson(f, 0.0, b, fa, fm, fb, b / 6.0 * (fa + 4.0 * fm + fb), 1e-13, 40);
}

}  // namespace

double invert_hazard_rate(double target, const std::function<double(double)>& hazard, double t_max) {
  return invert_cumulative_hazard(target, [&](double t) { return integrate_rate(hazard, t); }, t_max);
}

CumulativeHazard subject_hazard(const DgpConfig& cfg, std::span<const double> x, int a, double u) {
  const double lp = dot(x, cfg.beta_x) + a * cfg.beta_a + u * cfg.beta_u;
  CumulativeHazard H{cfg.c1, cfg.c2, 1.0, 0.0};
  if (cfg.family == Family::CoxPH)
    H.mult = std::exp(lp);
  else
    H.rate = std::exp(lp);
  return H;
}

CensorOutcome apply_censoring(double T, const DgpConfig& cfg, Rng& rng, std::span<const double> x, double z, int a) {
  CensorOutcome out;
  const bool capped = T >= cfg.t_max();
  switch (cfg.censoring) {
    case Censoring::IndicatorLogistic: {
      const double p = expit(dot(x, cfg.gamma_x) + z * cfg.gamma_z + a * cfg.gamma_a);
      out.time = T;
      out.r = uniform01(rng) < p ? 1 : 0;
      out.c = std::numeric_limits<double>::quiet_NaN();
      if (capped) out.r = 0;
      return out;
    }
    case Censoring::UniformIndep:
      out.c = cfg.uniform_lo + (cfg.uniform_hi - cfg.uniform_lo) * uniform01(rng);
      break;
    case Censoring::GapUniform:
      out.c = std::max(1.0, T + cfg.gap_lo + (cfg.gap_hi - cfg.gap_lo) * uniform01(rng));
      break;
    case Censoring::Fixed:
      out.c = cfg.fixed_time;
      break;
  }
  if (capped) out.c = std::min(out.c, T);
  out.time = std::min(T, out.c);
  out.r = T < out.c ? 1 : 0;
  return out;
}

namespace {

SimDraw sample_impl(const DgpConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t q = cfg.q();
  SimDraw d;
  d.data.q = q;
  d.data.tau = cfg.tau;
  d.data.iv_kind = cfg.iv_kind;
  d.data.rows.resize(cfg.n);
  LatentRecord& lat = d.latent;
  lat.T.resize(cfg.n);
  lat.C.resize(cfg.n);
  lat.U.resize(cfg.n);
  lat.V.resize(cfg.n);
  lat.a_potential.resize(cfg.n);
  std::normal_distribution<double> normal;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    Observation& o = d.data.rows[i];
    o.x0.resize(q);
    for (auto& v : o.x0) v = normal(rng);
    const double u = normal(rng);
    if (cfg.iv_kind == IvKind::Binary) {
      o.z = uniform01(rng) < expit(dot(o.x0, cfg.kappa_coef)) ? 1.0 : 0.0;
    } else {
      o.z = dot(std::span<const double>(o.x0).first(cfg.kappa_tilde.size()), cfg.kappa_tilde) + normal(rng);
    }
    const double v = uniform01(rng);
    const double base = cfg.alpha_0 + dot(o.x0, cfg.alpha_x) + u * cfg.alpha_u;
    lat.a_potential[i] = {v < expit(base) ? 1 : 0, v < expit(base + cfg.alpha_z) ? 1 : 0};
    o.a = v < expit(base + o.z * cfg.alpha_z) ? 1 : 0;
    const double e = -std::log1p(-uniform01(rng));
    const double T = invert_cumulative_hazard(e, subject_hazard(cfg, o.x0, o.a, u), cfg.t_max());
    const CensorOutcome c = apply_censoring(T, cfg, rng, o.x0, o.z, o.a);
    o.time = c.time;
    o.r = c.r;
    lat.T[i] = T;
    lat.C[i] = c.c;
    lat.U[i] = u;
    lat.V[i] = v;
  }
  if (cfg.discretize) d.data = discretize_times(std::move(d.data));
  return d;
}

}  // namespace

SimDraw sample_cox(const DgpConfig& cfg, Rng& rng) {
  if (cfg.family != Family::CoxPH) throw Error(ErrorCode::Config, "sample_cox needs family=cox");
  return sample_impl(cfg, rng);
}

SimDraw sample_additive(const DgpConfig& cfg, Rng& rng) {
  if (cfg.family != Family::AdditiveHazards) throw Error(ErrorCode::Config, "sample_additive needs family=additive");
  return sample_impl(cfg, rng);
}

SimDraw sample_dgp(const DgpConfig& cfg, Rng& rng) { return sample_impl(cfg, rng); }

std::array<double, 5> kang_schafer(std::span<const double> x) {
  if (x.size() != 5) throw Error(ErrorCode::DimensionMismatch, "Kang-Schafer transform needs 5 covariates");
  const double s = x[1] + x[3] + 20.0;
  const double w3 = x[0] * x[2] / 25.0 + 0.6;
  return {std::exp(x[0] / 2.0), x[1] / (1.0 + std::exp(x[0])) + 10.0, w3 * w3 * w3, s * s, x[4]};
}

Eigen::MatrixXd kang_schafer(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd w(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    const auto v = kang_schafer(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    for (Eigen::Index j = 0; j < 5; ++j) w(i, j) = v[static_cast<std::size_t>(j)];
  }
  return w;
}

FeatureSet specification_features(const SurvivalDataset& data, Specification spec) {
  const Eigen::MatrixXd x = data.covariates();
  FeatureSet f = FeatureSet::uniform(x);
  if (spec == Specification::Correct) return f;
  const Eigen::MatrixXd w = kang_schafer(x);
  switch (spec) {
    case Specification::WrongOmegaDelta:
      f.omega = w;
      f.delta = w;
      break;
    case Specification::WrongPiMu:
      f.pi = w;
      f.mu = w;
      break;
    case Specification::WrongPiOmega:
      f.pi = w;
      f.omega = w;
      break;
    case Specification::WrongPiOmegaMu:
      f.pi = w;
      f.omega = w;
      f.mu = w;
      break;
    case Specification::Correct:
      break;
  }
  return f;
}

OracleCurve oracle_late(const DgpConfig& cfg, const TimeGrid& grid, std::size_t M, std::uint64_t seed, double kappa) {
  cfg.validate();
  if (M == 0) throw Error(ErrorCode::Config, "oracle size must be positive");
  const std::size_t T = grid.size();
  const std::size_t q = cfg.q();
  constexpr std::size_t kChunk = 20000;
  const std::size_t chunks = (M + kChunk - 1) / kChunk;
  struct Partial {
    std::vector<double> late, ate;
    std::size_t compliers = 0;
  };
  std::vector<Partial> parts(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    Rng rng = make_stream(seed, 0x04ac1e, c);
    std::normal_distribution<double> normal;
    Partial& p = parts[c];
    p.late.assign(T, 0.0);
    p.ate.assign(T, 0.0);
    std::vector<double> x(q);
    const std::size_t count = std::min(kChunk, M - c * kChunk);
    for (std::size_t i = 0; i < count; ++i) {
      for (auto& v : x) v = normal(rng);
      const double u = normal(rng);
      const double v = uniform01(rng);
      const double e = -std::log1p(-uniform01(rng));
      const double base = cfg.alpha_0 + dot(x, cfg.alpha_x) + u * cfg.alpha_u;
      bool complier;
      if (cfg.iv_kind == IvKind::Binary) {
        complier = v < expit(base + cfg.alpha_z) && !(v < expit(base));
      } else {
        const double z = dot(std::span<const double>(x).first(cfg.kappa_tilde.size()), cfg.kappa_tilde) + normal(rng);
        const double lo = expit(base + (z - kappa) * cfg.alpha_z);
        const double hi = expit(base + (z + kappa) * cfg.alpha_z);
        complier = cfg.alpha_z >= 0 ? (v < hi && !(v < lo)) : (v < lo && !(v < hi));
      }
      double t1 = invert_cumulative_hazard(e, subject_hazard(cfg, x, 1, u), cfg.t_max());
      double t0 = invert_cumulative_hazard(e, subject_hazard(cfg, x, 0, u), cfg.t_max());
      if (cfg.discretize) {
        // score the same floored times the estimators see
        t1 = std::max(1.0, std::floor(t1));
        t0 = std::max(1.0, std::floor(t0));
      }
      for (std::size_t k = 0; k < T; ++k) {
        const double t = grid.points[k];
        const double diff = (t1 > t ? 1.0 : 0.0) - (t0 > t ? 1.0 : 0.0);
        p.ate[k] += diff;
        if (complier) p.late[k] += diff;
      }
      if (complier) ++p.compliers;
    }
  });
  OracleCurve out;
  out.M = M;
  out.late.assign(T, 0.0);
  out.ate.assign(T, 0.0);
  std::size_t compliers = 0;
  for (const auto& p : parts) {
    for (std::size_t k = 0; k < T; ++k) {
      out.late[k] += p.late[k];
      out.ate[k] += p.ate[k];
    }
    compliers += p.compliers;
  }
  out.complier_fraction = static_cast<double>(compliers) / static_cast<double>(M);
  if (out.complier_fraction < 1e-4)
    throw Error(ErrorCode::NoCompliers, "complier fraction " + std::to_string(out.complier_fraction) + " < 1e-4");
  for (std::size_t k = 0; k < T; ++k) {
    out.late[k] /= static_cast<double>(compliers);
    out.ate[k] /= static_cast<double>(M);
  }
  return out;
}

Metrics bias_rmse(const std::vector<std::vector<double>>& estimates, const std::vector<double>& truth, std::size_t n) {
  if (estimates.empty()) throw Error(ErrorCode::DimensionMismatch, "bias_rmse needs at least one replicate");
  const std::size_t T = truth.size();
  for (const auto& e : estimates)
    if (e.size() != T) throw Error(ErrorCode::DimensionMismatch, "estimate length differs from the truth curve");
  const double I = static_cast<double>(estimates.size());
  Metrics m;
  for (std::size_t t = 0; t < T; ++t) {
    double mean = 0.0, sq = 0.0;
    for (const auto& e : estimates) {
      mean += e[t];
      sq += (e[t] - truth[t]) * (e[t] - truth[t]);
    }
    m.bias += std::abs(mean / I - truth[t]);
    m.rmse += std::sqrt(sq / I);
  }
  m.bias /= static_cast<double>(T);
  m.rmse *= std::sqrt(static_cast<double>(n)) / static_cast<double>(T);
  return m;
}

const EstimatorSummary& SimReport::entry(EstimatorKind kind) const {
  for (const auto& e : entries)
    if (e.kind == kind) return e;
  throw Error(ErrorCode::Config, std::string("report has no estimator '") + estimator_name(kind) + "'");
}

SimReport run_study(const StudyConfig& cfg) {
  cfg.dgp.validate();
  if (cfg.I < 1) throw Error(ErrorCode::Config, "I must be >= 1");
  if (cfg.estimators.empty()) throw Error(ErrorCode::Config, "no estimators requested");
  for (EstimatorKind k : cfg.estimators)
    if (is_continuous(k) != (cfg.dgp.iv_kind == IvKind::Continuous))
      throw Error(ErrorCode::IncompatibleInstrument,
                  std::string("estimator '") + estimator_name(k) + "' does not match the instrument type");

  const TimeGrid grid = TimeGrid::unit(cfg.dgp.tau);
  SimReport rep;
  rep.scenario = cfg.scenario;
  rep.specification = cfg.specification;
  rep.n = cfg.dgp.n;
  rep.I = cfg.I;
  rep.grid = grid.points;
  rep.truth = cfg.truth ? *cfg.truth
                        : oracle_late(cfg.dgp, grid, cfg.oracle_M, stream_seed(cfg.seed, 0x7a17), cfg.settings.kappa).late;
  if (rep.truth.size() != grid.size()) throw Error(ErrorCode::DimensionMismatch, "truth curve length differs from tau");

  const std::size_t E = cfg.estimators.size();
  const std::size_t I = static_cast<std::size_t>(cfg.I);
  // results[rep][estimator]; empty vector marks a failed replication
  std::vector<std::vector<std::vector<double>>> results(I, std::vector<std::vector<double>>(E));
  parallel_for(I, [&](std::size_t r) {
    Rng rng = make_stream(cfg.seed, 0xda7a, r);
    const SimDraw draw = sample_dgp(cfg.dgp, rng);
    SurvivalDataset data;
    try {
      data = validate_dataset(draw.data);
    } catch (const Error&) {
      return;
    }
    const FeatureSet fx = specification_features(data, cfg.specification);
    for (std::size_t e = 0; e < E; ++e) {
      EstimationSettings s = cfg.settings;
      s.kind = cfg.estimators[e];
      try {
        EstimateCurve c = run_pipeline(data, grid, s, stream_seed(cfg.seed, r, e), fx);
        const bool finite = std::all_of(c.psi.begin(), c.psi.end(), [](double v) { return std::isfinite(v); });
        if (!c.weak_instrument && finite) results[r][e] = std::move(c.psi);
      } catch (const Error& err) {
        switch (err.code()) {
          case ErrorCode::Config:
          case ErrorCode::IncompatibleInstrument:
          case ErrorCode::DimensionMismatch:
            throw;
          default:
            break;  // counted as a failed replication
        }
      }
    }
  });

  for (std::size_t e = 0; e < E; ++e) {
    EstimatorSummary s;
    s.kind = cfg.estimators[e];
    for (std::size_t r = 0; r < I; ++r) {
      if (results[r][e].empty())
        ++s.failed;
      else
        s.replicates.push_back(std::move(results[r][e]));
    }
    s.mean_curve.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
    if (!s.replicates.empty()) {
      s.metrics = bias_rmse(s.replicates, rep.truth, cfg.dgp.n);
      for (std::size_t t = 0; t < grid.size(); ++t) {
        double m = 0.0;
        for (const auto& c : s.replicates) m += c[t];
        s.mean_curve[t] = m / static_cast<double>(s.replicates.size());
      }
    } else {
      s.metrics = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    }
    rep.entries.push_back(std::move(s));
  }
  return rep;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

}  // namespace

void write_report_csv(std::ostream& out, const std::vector<SimReport>& reports) {
  out << "estimator,scenario,specification,bias,rmse,I,n,failed_reps\n";
  for (const auto& r : reports)
    for (const auto& e : r.entries)
      out << estimator_name(e.kind) << ',' << r.scenario << ',' << specification_name(r.specification) << ','
          << fmt(e.metrics.bias) << ',' << fmt(e.metrics.rmse) << ',' << r.I << ',' << r.n << ',' << e.failed << '\n';
}

void write_curve_csv(std::ostream& out, const SimReport& report, EstimatorKind kind) {
  const EstimatorSummary& e = report.entry(kind);
  out << "t,mean_estimate,truth\n";
  for (std::size_t t = 0; t < report.grid.size(); ++t)
    out << report.grid[t] << ',' << fmt(e.mean_curve[t]) << ',' << fmt(report.truth[t]) << '\n';
}

std::string report_json(const std::vector<SimReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["scenario"] = r.scenario;
    j["specification"] = specification_name(r.specification);
    j["n"] = r.n;
    j["I"] = r.I;
    j["grid"] = r.grid;
    j["truth"] = r.truth;
    nlohmann::ordered_json ests = nlohmann::ordered_json::array();
    for (const auto& e : r.entries) {
      nlohmann::ordered_json je;
      je["estimator"] = estimator_name(e.kind);
      je["bias"] = e.metrics.bias;
      je["rmse"] = e.metrics.rmse;
      je["failed_reps"] = e.failed;
      je["mean_curve"] = e.mean_curve;
      ests.push_back(std::move(je));
    }
    j["estimators"] = std::move(ests);
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace ivsurv
