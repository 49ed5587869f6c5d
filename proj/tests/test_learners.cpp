#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "ivsurv/error.hpp"
#include "ivsurv/learners.hpp"
#include "ivsurv/sim.hpp"
#include "support.hpp"

using namespace ivsurv;

namespace {

struct Sample {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Sample logistic_sample(Rng& rng, std::size_t n, const std::vector<double>& beta) {
  std::normal_distribution<double> nd;
  Sample s;
  const Eigen::Index p = static_cast<Eigen::Index>(beta.size()) - 1;
  s.x.resize(static_cast<Eigen::Index>(n), p);
  s.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double eta = beta[0];
    for (Eigen::Index j = 0; j < p; ++j) {
      s.x(static_cast<Eigen::Index>(i), j) = nd(rng);
      eta += beta[static_cast<std::size_t>(j + 1)] * s.x(static_cast<Eigen::Index>(i), j);
    }
    s.y[i] = uniform01(rng) < testgen::expit(eta) ? 1 : 0;
  }
  return s;
}

// Profile log-likelihood maximised over a fine slope grid, intercept fixed at 0.
double grid_search_slope(const Sample& s) {
  double best = 0.0, best_ll = -1e300;
  for (int g = 0; g <= 40000; ++g) {
    const double b = -2.0 + 6.0 * g / 40000.0;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
      const double eta = b * s.x(i, 0);
      ll += s.y[static_cast<std::size_t>(i)] * eta - std::log1p(std::exp(eta));
    }
    if (ll > best_ll) {
      best_ll = ll;
      best = b;
    }
  }
  return best;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Config;
}

}  // namespace

TEST_CASE("degenerate labels give a constant model at the bound") {
  LearnerConfig cfg;
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(20, 2);
  std::vector<int> y(20, 1);
  for (auto method : {LearnerMethod::LogisticParametric, LearnerMethod::TreeEnsemble}) {
    cfg.method = method;
    const BinaryModel m = fit_binary_model(x, y, cfg);
    CHECK(m.is_constant());
    CHECK(m.predict(x).minCoeff() == doctest::Approx(1.0 - cfg.trunc_eps));
  }
}

TEST_CASE("separated 1-D logistic stays within bounds and is monotone") {
  LearnerConfig cfg;
  Eigen::MatrixXd x(40, 1);
  std::vector<int> y(40);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = i - 19.5;
    y[static_cast<std::size_t>(i)] = i >= 20 ? 1 : 0;
  }
  const BinaryModel m = fit_binary_model(x, y, cfg);
  const Eigen::VectorXd p = m.predict(x);
  for (int i = 0; i < 40; ++i) {
    CHECK(p[i] >= cfg.trunc_eps);
    CHECK(p[i] <= 1.0 - cfg.trunc_eps);
    if (i > 0) CHECK(p[i] >= p[i - 1]);
  }
}

TEST_CASE("logistic slope agrees with a grid-search maximum likelihood") {
  Rng rng = make_stream(42, 7);
  const Sample s = logistic_sample(rng, 200, {0.0, 1.0});
  LearnerConfig cfg;
  cfg.trunc_eps = 1e-6;
  const BinaryModel m = fit_binary_model(s.x, s.y, cfg);
  const Eigen::VectorXd c = m.coefficients();
  REQUIRE(c.size() == 2);
  CHECK(std::fabs(c[1] - 1.0) < 0.3);
  // the grid search holds the intercept at zero, so compare loosely
  CHECK(c[1] == doctest::Approx(grid_search_slope(s)).epsilon(0.1));
}

TEST_CASE("logistic IRLS reaches the likelihood maximum") {
  Rng rng = make_stream(43, 7);
  const Sample s = logistic_sample(rng, 500, {0.3, -0.8, 0.5});
  LearnerConfig cfg;
  cfg.trunc_eps = 1e-9;
  const Eigen::VectorXd c = fit_binary_model(s.x, s.y, cfg).coefficients();
  // score equations vanish at the MLE
  Eigen::Vector3d score = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
    const double p = testgen::expit(c[0] + c[1] * s.x(i, 0) + c[2] * s.x(i, 1));
    const double r = s.y[static_cast<std::size_t>(i)] - p;
    score += r * Eigen::Vector3d(1.0, s.x(i, 0), s.x(i, 1));
  }
  CHECK(score.norm() / 500.0 < 1e-6);
}

TEST_CASE("logistic coefficients converge with n") {
  const std::vector<double> beta{-0.2, 0.7, -0.4};
  LearnerConfig cfg;
  cfg.trunc_eps = 1e-9;
  int better = 0;
  for (int seed = 0; seed < 50; ++seed) {
    Rng rng = make_stream(1000 + seed, 3);
    const Sample small = logistic_sample(rng, 500, beta);
    const Sample big = logistic_sample(rng, 10000, beta);
    const Eigen::VectorXd cs = fit_binary_model(small.x, small.y, cfg).coefficients();
    const Eigen::VectorXd cb = fit_binary_model(big.x, big.y, cfg).coefficients();
    double es = 0.0, eb = 0.0;
    for (int j = 0; j < 3; ++j) {
      es += std::fabs(cs[j] - beta[static_cast<std::size_t>(j)]);
      eb += std::fabs(cb[j] - beta[static_cast<std::size_t>(j)]);
    }
    better += eb < es ? 1 : 0;
  }
  CHECK(better >= 45);
}

TEST_CASE("collinear design is resolved by the ridge") {
  Rng rng = make_stream(44, 7);
  Sample s = logistic_sample(rng, 300, {0.0, 1.0});
  Eigen::MatrixXd x(300, 2);
  x.col(0) = s.x.col(0);
  x.col(1) = 2.0 * s.x.col(0);
  LearnerConfig cfg;
  const BinaryModel m = fit_binary_model(x, s.y, cfg);
  CHECK(m.predict(x).allFinite());
}

TEST_CASE("non-finite features are rejected") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(10, 1);
  x(3, 0) = std::numeric_limits<double>::quiet_NaN();
  std::vector<int> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  CHECK(code_of([&] { fit_binary_model(x, y, LearnerConfig{}); }) == ErrorCode::NonFiniteFeature);
}

TEST_CASE("predictions are a pure function of the model") {
  Rng rng = make_stream(45, 7);
  const Sample s = logistic_sample(rng, 300, {0.0, 1.0, -1.0, 0.5});
  LearnerConfig cfg;
  cfg.method = LearnerMethod::TreeEnsemble;
  cfg.forest.n_trees = 50;
  const BinaryModel a = fit_binary_model(s.x, s.y, cfg, 9);
  const BinaryModel b = fit_binary_model(s.x, s.y, cfg, 9);
  const Eigen::VectorXd pa = a.predict(s.x), pb = b.predict(s.x), pa2 = a.predict(s.x);
  for (Eigen::Index i = 0; i < pa.size(); ++i) {
    CHECK(pa[i] == pb[i]);
    CHECK(pa[i] == pa2[i]);
  }
}

TEST_CASE("forest tracks a step function") {
  Rng rng = make_stream(46, 7);
  const std::size_t n = 2000;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 2);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    x(r, 0) = uniform01(rng);
    x(r, 1) = uniform01(rng);
    y[i] = uniform01(rng) < (x(r, 0) > 0.5 ? 0.8 : 0.2) ? 1 : 0;
  }
  LearnerConfig cfg;
  cfg.method = LearnerMethod::TreeEnsemble;
  cfg.forest.n_trees = 100;
  const BinaryModel m = fit_binary_model(x, y, cfg, 1);
  const std::vector<double> lo{0.2, 0.5}, hi{0.8, 0.5};
  CHECK(m.predict(std::span<const double>(lo)) == doctest::Approx(0.2).epsilon(0.5));
  CHECK(m.predict(std::span<const double>(hi)) == doctest::Approx(0.8).epsilon(0.15));
}

TEST_CASE("nuisance probabilities respect truncation") {
  Rng rng = make_stream(47, 7);
  const SurvivalDataset d = validate_dataset(testgen::random_binary(rng, 400, 3, 6));
  const TimeGrid grid = TimeGrid::unit(6);
  for (auto method : {LearnerMethod::LogisticParametric, LearnerMethod::TreeEnsemble}) {
    LearnerConfig cfg;
    cfg.method = method;
    cfg.forest.n_trees = 30;
    const NuisanceSet nu = fit_nuisance_set(d, grid, cfg);
    auto in_bounds = [&](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(),
                         [&](double p) { return p >= cfg.trunc_eps - 1e-15 && p <= 1.0 - cfg.trunc_eps + 1e-15; });
    };
    CHECK(in_bounds(nu.mu_));
    CHECK(in_bounds(nu.omega_));
    CHECK(in_bounds(nu.pi_));
    CHECK(in_bounds(nu.delta_));
    for (std::size_t i = 0; i < nu.n; ++i) CHECK(nu.delta(i, 0) + nu.delta(i, 1) == 1.0);
  }
}

TEST_CASE("instrument prevalence matches the empirical frequency") {
  Rng rng = make_stream(48, 7);
  SurvivalDataset d = testgen::random_binary(rng, 1000, 3, 6);
  for (auto& o : d.rows) o.z = uniform01(rng) < 0.5 ? 1.0 : 0.0;
  d.rows[0].z = 0, d.rows[0].a = 0;
  d.rows[1].z = 0, d.rows[1].a = 1;
  d.rows[2].z = 1, d.rows[2].a = 0;
  d.rows[3].z = 1, d.rows[3].a = 1;
  const NuisanceSet nu = fit_nuisance_set(validate_dataset(d), TimeGrid::unit(6), LearnerConfig{});
  double m = 0.0;
  for (std::size_t i = 0; i < nu.n; ++i) m += nu.delta(i, 1);
  CHECK(std::fabs(m / nu.n - 0.5) < 0.05);
}

TEST_CASE("mu beyond the last event sits at the upper bound") {
  Rng rng = make_stream(49, 7);
  SurvivalDataset d = testgen::random_binary(rng, 200, 2, 10);
  for (auto& o : d.rows) o.time = 20.0;
  const NuisanceSet nu = fit_nuisance_set(validate_dataset(d), TimeGrid::unit(10), LearnerConfig{});
  for (std::size_t i = 0; i < nu.n; ++i) CHECK(nu.mu(i, 9, 1, 1) == doctest::Approx(0.99));
}

TEST_CASE("empty stratum raises EmptyCell") {
  Rng rng = make_stream(50, 7);
  SurvivalDataset d = testgen::random_binary(rng, 100, 2, 5);
  for (auto& o : d.rows)
    if (o.z == 1.0) o.a = 1;
  CHECK(code_of([&] { fit_nuisance_set(d, TimeGrid::unit(5), LearnerConfig{}); }) == ErrorCode::EmptyCell);
}

TEST_CASE("hazard set: degenerate k = 1 events") {
  Rng rng = make_stream(51, 7);
  SurvivalDataset d = testgen::random_binary(rng, 60, 2, 3);
  for (auto& o : d.rows) {
    o.time = 1.0;
    o.r = 1;
  }
  LearnerConfig cfg;
  const HazardSet hz = fit_hazard_set(d, TimeGrid::unit(3), cfg);
  for (std::size_t i = 0; i < hz.n; ++i)
    for (int z = 0; z < 2; ++z)
      for (int a = 0; a < 2; ++a) {
        CHECK(hz.h(i, 1, z, a) == doctest::Approx(1.0 - cfg.trunc_eps));
        CHECK(hz.S(i, 1, z, a) == doctest::Approx(cfg.trunc_eps));
      }
}

TEST_CASE("hazard product recursion") {
  HazardSet hz;
  hz.resize(1, 2, 4);
  for (int z = 0; z < 2; ++z)
    for (int a = 0; a < 2; ++a) {
      hz.h_[hz.at(0, 1, z, a)] = 0.1;
      hz.h_[hz.at(0, 2, z, a)] = 0.2;
    }
  hz.rebuild_products();
  CHECK(hz.S(0, 2, 1, 0) == doctest::Approx(0.72).epsilon(1e-14));
  CHECK(hz.S(0, 0, 1, 0) == 1.0);

  Rng rng = make_stream(52, 7);
  for (auto method : {LearnerMethod::LogisticParametric, LearnerMethod::TreeEnsemble}) {
    for (auto mode : {HazardFit::Pooled, HazardFit::PerTime}) {
      const SurvivalDataset d = validate_dataset(testgen::random_binary(rng, 300, 2, 6, 0.3));
      LearnerConfig cfg;
      cfg.method = method;
      cfg.hazard_fit = mode;
      cfg.forest.n_trees = 20;
      for (bool by_z : {true, false}) {
        const HazardSet f = fit_hazard_set(d, TimeGrid::unit(6), cfg, by_z);
        const int zs = by_z ? 2 : 1;
        double worst = 0.0;
        for (std::size_t i = 0; i < f.n; ++i)
          for (int k = 1; k <= 6; ++k)
            for (int z = 0; z < zs; ++z)
              for (int a = 0; a < 2; ++a) {
                worst = std::max(worst, std::fabs(f.S(i, k, z, a) - f.S(i, k - 1, z, a) * (1.0 - f.h(i, k, z, a))));
                worst = std::max(worst, std::fabs(f.G(i, k, z, a) - f.G(i, k - 1, z, a) * (1.0 - f.g(i, k, z, a))));
                CHECK(f.S(i, k, z, a) <= f.S(i, k - 1, z, a));
                CHECK(f.G(i, k, z, a) > 0.0);
              }
        CHECK(worst <= 1e-12);
      }
    }
  }
}

TEST_CASE("administrative censoring at 20 gives no early censoring hazard") {
  DgpConfig c = DgpConfig::cox_scenario(3);
  Rng rng = make_stream(53, 7);
  const SurvivalDataset d = validate_dataset(sample_dgp(c, rng).data);
  int early = 0;
  for (const auto& o : d.rows) early += o.r == 0 && o.time < 20 ? 1 : 0;
  REQUIRE(early == 0);
  const HazardSet hz = fit_hazard_set(d, TimeGrid::unit(30), LearnerConfig{});
  LearnerConfig cfg;
  for (std::size_t i = 0; i < hz.n; ++i)
    for (int k = 1; k < 20; ++k) CHECK(hz.g(i, k, 1, 1) <= cfg.trunc_eps + 1e-9);
}

TEST_CASE("per-time hazards report empty risk sets") {
  DgpConfig c = DgpConfig::cox_scenario(3);
  Rng rng = make_stream(54, 7);
  const SurvivalDataset d = validate_dataset(sample_dgp(c, rng).data);
  LearnerConfig cfg;
  cfg.hazard_fit = HazardFit::PerTime;
  CHECK(code_of([&] { fit_hazard_set(d, TimeGrid::unit(30), cfg); }) == ErrorCode::EmptyRiskSet);
}

TEST_CASE("conditional Gaussian instrument density") {
  Rng rng = make_stream(55, 7);
  std::normal_distribution<double> nd;
  const std::size_t n = 2000;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 2);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(static_cast<Eigen::Index>(i), 0) = nd(rng);
    x(static_cast<Eigen::Index>(i), 1) = nd(rng);
    z[i] = -x(static_cast<Eigen::Index>(i), 0) - x(static_cast<Eigen::Index>(i), 1) + nd(rng);
  }
  const IvDensityModel m = fit_iv_density_model(x, z, LearnerConfig{});
  const std::vector<double> x0{0.3, -0.2};
  const double peak = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  CHECK(std::fabs(m(-0.1, x0) - peak) < 0.05);
  CHECK(m(0.7, x0) / m(0.7, x0) == 1.0);

  LearnerConfig k;
  k.density = DensityMethod::KernelResidual;
  const IvDensityModel mk = fit_iv_density_model(x, z, k);
  CHECK(std::fabs(mk(-0.1, x0) - peak) < 0.05);
  CHECK(mk.bandwidth() > 0.0);

  std::vector<double> flat(n, 1.5);
  CHECK(code_of([&] { fit_iv_density_model(x, flat, LearnerConfig{}); }) == ErrorCode::ZeroVarianceInstrument);
}

TEST_CASE("learner config validation") {
  LearnerConfig cfg;
  cfg.trunc_eps = 0.5;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::Config);
  cfg.trunc_eps = 0.0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::Config);
}
