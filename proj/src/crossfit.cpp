#include "ivsurv/crossfit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ivsurv/error.hpp"
#include "ivsurv/parallel.hpp"
#include "ivsurv/rng.hpp"

namespace ivsurv {

std::vector<std::size_t> FoldAssignment::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldAssignment make_folds(std::size_t n, int K, std::uint64_t seed) {
  if (K < 2) throw Error(ErrorCode::Config, "K must be >= 2");
  if (n < static_cast<std::size_t>(K))
    throw Error(ErrorCode::KTooLarge, "K=" + std::to_string(K) + " exceeds n=" + std::to_string(n));
  FoldAssignment f;
  f.n = n;
  f.K = K;
  f.seed = seed;
  f.fold_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.fold_of[i] = static_cast<int>(i % static_cast<std::size_t>(K));
  Rng rng = make_stream(seed, 0xf01d);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(f.fold_of[i - 1], f.fold_of[pick(rng)]);
  }
  return f;
}

namespace {

void require_matching_instrument(const SurvivalDataset& data, EstimatorKind kind) {
  if (is_continuous(kind) != (data.iv_kind == IvKind::Continuous))
    throw Error(ErrorCode::IncompatibleInstrument,
                std::string("estimator '") + estimator_name(kind) + "' does not match the instrument type");
}

}  // namespace

EstimateCurve estimate_split(const SurvivalDataset& train, const FeatureSet& train_x, const SurvivalDataset& eval,
                             const FeatureSet& eval_x, const TimeGrid& grid, const EstimationSettings& s,
                             std::optional<std::pair<double, double>> support) {
  require_matching_instrument(train, s.kind);
  switch (s.kind) {
    case EstimatorKind::IfBinary:
    case EstimatorKind::Ipw:
    case EstimatorKind::PlugIn: {
      const NuisanceSet nu = s.override_fit ? s.override_fit(train, eval)
                                            : fit_nuisance_set(train, train_x, eval_x, grid, s.learner, s.nuisance);
      if (s.kind == EstimatorKind::IfBinary) return estimate_if_binary(eval, nu, grid, s.denom_floor);
      if (s.kind == EstimatorKind::Ipw) return estimate_ipw(eval, nu, grid, s.denom_floor);
      return estimate_plugin(eval, nu, grid, s.denom_floor);
    }
    case EstimatorKind::NaiveHazard:
      return estimate_naive_hazard(eval, fit_hazard_set(train, train_x, eval_x, grid, s.learner, false, s.nuisance),
                                   grid);
    case EstimatorKind::IfHazard:
      return estimate_if_hazard(eval, fit_hazard_set(train, train_x, eval_x, grid, s.learner, true, s.nuisance), grid,
                                s.denom_floor);
    case EstimatorKind::IfContinuous:
    case EstimatorKind::IpwContinuous:
    case EstimatorKind::PlugInContinuous: {
      const ContinuousNuisanceSet nu =
          fit_continuous_nuisance_set(train, train_x, eval, eval_x, grid, s.kappa, s.learner, support);
      if (s.kind == EstimatorKind::IfContinuous) return estimate_if_continuous(eval, nu, s.kappa, grid, s.denom_floor);
      if (s.kind == EstimatorKind::IpwContinuous)
        return estimate_ipw_continuous(eval, nu, s.kappa, grid, s.denom_floor);
      return estimate_plugin_continuous(eval, nu, s.kappa, grid, s.denom_floor);
    }
  }
  throw Error(ErrorCode::Config, "unknown estimator");
}

namespace {

FeatureSet resolve_features(const SurvivalDataset& data, const std::optional<FeatureSet>& features) {
  if (!features) return FeatureSet::uniform(data.covariates());
  if (features->size() != data.size())
    throw Error(ErrorCode::DimensionMismatch, "feature matrices do not match the dataset");
  return *features;
}

std::optional<std::pair<double, double>> support_of(const SurvivalDataset& data, const EstimationSettings& s) {
  require_matching_instrument(data, s.kind);
  if (!is_continuous(s.kind)) return std::nullopt;
  return instrument_support(data, s.kappa);
}

}  // namespace

CrossfitResult crossfit_curve(const SurvivalDataset& data, const TimeGrid& grid, const EstimationSettings& settings,
                              std::uint64_t seed, const std::optional<FeatureSet>& features) {
  const FoldAssignment folds = make_folds(data.size(), settings.K, seed);
  const FeatureSet fx = resolve_features(data, features);
  const auto support = support_of(data, settings);

  CrossfitResult res;
  res.folds.resize(static_cast<std::size_t>(settings.K));
  parallel_for(res.folds.size(), [&](std::size_t k) {
    const auto eval_idx = folds.members(static_cast<int>(k));
    const auto train_idx = folds.complement(static_cast<int>(k));
    EstimationSettings fs = settings;
    fs.learner.seed = stream_seed(seed, 0xc0ffee, k);
    res.folds[k] = estimate_split(subset(data, train_idx), fx.rows(train_idx), subset(data, eval_idx),
                                  fx.rows(eval_idx), grid, fs, support);
  });

  EstimateCurve& c = res.curve;
  c.grid = grid;
  c.psi.assign(grid.size(), 0.0);
  const double inv_k = 1.0 / static_cast<double>(settings.K);
  for (const auto& f : res.folds) {
    for (std::size_t t = 0; t < grid.size(); ++t) c.psi[t] += f.psi[t] * inv_k;
    c.denominator += f.denominator * inv_k;
    c.weak_instrument = c.weak_instrument || f.weak_instrument;
  }
  return res;
}

EstimateCurve run_pipeline(const SurvivalDataset& data, const TimeGrid& grid, const EstimationSettings& settings,
                           std::uint64_t seed, const std::optional<FeatureSet>& features) {
  if (settings.K >= 2) return crossfit_curve(data, grid, settings, seed, features).curve;
  if (settings.K != 1) throw Error(ErrorCode::Config, "K must be >= 1");
  const FeatureSet fx = resolve_features(data, features);
  EstimationSettings fs = settings;
  fs.learner.seed = stream_seed(seed, 0xc0ffee, 0);
  return estimate_split(data, fx, data, fx, grid, fs, support_of(data, settings));
}

void BootstrapConfig::validate() const {
  if (B < 2) throw Error(ErrorCode::Config, "bootstrap B must be >= 2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::Config, "bootstrap alpha must lie in (0, 1)");
}

std::pair<std::vector<double>, std::vector<double>> percentile_band(const std::vector<std::vector<double>>& reps,
                                                                    double alpha) {
  if (reps.empty()) throw Error(ErrorCode::BootstrapUnstable, "no successful bootstrap replicates");
  const std::size_t T = reps.front().size();
  const double last = static_cast<double>(reps.size() - 1);
  const auto lo_pos = static_cast<std::size_t>(std::floor(alpha / 2.0 * last));
  const auto hi_pos = static_cast<std::size_t>(std::ceil((1.0 - alpha / 2.0) * last));
  std::vector<double> lo(T), hi(T), col(reps.size());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t b = 0; b < reps.size(); ++b) col[b] = reps[b][t];
    std::sort(col.begin(), col.end());
    lo[t] = col[lo_pos];
    hi[t] = col[std::min(hi_pos, col.size() - 1)];
  }
  return {lo, hi};
}

BootstrapResult bootstrap_curve(const SurvivalDataset& data, const TimeGrid& grid, const EstimationSettings& settings,
                                const BootstrapConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  constexpr int kRedraws = 10;
  BootstrapResult res;
  res.curve = run_pipeline(data, grid, settings, seed);

  const std::size_t B = static_cast<std::size_t>(cfg.B);
  std::vector<std::vector<double>> reps(B);
  std::vector<char> ok(B, 0);
  const std::size_t n = data.size();
  parallel_for(B, [&](std::size_t b) {
    for (int attempt = 0; attempt <= kRedraws; ++attempt) {
      Rng rng = make_stream(cfg.seed, b, static_cast<std::uint64_t>(attempt));
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      std::vector<std::size_t> idx(n);
      for (auto& i : idx) i = pick(rng);
      try {
        const SurvivalDataset boot = validate_dataset(subset(data, idx));
        EstimateCurve c = run_pipeline(boot, grid, settings, stream_seed(seed, b, static_cast<std::uint64_t>(attempt)));
        if (c.weak_instrument) continue;
        reps[b] = std::move(c.psi);
        ok[b] = 1;
        return;
      } catch (const Error& e) {
        switch (e.code()) {
          case ErrorCode::EmptyCell:
          case ErrorCode::EmptyRiskSet:
          case ErrorCode::DegenerateArm:
          case ErrorCode::KappaNonPositive:
            continue;
          default:
            throw;
        }
      }
    }
  });
  for (std::size_t b = 0; b < B; ++b) {
    if (ok[b])
      res.replicates.push_back(std::move(reps[b]));
    else
      ++res.failed;
  }
  if (static_cast<double>(res.failed) > 0.1 * static_cast<double>(B))
    throw Error(ErrorCode::BootstrapUnstable, "failure fraction " + std::to_string(res.failed) + "/" +
                                                  std::to_string(B) + " exceeds 10%");
  auto [lo, hi] = percentile_band(res.replicates, cfg.alpha);
  res.curve.ci_lo = std::move(lo);
  res.curve.ci_hi = std::move(hi);
  return res;
}

}  // namespace ivsurv
