#include "ivsurv/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <variant>

#include "ivsurv/error.hpp"
#include "ivsurv/parallel.hpp"
#include "ivsurv/rng.hpp"

namespace ivsurv {

namespace {

constexpr double kRidge = 1e-8;
constexpr double kGradTol = 1e-8;
constexpr int kMaxIter = 100;
constexpr double kEtaClamp = 30.0;

double expit(double eta) {
  eta = std::clamp(eta, -kEtaClamp, kEtaClamp);
  return 1.0 / (1.0 + std::exp(-eta));
}

double clamp_prob(double p, double eps) { return std::clamp(p, eps, 1.0 - eps); }

void check_finite(const Eigen::MatrixXd& x) {
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteFeature, "feature matrix has non-finite entries");
}

struct ConstantModel {
  double p;
};

struct LogisticModel {
  Eigen::VectorXd mean, scale;  // per feature; scale 0 marks a dropped column
  Eigen::VectorXd beta;         // standardized scale, intercept first

  double eta(std::span<const double> x) const {
    double e = beta[0];
    for (Eigen::Index j = 0; j < mean.size(); ++j)
      if (scale[j] > 0.0) e += beta[j + 1] * (x[static_cast<std::size_t>(j)] - mean[j]) / scale[j];
    return e;
  }
};

struct Node {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double value = 0.0;
};

struct ForestModel {
  std::vector<std::vector<Node>> trees;

  double predict(std::span<const double> x) const {
    double s = 0.0;
    for (const auto& tree : trees) {
      int k = 0;
      while (tree[static_cast<std::size_t>(k)].feature >= 0) {
        const Node& nd = tree[static_cast<std::size_t>(k)];
        k = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
      }
      s += tree[static_cast<std::size_t>(k)].value;
    }
    return s / static_cast<double>(trees.size());
  }
};

}  // namespace

struct BinaryModel::Impl {
  LearnerMethod method = LearnerMethod::LogisticParametric;
  std::size_t dim = 0;
  double eps = 0.01;
  std::variant<ConstantModel, LogisticModel, ForestModel> model;
};

void LearnerConfig::validate() const {
  if (!(trunc_eps > 0.0 && trunc_eps < 0.5)) throw Error(ErrorCode::Config, "trunc_eps must lie in (0, 0.5)");
  if (hazard_trunc_eps && !(*hazard_trunc_eps > 0.0 && *hazard_trunc_eps < 0.5))
    throw Error(ErrorCode::Config, "hazard_trunc_eps must lie in (0, 0.5)");
  if (outcome_trunc_eps && !(*outcome_trunc_eps > 0.0 && *outcome_trunc_eps < 0.5))
    throw Error(ErrorCode::Config, "outcome_trunc_eps must lie in (0, 0.5)");
  if (forest.n_trees < 1) throw Error(ErrorCode::Config, "n_trees must be >= 1");
  if (forest.min_node < 1) throw Error(ErrorCode::Config, "min_node must be >= 1");
  if (forest.mtry < 0) throw Error(ErrorCode::Config, "mtry must be >= 0");
  if (!(forest.subsample > 0.0 && forest.subsample <= 1.0))
    throw Error(ErrorCode::Config, "subsample must lie in (0, 1]");
  if (forest.max_bins < 2 || forest.max_bins > 256) throw Error(ErrorCode::Config, "max_bins must lie in [2, 256]");
}

BinaryModel::BinaryModel() : BinaryModel(constant(0.5, 0.01)) {}

BinaryModel::BinaryModel(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

BinaryModel BinaryModel::constant(double p, double trunc_eps) {
  auto impl = std::make_shared<Impl>();
  impl->eps = trunc_eps;
  impl->model = ConstantModel{clamp_prob(p, trunc_eps)};
  return BinaryModel(std::move(impl));
}

LearnerMethod BinaryModel::method() const { return impl_->method; }
std::size_t BinaryModel::feature_dim() const { return impl_->dim; }
bool BinaryModel::is_constant() const { return std::holds_alternative<ConstantModel>(impl_->model); }

double BinaryModel::predict(std::span<const double> x) const {
  const Impl& m = *impl_;
  if (const auto* c = std::get_if<ConstantModel>(&m.model)) return c->p;
  if (x.size() != m.dim)
    throw Error(ErrorCode::DimensionMismatch,
                "predict: expected " + std::to_string(m.dim) + " features, got " + std::to_string(x.size()));
  for (double v : x)
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteFeature, "predict: non-finite feature");
  if (const auto* lm = std::get_if<LogisticModel>(&m.model)) return clamp_prob(expit(lm->eta(x)), m.eps);
  return clamp_prob(std::get<ForestModel>(m.model).predict(x), m.eps);
}

Eigen::VectorXd BinaryModel::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) row[static_cast<std::size_t>(j)] = x(i, j);
    out[i] = predict(row);
  }
  return out;
}

Eigen::VectorXd BinaryModel::coefficients() const {
  const auto* lm = std::get_if<LogisticModel>(&impl_->model);
  if (!lm) return {};
  const Eigen::Index p = lm->mean.size();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p + 1);
  b[0] = lm->beta[0];
  for (Eigen::Index j = 0; j < p; ++j) {
    if (lm->scale[j] <= 0.0) continue;
    b[j + 1] = lm->beta[j + 1] / lm->scale[j];
    b[0] -= lm->beta[j + 1] * lm->mean[j] / lm->scale[j];
  }
  return b;
}

namespace {

LogisticModel fit_logistic(const Eigen::MatrixXd& x, std::span<const int> y) {
  const Eigen::Index n = x.rows(), p = x.cols();
  LogisticModel m;
  m.mean = x.colwise().mean().transpose();
  m.scale.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double var = (x.col(j).array() - m.mean[j]).square().sum() / static_cast<double>(n);
    m.scale[j] = var > 1e-24 ? std::sqrt(var) : 0.0;
  }
  Eigen::MatrixXd d(n, p + 1);
  d.col(0).setOnes();
  for (Eigen::Index j = 0; j < p; ++j)
    if (m.scale[j] > 0.0)
      d.col(j + 1) = ((x.col(j).array() - m.mean[j]) / m.scale[j]).matrix();
    else
      d.col(j + 1).setZero();
  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv[i] = y[static_cast<std::size_t>(i)];

  const double ybar = std::clamp(yv.mean(), 1e-6, 1.0 - 1e-6);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  beta[0] = std::log(ybar / (1.0 - ybar));

  auto objective = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = d * b;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = std::clamp(eta[i], -kEtaClamp, kEtaClamp);
      // log(1 + exp(e)) computed stably
      const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      ll += yv[i] * e - softplus;
    }
    return ll - 0.5 * kRidge * b.squaredNorm();
  };

  double current = objective(beta);
  for (int iter = 0; iter < kMaxIter; ++iter) {
    const Eigen::VectorXd eta = d * beta;
    Eigen::VectorXd prob(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = expit(eta[i]);
      w[i] = prob[i] * (1.0 - prob[i]);
    }
    const Eigen::VectorXd grad = d.transpose() * (yv - prob) - kRidge * beta;
    if (grad.norm() / static_cast<double>(n) < kGradTol) break;
    Eigen::MatrixXd hess = d.transpose() * w.asDiagonal() * d;
    hess.diagonal().array() += kRidge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd step = ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite())
      throw Error(ErrorCode::SingularDesign, "IRLS normal equations could not be solved");

    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 30; ++half) {
      const Eigen::VectorXd cand = beta + scale * step;
      const double obj = objective(cand);
      if (obj >= current - 1e-12 * std::abs(current)) {
        beta = cand;
        improved = obj > current;
        current = obj;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
  }
  m.beta = beta;
  return m;
}

// Per-feature quantile cut points; value x falls in bin #(edges < x).
struct Binning {
  std::vector<std::vector<double>> edges;
  std::vector<std::uint8_t> codes;  // column-major n x p
  std::size_t n = 0;
};

Binning make_bins(const Eigen::MatrixXd& x, int max_bins) {
  Binning b;
  b.n = static_cast<std::size_t>(x.rows());
  const std::size_t p = static_cast<std::size_t>(x.cols());
  b.edges.resize(p);
  b.codes.resize(b.n * p);
  std::vector<double> col(b.n);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < b.n; ++i) col[i] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    std::vector<double> sorted = col;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> uniq = sorted;
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    auto& e = b.edges[j];
    if (uniq.size() <= static_cast<std::size_t>(max_bins)) {
      for (std::size_t u = 0; u + 1 < uniq.size(); ++u) e.push_back(0.5 * (uniq[u] + uniq[u + 1]));
    } else {
      for (int q = 1; q < max_bins; ++q) {
        const std::size_t pos = static_cast<std::size_t>(
            std::floor(static_cast<double>(q) * static_cast<double>(b.n - 1) / max_bins));
        const double lo = sorted[pos];
        // cut between this order statistic and the next distinct value
        auto nxt = std::upper_bound(uniq.begin(), uniq.end(), lo);
        if (nxt == uniq.end()) continue;
        const double cut = 0.5 * (lo + *nxt);
        if (e.empty() || cut > e.back()) e.push_back(cut);
      }
    }
    for (std::size_t i = 0; i < b.n; ++i)
      b.codes[j * b.n + i] =
          static_cast<std::uint8_t>(std::lower_bound(e.begin(), e.end(), col[i]) - e.begin());
  }
  return b;
}

std::vector<Node> grow_tree(const Binning& bins, const std::vector<double>& y, std::vector<std::size_t> idx,
                            const ForestParams& fp, int mtry, Rng& rng) {
  const std::size_t p = bins.edges.size();
  std::vector<Node> nodes;
  struct Task {
    int node;
    std::size_t begin, end;
  };
  std::vector<Task> stack;
  nodes.emplace_back();
  stack.push_back({0, 0, idx.size()});

  std::vector<std::size_t> features(p);
  std::iota(features.begin(), features.end(), 0);
  std::vector<double> hist_sum(256);
  std::vector<int> hist_n(256);

  while (!stack.empty()) {
    const Task task = stack.back();
    stack.pop_back();
    const std::size_t count = task.end - task.begin;
    double total = 0.0;
    for (std::size_t k = task.begin; k < task.end; ++k) total += y[idx[k]];
    nodes[static_cast<std::size_t>(task.node)].value = total / static_cast<double>(count);
    if (count <= static_cast<std::size_t>(fp.min_node) || total == 0.0 || total == static_cast<double>(count))
      continue;

    // partial Fisher-Yates draw of mtry candidate features
    for (int f = 0; f < mtry; ++f) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(f), p - 1);
      std::swap(features[static_cast<std::size_t>(f)], features[pick(rng)]);
    }
    const double parent = total * total / static_cast<double>(count);
    double best_gain = 1e-12;
    std::size_t best_f = p;
    int best_bin = -1;
    for (int f = 0; f < mtry; ++f) {
      const std::size_t j = features[static_cast<std::size_t>(f)];
      const int nb = static_cast<int>(bins.edges[j].size()) + 1;
      if (nb < 2) continue;
      std::fill_n(hist_sum.begin(), nb, 0.0);
      std::fill_n(hist_n.begin(), nb, 0);
      const std::uint8_t* codes = bins.codes.data() + j * bins.n;
      for (std::size_t k = task.begin; k < task.end; ++k) {
        const std::size_t i = idx[k];
        hist_sum[codes[i]] += y[i];
        ++hist_n[codes[i]];
      }
      double sl = 0.0;
      int nl = 0;
      for (int bin = 0; bin + 1 < nb; ++bin) {
        sl += hist_sum[static_cast<std::size_t>(bin)];
        nl += hist_n[static_cast<std::size_t>(bin)];
        const int nr = static_cast<int>(count) - nl;
        if (nl == 0 || hist_n[static_cast<std::size_t>(bin)] == 0) continue;
        if (nr == 0) break;
        const double sr = total - sl;
        const double gain = sl * sl / nl + sr * sr / nr - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = j;
          best_bin = bin;
        }
      }
    }
    if (best_bin < 0) continue;

    const std::uint8_t* codes = bins.codes.data() + best_f * bins.n;
    auto mid = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(task.begin),
                              idx.begin() + static_cast<std::ptrdiff_t>(task.end),
                              [&](std::size_t i) { return codes[i] <= best_bin; });
    const std::size_t split = static_cast<std::size_t>(mid - idx.begin());
    const int left = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes.emplace_back();
    Node& nd = nodes[static_cast<std::size_t>(task.node)];
    nd.feature = static_cast<int>(best_f);
    nd.threshold = bins.edges[best_f][static_cast<std::size_t>(best_bin)];
    nd.left = left;
    nd.right = left + 1;
    stack.push_back({left + 1, split, task.end});
    stack.push_back({left, task.begin, split});
  }
  return nodes;
}

ForestModel fit_forest(const Eigen::MatrixXd& x, std::span<const int> labels, const ForestParams& fp,
                       std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  const std::size_t p = static_cast<std::size_t>(x.cols());
  const Binning bins = make_bins(x, fp.max_bins);
  std::vector<double> y(labels.begin(), labels.end());
  const int mtry = fp.mtry > 0 ? std::min<int>(fp.mtry, static_cast<int>(p))
                               : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))));
  const std::size_t m =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fp.subsample * static_cast<double>(n))), 1, n);

  ForestModel forest;
  forest.trees.resize(static_cast<std::size_t>(fp.n_trees));
  parallel_for(forest.trees.size(), [&](std::size_t t) {
    Rng rng = make_stream(seed, 0x7ee5, t);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t k = 0; k < m; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, n - 1);
      std::swap(all[k], all[pick(rng)]);
    }
    all.resize(m);
    forest.trees[t] = grow_tree(bins, y, std::move(all), fp, mtry, rng);
  });
  return forest;
}

}  // namespace

BinaryModel fit_binary_model(const Eigen::MatrixXd& features, std::span<const int> labels,
                             const LearnerConfig& config, std::uint64_t seed) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw Error(ErrorCode::DimensionMismatch, "features and labels differ in length");
  if (labels.empty()) throw Error(ErrorCode::EmptyCell, "no rows to fit");
  check_finite(features);
  std::size_t ones = 0;
  for (int v : labels) {
    if (v != 0 && v != 1) throw Error(ErrorCode::InvalidObservation, "labels must be binary");
    ones += static_cast<std::size_t>(v);
  }
  const double mean = static_cast<double>(ones) / static_cast<double>(labels.size());
  if (ones == 0 || ones == labels.size() || labels.size() < 2) return BinaryModel::constant(mean, config.trunc_eps);

  auto impl = std::make_shared<BinaryModel::Impl>();
  impl->method = config.method;
  impl->dim = static_cast<std::size_t>(features.cols());
  impl->eps = config.trunc_eps;
  if (config.method == LearnerMethod::LogisticParametric)
    impl->model = fit_logistic(features, labels);
  else
    impl->model = fit_forest(features, labels, config.forest, seed);
  return BinaryModel(std::move(impl));
}

}  // namespace ivsurv
