#include "riskdca/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "riskdca/errors.hpp"
#include "riskdca/rng.hpp"

namespace riskdca {

double clip_probability(double p) {
  return std::min(1.0 - kProbEps, std::max(kProbEps, p));
}

double logit(double p) {
  p = clip_probability(p);
  return std::log(p / (1.0 - p));
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

void check_sizes(std::span<const double> scores, std::span<const int> y,
                 std::span<const double> weights) {
  if (scores.size() != y.size() || scores.size() != weights.size())
    throw DomainError("scores, outcomes, and weights must have equal length");
}

}  // namespace

double ipcw_auc(std::span<const double> scores, std::span<const int> y,
                std::span<const double> weights) {
  check_sizes(scores, y, weights);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double w_pos = 0.0, w_neg = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    (y[i] ? w_pos : w_neg) += weights[i];
  if (w_pos <= 0.0 || w_neg <= 0.0)
    throw MetricUndefined("AUC undefined: a class has zero total weight");

  // Single ascending sweep; within a tie block positives credit half the
  // block's negative mass.
  double auc = 0.0;
  double neg_below = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    double block_neg = 0.0, block_pos = 0.0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (y[order[j]])
        block_pos += weights[order[j]];
      else
        block_neg += weights[order[j]];
      ++j;
    }
    auc += block_pos * (neg_below + 0.5 * block_neg);
    neg_below += block_neg;
    i = j;
  }
  return auc / (w_pos * w_neg);
}

double ipcw_log_loss(std::span<const double> scores, std::span<const int> y,
                     std::span<const double> weights) {
  check_sizes(scores, y, weights);
  double total_w = 0.0, loss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double s = clip_probability(scores[i]);
    loss += weights[i] * (y[i] ? -std::log(s) : -std::log(1.0 - s));
    total_w += weights[i];
  }
  if (total_w <= 0.0) throw MetricUndefined("log-loss undefined: zero weight");
  return loss / total_w;
}

double ipcw_rate(std::span<const double> scores, std::span<const int> y,
                 std::span<const double> weights, double threshold,
                 RateKind kind) {
  check_sizes(scores, y, weights);
  const int target = kind == RateKind::kTruePositive ? 1 : 0;
  double w_class = 0.0, w_hit = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (y[i] != target) continue;
    w_class += weights[i];
    if (scores[i] >= threshold) w_hit += weights[i];
  }
  if (w_class <= 0.0)
    throw MetricUndefined("rate undefined: conditioning class has zero weight");
  return w_hit / w_class;
}

double CalibrationModel::operator()(double s) const {
  if (intercept == 0.0 && slope == 1.0) return s;  // exact identity
  return sigmoid(intercept + slope * logit(s));
}

CalibrationModel fit_calibration_curve(std::span<const double> scores,
                                       std::span<const int> y,
                                       std::span<const double> weights,
                                       int max_iter, double tol) {
  check_sizes(scores, y, weights);
  double w_pos = 0.0, w_neg = 0.0, total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (y[i] ? w_pos : w_neg) += weights[i];
    total += weights[i];
  }
  if (w_pos <= 0.0 || w_neg <= 0.0)
    throw MetricUndefined(
        "calibration fit undefined: a class has zero total weight");

  std::vector<double> z(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) z[i] = logit(scores[i]);

  // Newton on the weighted logistic likelihood of y given logit(s).
  Eigen::Vector2d beta(0.0, 1.0);
  double grad_norm = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();
    for (std::size_t i = 0; i < scores.size(); ++i) {
      double p = sigmoid(beta[0] + beta[1] * z[i]);
      double r = (weights[i] / total) * (p - y[i]);
      Eigen::Vector2d row(1.0, z[i]);
      grad += r * row;
      hess += (weights[i] / total) * p * (1.0 - p) * row * row.transpose();
    }
    grad_norm = grad.norm();
    if (grad_norm < tol) {
      CalibrationModel model;
      model.intercept = beta[0];
      model.slope = beta[1];
      return model;
    }
    hess.diagonal().array() += 1e-12;
    beta -= hess.ldlt().solve(grad);
    if (!beta.allFinite())
      throw ConvergenceError("calibration fit produced non-finite iterate",
                             beta[0], beta[1], grad_norm);
  }
  throw ConvergenceError("calibration fit did not converge", beta[0], beta[1],
                         grad_norm);
}

double invert_calibration(const CalibrationModel& model, double target) {
  if (model.slope <= 0.0)
    throw NonInvertible("calibration curve not invertible: slope <= 0");
  if (target <= 0.0 || target >= 1.0)
    throw DomainError("inversion target must lie in (0,1)");
  if (model.intercept == 0.0 && model.slope == 1.0) return target;  // exact
  return sigmoid((logit(target) - model.intercept) / model.slope);
}

double ace(std::span<const double> scores, std::span<const int> y,
           std::span<const double> weights,
           const CalibrationModel& calibration) {
  check_sizes(scores, y, weights);
  double total = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    acc += weights[i] * std::abs(scores[i] - calibration(scores[i]));
    total += weights[i];
  }
  if (total <= 0.0) throw MetricUndefined("ACE undefined: zero weight");
  return acc / total;
}

double intergroup_variance(std::span<const double> values) {
  if (values.empty()) throw DomainError("intergroup variance of no groups");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return var / static_cast<double>(values.size());
}

double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw DomainError("percentile of empty vector");
  if (sorted.size() == 1) return sorted[0];
  double h = p * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(h));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapCI stratified_bootstrap(
    const std::vector<BootstrapStatistic>& statistics,
    const std::vector<int>& strata, int n_replicates, std::uint64_t seed) {
  if (statistics.empty()) throw ConfigError("no bootstrap statistics supplied");
  if (n_replicates < 1) throw ConfigError("n_replicates must be >= 1");

  std::map<int, std::vector<int>> members;
  for (std::size_t i = 0; i < strata.size(); ++i)
    members[strata[i]].push_back(static_cast<int>(i));
  if (members.empty()) throw ConfigError("no samples to bootstrap");
  for (const auto& [label, idx] : members)
    if (idx.empty()) throw ConfigError("empty bootstrap stratum");

  std::vector<int> identity(strata.size());
  std::iota(identity.begin(), identity.end(), 0);

  BootstrapCI ci;
  ci.n_replicates = n_replicates;
  ci.seed = seed;
  double point = 0.0;
  for (const auto& stat : statistics) point += stat(identity);
  ci.point = point / static_cast<double>(statistics.size());

  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n_replicates) * statistics.size());
  std::vector<int> resample(strata.size());
  for (int r = 0; r < n_replicates; ++r) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r));
    std::size_t pos = 0;
    for (const auto& [label, idx] : members) {
      for (std::size_t k = 0; k < idx.size(); ++k)
        resample[pos++] = idx[static_cast<std::size_t>(rng.below(idx.size()))];
    }
    for (const auto& stat : statistics) values.push_back(stat(resample));
  }
  std::sort(values.begin(), values.end());
  ci.lower = percentile_sorted(values, 0.025);
  ci.upper = percentile_sorted(values, 0.975);
  return ci;
}

}  // namespace riskdca
