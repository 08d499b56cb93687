// Weighted model performance metrics: AUC, log-loss, threshold error
// rates, logistic recalibration, absolute calibration error, intergroup
// variance, and stratified percentile bootstrap intervals.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace riskdca {

// All metric functions renormalize the supplied nonnegative weights
// internally, so they are invariant to uniform rescaling and can be
// applied to any subset (group, bootstrap resample) directly.

// Probability clipping bound for losses and logit transforms.
inline constexpr double kProbEps = 1e-15;

double clip_probability(double p);
double logit(double p);

// Censoring-adjusted AUC: weighted probability that a positive outranks
// a negative, ties counting one half. Sort-based O(n log n).
double ipcw_auc(std::span<const double> scores, std::span<const int> y,
                std::span<const double> weights);

double ipcw_log_loss(std::span<const double> scores, std::span<const int> y,
                     std::span<const double> weights);

enum class RateKind { kTruePositive, kFalsePositive };

// Class-restricted weighted rate of s >= threshold (inclusive rule).
double ipcw_rate(std::span<const double> scores, std::span<const int> y,
                 std::span<const double> weights, double threshold,
                 RateKind kind);

// Two-parameter recalibration curve c(s) = sigmoid(a + b * logit(s)).
struct CalibrationModel {
  double intercept = 0.0;  // a
  double slope = 1.0;      // b

  double operator()(double s) const;
};

// Weighted maximum likelihood fit of (a, b) by Newton iterations;
// converged when the gradient norm falls below `tol`.
CalibrationModel fit_calibration_curve(std::span<const double> scores,
                                       std::span<const int> y,
                                       std::span<const double> weights,
                                       int max_iter = 100, double tol = 1e-8);

// Analytic inverse sigmoid((logit(target) - a) / b); requires slope > 0.
double invert_calibration(const CalibrationModel& model, double target);

// Weighted mean of |s - c(s)|.
double ace(std::span<const double> scores, std::span<const int> y,
           std::span<const double> weights, const CalibrationModel& calibration);

// Population variance across the K per-group values.
double intergroup_variance(std::span<const double> values);

struct BootstrapCI {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  int n_replicates = 0;
  std::uint64_t seed = 0;
};

// A statistic maps a resampled index multiset to a value. Several
// statistics (one per trained model) may be pooled into one interval.
using BootstrapStatistic = std::function<double(const std::vector<int>&)>;

// Resamples within strata with replacement, preserving stratum sizes.
// Replicate r uses the RNG stream (seed, r), so results do not depend on
// evaluation order. Percentile interval at 2.5% / 97.5% with linear
// interpolation between order statistics.
BootstrapCI stratified_bootstrap(const std::vector<BootstrapStatistic>& statistics,
                                 const std::vector<int>& strata,
                                 int n_replicates, std::uint64_t seed);

// Interpolated empirical quantile of a sorted vector (type 7).
double percentile_sorted(const std::vector<double>& sorted, double p);

}  // namespace riskdca
