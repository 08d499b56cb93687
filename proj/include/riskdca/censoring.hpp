// Composite binary outcomes at a fixed horizon and inverse probability
// of censoring weights derived from a discrete-time hazard model of the
// censoring distribution.
#pragma once

#include <string>
#include <vector>

#include "riskdca/cohort.hpp"

namespace riskdca {

struct CompositeOutcome {
  int y = 0;        // 1 if the event occurred at or before the horizon
  double u_y = 0;   // min(event time, censoring time, horizon)
  int delta_y = 0;  // 1 if the binary outcome is uncensored
};

// Follow-up observed as (time, event flag): when the flag is set the
// event time equals `followup_time` and censoring happened later;
// otherwise the censoring time equals `followup_time`.
CompositeOutcome derive_composite_outcome(double followup_time,
                                          bool event_indicator, double horizon);

std::vector<CompositeOutcome> composite_outcomes(const Cohort& cohort);

// Discrete-time logistic hazard for the censoring time. Interval j spans
// (boundaries[j-1], boundaries[j]]; each interval carries its own
// intercept and feature coefficient vector.
struct CensoringModel {
  std::vector<double> boundaries;  // B+1 edges, boundaries[0] == 0
  std::vector<double> intercepts;  // B
  std::vector<std::vector<double>> coefficients;  // B x m
  int feature_dim = 0;
  bool degenerate = false;  // no censoring observed: G == 1 everywhere

  int n_intervals() const { return static_cast<int>(intercepts.size()); }

  // Hazard of a censoring event within interval j (0-based) given x.
  double hazard(int interval, const std::vector<double>& x) const;

  // G(t,x) = P(C > t | x): product of (1 - hazard) over every interval
  // that has begun by time t; an interval containing t contributes its
  // full factor.
  double survival(double t, const std::vector<double>& x) const;

  std::string serialize() const;
  static CensoringModel deserialize(const std::string& text);
  void save(const std::string& path) const;
  static CensoringModel load(const std::string& path);
};

struct CensoringFitConfig {
  int max_iter = 100;
  double tol = 1e-10;          // stop when the loss decrease falls below tol
  bool intercept_only = false; // freeze feature coefficients at 0
};

// Interval boundaries sit at empirical quantiles (inverse-CDF form) of
// the observed censoring times; hazards maximize the discrete-time
// likelihood in which censoring is the event of interest. Per-interval
// Newton iterations with step halving keep the loss nonincreasing.
CensoringModel fit_censoring_model(const Cohort& train, int n_intervals,
                                   const CensoringFitConfig& config = {},
                                   std::vector<double>* loss_trace = nullptr);

struct WeightVector {
  std::vector<double> weights;  // normalized to sum 1; 0 where censored
  int clip_count = 0;           // samples whose G hit the floor

  static WeightVector uniform(std::size_t n);
};

// Normalized weights delta/G(u_y, x); G floored at `g_floor` before
// inversion, with the number of floored samples reported.
WeightVector ipcw_weights(const CensoringModel& model, const Cohort& cohort,
                          double g_floor = 1e-3);

// Unnormalized delta/G weights, for callers that pool samples weighted by
// different fold models before normalizing.
std::vector<double> ipcw_raw_weights(const CensoringModel& model,
                                     const Cohort& cohort,
                                     double g_floor = 1e-3,
                                     int* clip_count = nullptr);

WeightVector normalize_weights(std::vector<double> raw, int clip_count = 0);

// Weights from the reciprocal of the average survival estimate across
// several fold models (used for validation and test sets).
WeightVector ipcw_weights_averaged(const std::vector<const CensoringModel*>& models,
                                   const Cohort& cohort, double g_floor = 1e-3);

void save_weights(const Cohort& cohort, const WeightVector& weights,
                  const std::string& path);
WeightVector load_weights(const Cohort& cohort, const std::string& path);

}  // namespace riskdca
