// Assembly of per-group / overall / worst-case metric tables with
// stratified bootstrap intervals, and their CSV serialization.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "riskdca/censoring.hpp"
#include "riskdca/cohort.hpp"
#include "riskdca/decision.hpp"
#include "riskdca/metrics.hpp"

namespace riskdca {

struct MetricRow {
  std::string metric;
  std::string group;             // group label, "overall", or "worst_case"
  std::optional<double> threshold;
  bool defined = true;           // false rows carry the NA marker in CSV
  double estimate = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::optional<double> rel_estimate;  // vs the baseline model, same replicates
  std::optional<double> rel_lower;
  std::optional<double> rel_upper;
};

struct MetricReport {
  std::vector<MetricRow> rows;

  std::string to_csv() const;
  std::string to_text() const;
};

struct EvaluationSpec {
  std::vector<double> thresholds{0.075, 0.20};  // NB / cNB / TPR / FPR points
  BenefitKind nb_kind = BenefitKind::kRiskReduction;
  double r = 0.275;  // risk-reduction parameter when nb_kind is rr
  int n_bootstrap = 1000;
  std::uint64_t seed = 0;
  int threads = 1;  // bootstrap replicates are independent
};

// Scores come per model replicate (outer index); intervals pool over
// models and bootstrap replicates. An optional baseline (same layout)
// adds relative columns computed on shared bootstrap samples. The
// calibration curve for each group is fitted per replicate on the
// evaluated sample.
MetricReport evaluate_models(const Cohort& cohort,
                             const std::vector<std::vector<double>>& scores,
                             const WeightVector& weights,
                             const EvaluationSpec& spec,
                             const std::vector<std::vector<double>>* baseline =
                                 nullptr);

}  // namespace riskdca
