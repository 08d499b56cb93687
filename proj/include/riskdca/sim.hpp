// Analytic simulation of score distributions, miscalibration transforms,
// recalibration by change of variables, equalized-odds distribution
// transplant, and utility / net-benefit threshold sweeps.
#pragma once

#include <string>
#include <vector>

#include "riskdca/decision.hpp"

namespace riskdca {

// Density tabulated on an increasing grid over [0,1]; integrals use the
// trapezoidal rule.
struct ScoreDistribution {
  std::vector<double> grid;
  std::vector<double> density;

  static ScoreDistribution beta(double alpha, double beta_param,
                                int n_points = 4001);
  double integral() const;  // total mass, should be 1 within 1e-6
  void validate() const;
};

class CalibrationCurve {
 public:
  enum class Kind { kIdentity, kUnder, kOver, kTabulated };

  static CalibrationCurve identity();
  // c(s) = -(s-1)^2 + 1: observed risk above the score.
  static CalibrationCurve under();
  // c(s) = 2s + (s-1)^2 - 1: observed risk below the score.
  static CalibrationCurve over();
  static CalibrationCurve tabulated(std::vector<double> grid,
                                    std::vector<double> values);

  Kind kind() const { return kind_; }
  double operator()(double s) const;
  double derivative(double s) const;
  double inverse(double t) const;
  bool strictly_increasing() const;
  bool is_identity(double tol = 1e-9) const;

 private:
  CalibrationCurve(Kind kind) : kind_(kind) {}
  Kind kind_;
  std::vector<double> grid_, values_;
};

struct SubgroupSpec {
  std::string name;
  ScoreDistribution dist;
  CalibrationCurve curve = CalibrationCurve::identity();
};

double subgroup_incidence(const SubgroupSpec& spec);

// Linear interpolation of the tabulated density.
double interp_density(const ScoreDistribution& dist, double s);

// New scores s' = c(s); density transported by change of variables. The
// result is identity-calibrated by construction.
ScoreDistribution recalibrate_scores(const SubgroupSpec& spec);

struct TransformedSubgroup {
  ScoreDistribution dist;
  CalibrationCurve curve = CalibrationCurve::identity();
};

// Transplants the reference class-conditional score distributions onto
// each subgroup while preserving its incidence; the reference must be
// identity-calibrated. Resulting calibration curves follow from Bayes'
// rule.
std::vector<TransformedSubgroup> equalize_odds_transform(
    const std::vector<SubgroupSpec>& specs, const SubgroupSpec& reference);

enum class SimSetting { kDemographicParity, kRecalibrated, kEqualizedOdds };

std::string sim_setting_name(SimSetting s);

struct SimScenario {
  SimSetting setting = SimSetting::kDemographicParity;
  std::vector<SubgroupSpec> subgroups;  // base specs; transforms applied per setting
  int reference_index = 0;              // equalized-odds reference subgroup
  FixedCostUtility utility{0.8, 0.0, 0.2, 0.0};
  double tau_star = 0.2;
  std::vector<double> eval_grid;  // thresholds in (0,1)
};

struct SimSeries {
  std::string subgroup;
  std::string series;  // density | calibration | roc_tpr | roc_fpr | utility | nb
  std::vector<double> s;
  std::vector<double> value;
};

struct SimArgmax {
  std::string subgroup;
  std::string metric;  // utility | nb
  double threshold;
};

struct SimResult {
  SimSetting setting;
  std::vector<SimSeries> series;
  std::vector<SimArgmax> argmax;
  std::vector<double> incidence;  // per subgroup
};

SimResult run_simulation(const SimScenario& scenario);

// The three default settings: Beta(2.5, 7.5) scores with an identity, an
// under-, and an over-estimating subgroup.
std::vector<SimScenario> default_scenarios(int grid_points = 4001,
                                           double eval_step = 0.001);

std::vector<double> uniform_eval_grid(double step);

}  // namespace riskdca
