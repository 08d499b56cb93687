// Utility-theoretic decision analysis: conditional and aggregate utility,
// optimal thresholds, fixed-cost and risk-reduction net benefit, their
// calibrated variants, and decision curves.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "riskdca/metrics.hpp"

namespace riskdca {

struct FixedCostUtility {
  double u_tp = 0.0;
  double u_fp = 0.0;
  double u_tn = 0.0;
  double u_fn = 0.0;
};

struct RiskReductionUtility {
  double tau_star = 0.0;  // threshold encoding the benefit-harm trade-off
  double r = 0.0;         // constant relative risk reduction in (0,1)

  void validate() const;
};

// (u_tp - u_fn) * c + (u_fp - u_tn) * (1 - c)
double conditional_utility_fixed(double c_of_s, const FixedCostUtility& u);

// (u_tn - u_fp) / (u_tn - u_fp + u_tp - u_fn); denominator must be > 0.
double optimal_threshold_fixed(const FixedCostUtility& u);

// r = 1 - (1 - 0.22)^kappa for an LDL-C reduction of kappa mmol/L.
double relative_risk_reduction(double kappa);

// TPR(tau) P(Y=1) - FPR(tau) P(Y=0) tau*/(1-tau*); all terms weighted.
// Empty conditioning classes contribute 0.
double net_benefit_fixed(std::span<const double> scores, std::span<const int> y,
                         std::span<const double> weights, double tau,
                         double tau_star);

// -(1-NPV)P(S<tau) - P(S>=tau)[(1-r)PPV + r tau*] + P(Y=1).
double net_benefit_rr(std::span<const double> scores, std::span<const int> y,
                      std::span<const double> weights, double tau,
                      const RiskReductionUtility& spec);

// Net benefit evaluated at the score threshold c^{-1}(tau).
double calibrated_net_benefit_fixed(std::span<const double> scores,
                                    std::span<const int> y,
                                    std::span<const double> weights, double tau,
                                    double tau_star,
                                    const CalibrationModel& calibration);
double calibrated_net_benefit_rr(std::span<const double> scores,
                                 std::span<const int> y,
                                 std::span<const double> weights, double tau,
                                 const RiskReductionUtility& spec,
                                 const CalibrationModel& calibration);

enum class BenefitKind { kFixedCost, kRiskReduction };
enum class CurveMode { kStandard, kParameterized };

struct DecisionCurvePoint {
  double tau = 0.0;
  double tau_star = 0.0;
  double nb = 0.0;
  double cnb = 0.0;
  double treat_all_nb = 0.0;
  double p_geq = 0.0;  // weighted P(S >= tau)
};

struct DecisionCurve {
  std::string group = "overall";
  CurveMode mode = CurveMode::kStandard;
  BenefitKind kind = BenefitKind::kFixedCost;
  std::vector<DecisionCurvePoint> points;
};

struct DecisionCurveSpec {
  std::vector<double> grid;  // strictly increasing thresholds in (0,1)
  CurveMode mode = CurveMode::kStandard;
  BenefitKind kind = BenefitKind::kFixedCost;
  double tau_star = 0.2;  // used by parameterized mode
  double r = 0.0;         // used by the risk-reduction formulation
};

// 199 points covering 0.005..0.995 in steps of 0.005 (includes the
// guideline thresholds 0.075 and 0.20 exactly).
std::vector<double> default_threshold_grid();

DecisionCurve decision_curve(std::span<const double> scores,
                             std::span<const int> y,
                             std::span<const double> weights,
                             const DecisionCurveSpec& spec,
                             const CalibrationModel& calibration);

// Empirical aggregate utility of treating at s >= tau.
double aggregate_utility(std::span<const double> scores, std::span<const int> y,
                         std::span<const double> weights,
                         const FixedCostUtility& u, double tau);

// Analytic population over the unit score interval: a tabulated density
// together with a tabulated calibration curve, integrated by the
// trapezoidal rule. Cumulative integrals are precomputed so per-threshold
// queries interpolate exactly at grid nodes.
class ScorePopulation {
 public:
  ScorePopulation(std::vector<double> grid, std::vector<double> density,
                  std::vector<double> curve);

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& density() const { return density_; }
  const std::vector<double>& curve() const { return curve_; }

  double incidence() const { return incidence_; }
  double prob_geq(double tau) const;      // P(S >= tau)
  double pos_mass_geq(double tau) const;  // P(Y = 1, S >= tau)

  double true_positive_rate(double tau) const;
  double false_positive_rate(double tau) const;
  double aggregate_utility(const FixedCostUtility& u, double tau) const;
  double net_benefit(double tau, double tau_star) const;

 private:
  std::vector<double> grid_, density_, curve_;
  std::vector<double> cum_mass_, cum_pos_;  // trapezoidal integrals from 0
  double incidence_ = 0.0;

  // Integral of the tabulated integrand from 0 to tau; exact at nodes,
  // partial cells integrate the linear interpolant.
  double cum_at(const std::vector<double>& cum, const std::vector<double>& vals,
                double tau) const;
};

}  // namespace riskdca
