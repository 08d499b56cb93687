#include "riskdca/decision.hpp"

#include <algorithm>
#include <cmath>

#include "riskdca/errors.hpp"

namespace riskdca {

void RiskReductionUtility::validate() const {
  if (tau_star <= 0.0 || tau_star >= 1.0)
    throw DomainError("tau_star must lie in (0,1)");
  if (r <= 0.0 || r >= 1.0)
    throw DomainError("relative risk reduction must lie in (0,1)");
}

double conditional_utility_fixed(double c_of_s, const FixedCostUtility& u) {
  if (c_of_s < 0.0 || c_of_s > 1.0)
    throw DomainError("calibrated probability must lie in [0,1]");
  return (u.u_tp - u.u_fn) * c_of_s + (u.u_fp - u.u_tn) * (1.0 - c_of_s);
}

double optimal_threshold_fixed(const FixedCostUtility& u) {
  double denom = u.u_tn - u.u_fp + u.u_tp - u.u_fn;
  if (denom <= 0.0)
    throw DomainError("optimal threshold undefined: nonpositive denominator");
  return (u.u_tn - u.u_fp) / denom;
}

double relative_risk_reduction(double kappa) {
  if (kappa <= 0.0) throw DomainError("LDL-C reduction must be > 0");
  return 1.0 - std::pow(1.0 - 0.22, kappa);
}

namespace {

struct WeightedCounts {
  double w_total = 0.0;
  double w_pos = 0.0;       // sum w over y = 1
  double w_geq = 0.0;       // sum w over s >= tau
  double w_pos_geq = 0.0;   // sum w over y = 1, s >= tau
};

WeightedCounts tally(std::span<const double> scores, std::span<const int> y,
                     std::span<const double> weights, double tau) {
  if (scores.size() != y.size() || scores.size() != weights.size())
    throw DomainError("scores, outcomes, and weights must have equal length");
  WeightedCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    c.w_total += weights[i];
    if (y[i]) c.w_pos += weights[i];
    if (scores[i] >= tau) {
      c.w_geq += weights[i];
      if (y[i]) c.w_pos_geq += weights[i];
    }
  }
  if (c.w_total <= 0.0) throw MetricUndefined("net benefit: zero total weight");
  return c;
}

}  // namespace

double net_benefit_fixed(std::span<const double> scores, std::span<const int> y,
                         std::span<const double> weights, double tau,
                         double tau_star) {
  if (tau_star <= 0.0 || tau_star >= 1.0)
    throw DomainError("tau_star must lie in (0,1)");
  WeightedCounts c = tally(scores, y, weights, tau);
  double tp = c.w_pos_geq / c.w_total;                 // P(S>=tau, Y=1)
  double fp = (c.w_geq - c.w_pos_geq) / c.w_total;     // P(S>=tau, Y=0)
  return tp - fp * tau_star / (1.0 - tau_star);
}

double net_benefit_rr(std::span<const double> scores, std::span<const int> y,
                      std::span<const double> weights, double tau,
                      const RiskReductionUtility& spec) {
  spec.validate();
  WeightedCounts c = tally(scores, y, weights, tau);
  double p_pos = c.w_pos / c.w_total;
  double p_geq = c.w_geq / c.w_total;
  double p_pos_geq = c.w_pos_geq / c.w_total;
  double p_pos_lt = p_pos - p_pos_geq;  // P(Y=1, S<tau) = (1-NPV) P(S<tau)
  return -p_pos_lt - (1.0 - spec.r) * p_pos_geq - spec.r * spec.tau_star * p_geq +
         p_pos;
}

double calibrated_net_benefit_fixed(std::span<const double> scores,
                                    std::span<const int> y,
                                    std::span<const double> weights, double tau,
                                    double tau_star,
                                    const CalibrationModel& calibration) {
  double tau_c = invert_calibration(calibration, tau);
  return net_benefit_fixed(scores, y, weights, tau_c, tau_star);
}

double calibrated_net_benefit_rr(std::span<const double> scores,
                                 std::span<const int> y,
                                 std::span<const double> weights, double tau,
                                 const RiskReductionUtility& spec,
                                 const CalibrationModel& calibration) {
  double tau_c = invert_calibration(calibration, tau);
  return net_benefit_rr(scores, y, weights, tau_c, spec);
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 199; ++i) grid.push_back(i * 0.005);
  return grid;
}

DecisionCurve decision_curve(std::span<const double> scores,
                             std::span<const int> y,
                             std::span<const double> weights,
                             const DecisionCurveSpec& spec,
                             const CalibrationModel& calibration) {
  if (spec.grid.empty()) throw DomainError("decision curve grid is empty");
  for (std::size_t i = 0; i < spec.grid.size(); ++i) {
    if (spec.grid[i] <= 0.0 || spec.grid[i] >= 1.0)
      throw DomainError("decision curve grid must lie in (0,1)");
    if (i && spec.grid[i] <= spec.grid[i - 1])
      throw DomainError("decision curve grid must be strictly increasing");
  }
  DecisionCurve curve;
  curve.mode = spec.mode;
  curve.kind = spec.kind;
  for (double tau : spec.grid) {
    DecisionCurvePoint p;
    p.tau = tau;
    p.tau_star = spec.mode == CurveMode::kStandard ? tau : spec.tau_star;
    WeightedCounts c = tally(scores, y, weights, tau);
    p.p_geq = c.w_geq / c.w_total;
    if (spec.kind == BenefitKind::kFixedCost) {
      p.nb = net_benefit_fixed(scores, y, weights, tau, p.tau_star);
      p.cnb = calibrated_net_benefit_fixed(scores, y, weights, tau, p.tau_star,
                                           calibration);
      p.treat_all_nb = net_benefit_fixed(scores, y, weights, 0.0, p.tau_star);
    } else {
      RiskReductionUtility rr{p.tau_star, spec.r};
      p.nb = net_benefit_rr(scores, y, weights, tau, rr);
      p.cnb = calibrated_net_benefit_rr(scores, y, weights, tau, rr, calibration);
      p.treat_all_nb = net_benefit_rr(scores, y, weights, 0.0, rr);
    }
    curve.points.push_back(p);
  }
  return curve;
}

double aggregate_utility(std::span<const double> scores, std::span<const int> y,
                         std::span<const double> weights,
                         const FixedCostUtility& u, double tau) {
  if (tau < 0.0 || tau > 1.0) throw DomainError("tau must lie in [0,1]");
  if (scores.size() != y.size() || scores.size() != weights.size())
    throw DomainError("scores, outcomes, and weights must have equal length");
  double total = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double util = scores[i] >= tau ? (y[i] ? u.u_tp : u.u_fp)
                                   : (y[i] ? u.u_fn : u.u_tn);
    acc += weights[i] * util;
    total += weights[i];
  }
  if (total <= 0.0) throw MetricUndefined("aggregate utility: zero weight");
  return acc / total;
}

ScorePopulation::ScorePopulation(std::vector<double> grid,
                                 std::vector<double> density,
                                 std::vector<double> curve)
    : grid_(std::move(grid)),
      density_(std::move(density)),
      curve_(std::move(curve)) {
  if (grid_.size() < 2 || grid_.size() != density_.size() ||
      grid_.size() != curve_.size())
    throw DomainError("score population: inconsistent tabulation");
  for (std::size_t i = 1; i < grid_.size(); ++i)
    if (grid_[i] <= grid_[i - 1])
      throw DomainError("score population: grid must be increasing");
  cum_mass_.resize(grid_.size(), 0.0);
  cum_pos_.resize(grid_.size(), 0.0);
  for (std::size_t i = 1; i < grid_.size(); ++i) {
    double h = grid_[i] - grid_[i - 1];
    cum_mass_[i] = cum_mass_[i - 1] +
                   0.5 * h * (density_[i] + density_[i - 1]);
    cum_pos_[i] = cum_pos_[i - 1] +
                  0.5 * h * (curve_[i] * density_[i] +
                             curve_[i - 1] * density_[i - 1]);
  }
  incidence_ = cum_pos_.back();
}

double ScorePopulation::cum_at(const std::vector<double>& cum,
                               const std::vector<double>& vals,
                               double tau) const {
  if (tau <= grid_.front()) return 0.0;
  if (tau >= grid_.back()) return cum.back();
  auto it = std::upper_bound(grid_.begin(), grid_.end(), tau);
  std::size_t hi = static_cast<std::size_t>(it - grid_.begin());
  std::size_t lo = hi - 1;
  double h = grid_[hi] - grid_[lo];
  double frac = (tau - grid_[lo]) / h;
  double v_tau = vals[lo] + frac * (vals[hi] - vals[lo]);
  return cum[lo] + 0.5 * (tau - grid_[lo]) * (vals[lo] + v_tau);
}

double ScorePopulation::prob_geq(double tau) const {
  return cum_mass_.back() - cum_at(cum_mass_, density_, tau);
}

double ScorePopulation::pos_mass_geq(double tau) const {
  if (tau <= grid_.front()) return cum_pos_.back();
  if (tau >= grid_.back()) return 0.0;
  auto it = std::upper_bound(grid_.begin(), grid_.end(), tau);
  std::size_t hi = static_cast<std::size_t>(it - grid_.begin());
  std::size_t lo = hi - 1;
  double h = grid_[hi] - grid_[lo];
  double frac = (tau - grid_[lo]) / h;
  double f_lo = curve_[lo] * density_[lo];
  double f_hi = curve_[hi] * density_[hi];
  double f_tau = f_lo + frac * (f_hi - f_lo);
  double cum_tau = cum_pos_[lo] + 0.5 * (tau - grid_[lo]) * (f_lo + f_tau);
  return cum_pos_.back() - cum_tau;
}

double ScorePopulation::true_positive_rate(double tau) const {
  return incidence_ > 0.0 ? pos_mass_geq(tau) / incidence_ : 0.0;
}

double ScorePopulation::false_positive_rate(double tau) const {
  double neg = cum_mass_.back() - incidence_;
  return neg > 0.0 ? (prob_geq(tau) - pos_mass_geq(tau)) / neg : 0.0;
}

double ScorePopulation::aggregate_utility(const FixedCostUtility& u,
                                          double tau) const {
  double mass_geq = prob_geq(tau);
  double pos_geq = pos_mass_geq(tau);
  double mass_lt = cum_mass_.back() - mass_geq;
  double pos_lt = incidence_ - pos_geq;
  double treated = u.u_tp * pos_geq + u.u_fp * (mass_geq - pos_geq);
  double untreated = u.u_fn * pos_lt + u.u_tn * (mass_lt - pos_lt);
  return treated + untreated;
}

double ScorePopulation::net_benefit(double tau, double tau_star) const {
  if (tau_star <= 0.0 || tau_star >= 1.0)
    throw DomainError("tau_star must lie in (0,1)");
  double pos_geq = pos_mass_geq(tau);               // TPR * P(Y=1)
  double neg_geq = prob_geq(tau) - pos_geq;         // FPR * P(Y=0)
  return pos_geq - neg_geq * tau_star / (1.0 - tau_star);
}

}  // namespace riskdca
