// Test-only reference implementations, kept independent of the library's
// computation paths: brute-force pairwise sums, literal formula
// evaluations, product-limit estimators, and finite differences.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Pairwise weighted AUC: double loop over positive-negative pairs with
// the tie value 0.5.
inline double auc_pairwise(const std::vector<double>& s,
                           const std::vector<int>& y,
                           const std::vector<double>& w) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      double pair_w = w[i] * w[j];
      den += pair_w;
      if (s[i] > s[j])
        num += pair_w;
      else if (s[i] == s[j])
        num += 0.5 * pair_w;
    }
  }
  if (den <= 0.0) throw std::runtime_error("oracle AUC undefined");
  return num / den;
}

inline double rate_restricted(const std::vector<double>& s,
                              const std::vector<int>& y,
                              const std::vector<double>& w, double tau,
                              int target) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != target) continue;
    den += w[i];
    if (s[i] >= tau) num += w[i];
  }
  if (den <= 0.0) throw std::runtime_error("oracle rate undefined");
  return num / den;
}

inline double log_loss_direct(const std::vector<double>& s,
                              const std::vector<int>& y,
                              const std::vector<double>& w) {
  double acc = 0.0, total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double p = std::min(1.0 - 1e-15, std::max(1e-15, s[i]));
    acc += w[i] * (y[i] ? -std::log(p) : -std::log(1.0 - p));
    total += w[i];
  }
  return acc / total;
}

// Net benefit via the conditional-probability factorization
// TPR(tau) P(Y=1) - FPR(tau) P(Y=0) tau*/(1-tau*); empty classes
// contribute zero.
inline double net_benefit_eq5(const std::vector<double>& s,
                              const std::vector<int>& y,
                              const std::vector<double>& w, double tau,
                              double tau_star) {
  double w_pos = 0.0, w_neg = 0.0, w_total = 0.0;
  for (double x : w) w_total += x;
  for (std::size_t i = 0; i < s.size(); ++i) (y[i] ? w_pos : w_neg) += w[i];
  double first = 0.0;
  if (w_pos > 0.0)
    first = rate_restricted(s, y, w, tau, 1) * (w_pos / w_total);
  double second = 0.0;
  if (w_neg > 0.0)
    second = rate_restricted(s, y, w, tau, 0) * (w_neg / w_total) * tau_star /
             (1.0 - tau_star);
  return first - second;
}

// Risk-reduction net benefit via literal NPV / PPV terms.
inline double net_benefit_rr_eq13(const std::vector<double>& s,
                                  const std::vector<int>& y,
                                  const std::vector<double>& w, double tau,
                                  double tau_star, double r) {
  double w_total = 0.0, w_pos = 0.0;
  double w_lt = 0.0, w_geq = 0.0, w_pos_lt = 0.0, w_pos_geq = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    w_total += w[i];
    if (y[i]) w_pos += w[i];
    if (s[i] >= tau) {
      w_geq += w[i];
      if (y[i]) w_pos_geq += w[i];
    } else {
      w_lt += w[i];
      if (y[i]) w_pos_lt += w[i];
    }
  }
  double term_lt = 0.0;
  if (w_lt > 0.0) {
    double npv = (w_lt - w_pos_lt) / w_lt;
    term_lt = -(1.0 - npv) * (w_lt / w_total);
  }
  double term_geq = 0.0;
  if (w_geq > 0.0) {
    double ppv = w_pos_geq / w_geq;
    term_geq = -(w_geq / w_total) * ((1.0 - r) * ppv + r * tau_star);
  }
  return term_lt + term_geq + w_pos / w_total;
}

// Product-limit estimate of P(C > t). Censoring events are the events of
// interest; at a tied time, outcome events still count as at risk.
inline double km_censoring_survival(const std::vector<double>& followup,
                                    const std::vector<bool>& outcome_event,
                                    double t) {
  std::map<double, int> censor_counts;
  for (std::size_t i = 0; i < followup.size(); ++i)
    if (!outcome_event[i]) ++censor_counts[followup[i]];
  double surv = 1.0;
  for (const auto& [tc, d] : censor_counts) {
    if (tc > t) break;
    int at_risk = 0;
    for (double u : followup)
      if (u >= tc) ++at_risk;
    surv *= 1.0 - static_cast<double>(d) / at_risk;
  }
  return surv;
}

// Central finite differences of a scalar function of a parameter vector.
inline Eigen::VectorXd finite_difference_grad(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& theta, double h = 1e-5) {
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd hi = theta, lo = theta;
    double step = h * std::max(1.0, std::abs(theta[i]));
    hi[i] += step;
    lo[i] -= step;
    g[i] = (f(hi) - f(lo)) / (2.0 * step);
  }
  return g;
}

inline double relative_gradient_error(const Eigen::VectorXd& analytic,
                                      const Eigen::VectorXd& numeric) {
  double denom = std::max(1e-8, std::max(analytic.norm(), numeric.norm()));
  return (analytic - numeric).norm() / denom;
}

}  // namespace oracle
