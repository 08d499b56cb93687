#include "riskdca/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include "riskdca/errors.hpp"
#include "riskdca/io.hpp"
#include "riskdca/parallel.hpp"
#include "riskdca/rng.hpp"

namespace riskdca {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct MetricKey {
  std::string metric;
  int group;  // -1 = overall, -2 = worst_case
  std::optional<double> threshold;
};

// Larger values are worse for these metrics; smaller for the rest.
bool worse_is_larger(const std::string& metric) {
  return metric == "log_loss" || metric == "ace" || metric == "fpr";
}

struct Arrays {
  std::vector<int> y;
  std::vector<double> w;
  std::vector<int> group;
};

class Evaluator {
 public:
  Evaluator(const Cohort& cohort, const WeightVector& weights,
            const EvaluationSpec& spec)
      : spec_(spec), n_groups_(cohort.n_groups()) {
    auto comps = composite_outcomes(cohort);
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      base_.y.push_back(comps[i].y);
      base_.w.push_back(weights.weights[i]);
      base_.group.push_back(cohort.samples[i].group);
      strata_.push_back(cohort.samples[i].group * 4 + comps[i].y * 2 +
                        comps[i].delta_y);
    }
    for (const char* metric : {"auc", "log_loss", "ace"})
      push_group_keys(metric, std::nullopt);
    for (double tau : spec.thresholds)
      for (const char* metric : {"tpr", "fpr", "nb", "cnb"})
        push_group_keys(metric, tau);
  }

  const std::vector<MetricKey>& keys() const { return keys_; }
  const std::vector<int>& strata() const { return strata_; }
  int n_groups() const { return n_groups_; }

  // Values for every key on the index multiset; NaN marks undefined.
  std::vector<double> eval(const std::vector<double>& scores,
                           const std::vector<int>& idx) const {
    std::vector<double> flat(keys_.size(), kNaN);
    for (int g = -1; g < n_groups_; ++g) {
      std::vector<double> s, w;
      std::vector<int> y;
      for (int i : idx) {
        if (g >= 0 && base_.group[static_cast<std::size_t>(i)] != g) continue;
        s.push_back(scores[static_cast<std::size_t>(i)]);
        y.push_back(base_.y[static_cast<std::size_t>(i)]);
        w.push_back(base_.w[static_cast<std::size_t>(i)]);
      }
      eval_subset(s, y, w, g, &flat);
    }
    // Worst-case rows: the worst group value within this sample.
    for (std::size_t k = 0; k < keys_.size(); ++k) {
      if (keys_[k].group != -2) continue;
      double worst = kNaN;
      for (std::size_t j = 0; j < keys_.size(); ++j) {
        if (keys_[j].group < 0 || keys_[j].metric != keys_[k].metric) continue;
        if (keys_[j].threshold != keys_[k].threshold) continue;
        double v = flat[j];
        if (std::isnan(v)) continue;
        if (std::isnan(worst))
          worst = v;
        else if (worse_is_larger(keys_[k].metric) ? v > worst : v < worst)
          worst = v;
      }
      flat[k] = worst;
    }
    return flat;
  }

 private:
  void push_group_keys(const std::string& metric, std::optional<double> tau) {
    keys_.push_back({metric, -1, tau});
    for (int g = 0; g < n_groups_; ++g) keys_.push_back({metric, g, tau});
    keys_.push_back({metric, -2, tau});
  }

  int key_index(const std::string& metric, int group,
                std::optional<double> tau) const {
    for (std::size_t k = 0; k < keys_.size(); ++k)
      if (keys_[k].metric == metric && keys_[k].group == group &&
          keys_[k].threshold == tau)
        return static_cast<int>(k);
    throw DomainError("unknown metric key");
  }

  void eval_subset(const std::vector<double>& s, const std::vector<int>& y,
                   const std::vector<double>& w, int group,
                   std::vector<double>* flat) const {
    auto put = [&](const std::string& metric, std::optional<double> tau,
                   double v) {
      (*flat)[static_cast<std::size_t>(key_index(metric, group, tau))] = v;
    };
    if (s.empty()) return;
    try {
      put("auc", std::nullopt, ipcw_auc(s, y, w));
    } catch (const MetricUndefined&) {
    }
    try {
      put("log_loss", std::nullopt, ipcw_log_loss(s, y, w));
    } catch (const MetricUndefined&) {
    }
    // A degenerate subset (single class, quasi-separation) leaves the
    // calibration-dependent metrics undefined for this sample.
    std::optional<CalibrationModel> cal;
    try {
      cal = fit_calibration_curve(s, y, w);
      put("ace", std::nullopt, ace(s, y, w, *cal));
    } catch (const MetricUndefined&) {
    } catch (const ConvergenceError&) {
    }
    for (double tau : spec_.thresholds) {
      try {
        put("tpr", tau, ipcw_rate(s, y, w, tau, RateKind::kTruePositive));
      } catch (const MetricUndefined&) {
      }
      try {
        put("fpr", tau, ipcw_rate(s, y, w, tau, RateKind::kFalsePositive));
      } catch (const MetricUndefined&) {
      }
      try {
        if (spec_.nb_kind == BenefitKind::kFixedCost) {
          put("nb", tau, net_benefit_fixed(s, y, w, tau, tau));
          if (cal)
            put("cnb", tau,
                calibrated_net_benefit_fixed(s, y, w, tau, tau, *cal));
        } else {
          RiskReductionUtility rr{tau, spec_.r};
          put("nb", tau, net_benefit_rr(s, y, w, tau, rr));
          if (cal) put("cnb", tau, calibrated_net_benefit_rr(s, y, w, tau, rr, *cal));
        }
      } catch (const MetricUndefined&) {
      } catch (const NonInvertible&) {
      }
    }
  }

  EvaluationSpec spec_;
  int n_groups_;
  Arrays base_;
  std::vector<int> strata_;
  std::vector<MetricKey> keys_;
};

std::vector<int> resample_strata(const std::vector<int>& strata,
                                 std::uint64_t seed, int replicate) {
  std::map<int, std::vector<int>> members;
  for (std::size_t i = 0; i < strata.size(); ++i)
    members[strata[i]].push_back(static_cast<int>(i));
  Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(replicate));
  std::vector<int> out;
  out.reserve(strata.size());
  for (const auto& [label, idx] : members)
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.push_back(idx[static_cast<std::size_t>(rng.below(idx.size()))]);
  return out;
}

}  // namespace

MetricReport evaluate_models(const Cohort& cohort,
                             const std::vector<std::vector<double>>& scores,
                             const WeightVector& weights,
                             const EvaluationSpec& spec,
                             const std::vector<std::vector<double>>* baseline) {
  if (scores.empty()) throw ConfigError("no model scores supplied");
  for (const auto& s : scores)
    if (s.size() != cohort.size())
      throw DomainError("score vector does not match the cohort");
  if (baseline)
    for (const auto& s : *baseline)
      if (s.size() != cohort.size())
        throw DomainError("baseline score vector does not match the cohort");

  Evaluator ev(cohort, weights, spec);
  const auto& keys = ev.keys();
  const std::size_t n_keys = keys.size();

  std::vector<int> identity(cohort.size());
  std::iota(identity.begin(), identity.end(), 0);

  // Point estimates: mean over models; undefined if any model is undefined.
  auto average_values = [&](const std::vector<std::vector<double>>& model_scores,
                            const std::vector<int>& idx) {
    std::vector<double> acc(n_keys, 0.0);
    for (const auto& ms : model_scores) {
      std::vector<double> v = ev.eval(ms, idx);
      for (std::size_t k = 0; k < n_keys; ++k)
        acc[k] = std::isnan(v[k]) || std::isnan(acc[k]) ? kNaN
                                                        : acc[k] + v[k];
    }
    for (double& a : acc) a /= static_cast<double>(model_scores.size());
    return acc;
  };

  std::vector<double> point = average_values(scores, identity);
  std::vector<double> base_point;
  if (baseline) base_point = average_values(*baseline, identity);

  // Per-replicate values, one slot per replicate so execution may be
  // concurrent; relative differences share the replicate's sample.
  std::vector<std::vector<double>> rep_vals(
      static_cast<std::size_t>(spec.n_bootstrap));
  std::vector<std::vector<double>> rep_rel(
      static_cast<std::size_t>(spec.n_bootstrap));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  parallel_for(spec.n_bootstrap, spec.threads, [&](int r) {
    try {
      std::vector<int> idx = resample_strata(ev.strata(), spec.seed, r);
      std::vector<double> base_mean(n_keys, 0.0);
      if (baseline) {
        for (const auto& ms : *baseline) {
          std::vector<double> v = ev.eval(ms, idx);
          for (std::size_t k = 0; k < n_keys; ++k)
            base_mean[k] = std::isnan(v[k]) || std::isnan(base_mean[k])
                               ? kNaN
                               : base_mean[k] + v[k];
        }
        for (double& b : base_mean) b /= static_cast<double>(baseline->size());
      }
      auto& vals = rep_vals[static_cast<std::size_t>(r)];
      auto& rels = rep_rel[static_cast<std::size_t>(r)];
      for (const auto& ms : scores) {
        std::vector<double> v = ev.eval(ms, idx);
        for (std::size_t k = 0; k < n_keys; ++k) {
          vals.push_back(v[k]);
          rels.push_back(baseline ? v[k] - base_mean[k] : kNaN);
        }
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  });
  if (first_error) std::rethrow_exception(first_error);

  std::vector<std::vector<double>> pooled(n_keys);
  std::vector<std::vector<double>> pooled_rel(n_keys);
  for (int r = 0; r < spec.n_bootstrap; ++r) {
    const auto& vals = rep_vals[static_cast<std::size_t>(r)];
    const auto& rels = rep_rel[static_cast<std::size_t>(r)];
    for (std::size_t m = 0; m < scores.size(); ++m) {
      for (std::size_t k = 0; k < n_keys; ++k) {
        double v = vals[m * n_keys + k];
        if (!std::isnan(v)) pooled[k].push_back(v);
        double rel = rels[m * n_keys + k];
        if (baseline && !std::isnan(rel)) pooled_rel[k].push_back(rel);
      }
    }
  }

  MetricReport report;
  for (std::size_t k = 0; k < n_keys; ++k) {
    MetricRow row;
    row.metric = keys[k].metric;
    row.group = keys[k].group == -1   ? "overall"
                : keys[k].group == -2 ? "worst_case"
                                      : cohort.groups[static_cast<std::size_t>(
                                            keys[k].group)];
    row.threshold = keys[k].threshold;
    row.defined = !std::isnan(point[k]);
    row.estimate = point[k];
    if (row.defined && !pooled[k].empty()) {
      std::sort(pooled[k].begin(), pooled[k].end());
      row.ci_lower = percentile_sorted(pooled[k], 0.025);
      row.ci_upper = percentile_sorted(pooled[k], 0.975);
    } else {
      row.ci_lower = row.ci_upper = kNaN;
    }
    if (baseline) {
      double rel = point[k] - base_point[k];
      row.rel_estimate = rel;
      if (!std::isnan(rel) && !pooled_rel[k].empty()) {
        std::sort(pooled_rel[k].begin(), pooled_rel[k].end());
        row.rel_lower = percentile_sorted(pooled_rel[k], 0.025);
        row.rel_upper = percentile_sorted(pooled_rel[k], 0.975);
      } else {
        row.rel_lower = row.rel_upper = kNaN;
      }
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string cell(double v, bool defined) {
  return defined && !std::isnan(v) ? format_double_short(v) : "NA";
}

}  // namespace

std::string MetricReport::to_csv() const {
  bool has_rel = !rows.empty() && rows.front().rel_estimate.has_value();
  std::ostringstream out;
  out << "metric,group,threshold,estimate,ci_lower,ci_upper";
  if (has_rel) out << ",rel_estimate,rel_ci_lower,rel_ci_upper";
  out << "\n";
  for (const MetricRow& r : rows) {
    out << r.metric << ',' << r.group << ','
        << (r.threshold ? format_double_short(*r.threshold) : std::string())
        << ',' << cell(r.estimate, r.defined) << ','
        << cell(r.ci_lower, r.defined) << ',' << cell(r.ci_upper, r.defined);
    if (has_rel)
      out << ',' << cell(r.rel_estimate.value_or(kNaN), r.defined) << ','
          << cell(r.rel_lower.value_or(kNaN), r.defined) << ','
          << cell(r.rel_upper.value_or(kNaN), r.defined);
    out << "\n";
  }
  return out.str();
}

std::string MetricReport::to_text() const {
  std::ostringstream out;
  for (const MetricRow& r : rows) {
    out << r.metric;
    if (r.threshold) out << "@" << format_double_short(*r.threshold);
    out << " [" << r.group << "] ";
    if (!r.defined) {
      out << "undefined\n";
      continue;
    }
    out << format_double_short(r.estimate) << " (" << format_double_short(r.ci_lower)
        << ", " << format_double_short(r.ci_upper) << ")";
    if (r.rel_estimate)
      out << " rel " << format_double_short(*r.rel_estimate);
    out << "\n";
  }
  return out.str();
}

}  // namespace riskdca
