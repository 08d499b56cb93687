#include "riskdca/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "riskdca/errors.hpp"

namespace riskdca {

namespace {

double interp(const std::vector<double>& grid, const std::vector<double>& vals,
              double x) {
  if (x <= grid.front()) return vals.front();
  if (x >= grid.back()) return vals.back();
  auto it = std::upper_bound(grid.begin(), grid.end(), x);
  std::size_t hi = static_cast<std::size_t>(it - grid.begin());
  std::size_t lo = hi - 1;
  double frac = (x - grid[lo]) / (grid[hi] - grid[lo]);
  return vals[lo] + frac * (vals[hi] - vals[lo]);
}

}  // namespace

double interp_density(const ScoreDistribution& dist, double s) {
  return interp(dist.grid, dist.density, s);
}

ScoreDistribution ScoreDistribution::beta(double alpha, double beta_param,
                                          int n_points) {
  if (alpha <= 0.0 || beta_param <= 0.0)
    throw DomainError("beta parameters must be positive");
  if (n_points < 3) throw DomainError("density grid needs >= 3 points");
  ScoreDistribution out;
  double lbeta = std::lgamma(alpha) + std::lgamma(beta_param) -
                 std::lgamma(alpha + beta_param);
  out.grid.resize(n_points);
  out.density.resize(n_points);
  for (int i = 0; i < n_points; ++i) {
    double x = static_cast<double>(i) / (n_points - 1);
    out.grid[i] = x;
    if (x <= 0.0 || x >= 1.0) {
      // Endpoint density for shape parameters > 1 is 0; diverging shapes
      // are truncated to 0 at the boundary nodes.
      out.density[i] = 0.0;
    } else {
      out.density[i] = std::exp((alpha - 1.0) * std::log(x) +
                                (beta_param - 1.0) * std::log1p(-x) - lbeta);
    }
  }
  return out;
}

double ScoreDistribution::integral() const {
  double acc = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    acc += 0.5 * (grid[i] - grid[i - 1]) * (density[i] + density[i - 1]);
  return acc;
}

void ScoreDistribution::validate() const {
  if (grid.size() < 3 || grid.size() != density.size())
    throw DomainError("score distribution: inconsistent tabulation");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= grid[i - 1])
      throw DomainError("score distribution: grid must be increasing");
  for (double d : density)
    if (d < 0.0 || !std::isfinite(d))
      throw DomainError("score distribution: invalid density value");
  if (std::abs(integral() - 1.0) > 1e-6)
    throw DomainError("score distribution does not integrate to 1");
}

CalibrationCurve CalibrationCurve::identity() {
  return CalibrationCurve(Kind::kIdentity);
}
CalibrationCurve CalibrationCurve::under() {
  return CalibrationCurve(Kind::kUnder);
}
CalibrationCurve CalibrationCurve::over() {
  return CalibrationCurve(Kind::kOver);
}

CalibrationCurve CalibrationCurve::tabulated(std::vector<double> grid,
                                             std::vector<double> values) {
  if (grid.size() < 2 || grid.size() != values.size())
    throw DomainError("tabulated curve: inconsistent tabulation");
  CalibrationCurve c(Kind::kTabulated);
  c.grid_ = std::move(grid);
  c.values_ = std::move(values);
  return c;
}

double CalibrationCurve::operator()(double s) const {
  switch (kind_) {
    case Kind::kIdentity:
      return s;
    case Kind::kUnder:
      return -(s - 1.0) * (s - 1.0) + 1.0;
    case Kind::kOver:
      return 2.0 * s + (s - 1.0) * (s - 1.0) - 1.0;
    case Kind::kTabulated: {
      if (s <= grid_.front()) return values_.front();
      if (s >= grid_.back()) return values_.back();
      auto it = std::upper_bound(grid_.begin(), grid_.end(), s);
      std::size_t hi = static_cast<std::size_t>(it - grid_.begin());
      std::size_t lo = hi - 1;
      double frac = (s - grid_[lo]) / (grid_[hi] - grid_[lo]);
      return values_[lo] + frac * (values_[hi] - values_[lo]);
    }
  }
  throw DomainError("unreachable");
}

double CalibrationCurve::derivative(double s) const {
  switch (kind_) {
    case Kind::kIdentity:
      return 1.0;
    case Kind::kUnder:
      return 2.0 * (1.0 - s);
    case Kind::kOver:
      return 2.0 + 2.0 * (s - 1.0);
    case Kind::kTabulated: {
      // One-sided at the ends, cell slope inside.
      if (grid_.size() < 2) return 0.0;
      std::size_t hi;
      if (s <= grid_.front())
        hi = 1;
      else if (s >= grid_.back())
        hi = grid_.size() - 1;
      else
        hi = static_cast<std::size_t>(
            std::upper_bound(grid_.begin(), grid_.end(), s) - grid_.begin());
      std::size_t lo = hi - 1;
      return (values_[hi] - values_[lo]) / (grid_[hi] - grid_[lo]);
    }
  }
  throw DomainError("unreachable");
}

bool CalibrationCurve::strictly_increasing() const {
  switch (kind_) {
    case Kind::kIdentity:
    case Kind::kUnder:   // derivative 2(1-s) > 0 on (0,1)
    case Kind::kOver:    // derivative 2s > 0 on (0,1)
      return true;
    case Kind::kTabulated:
      for (std::size_t i = 1; i < values_.size(); ++i)
        if (values_[i] <= values_[i - 1]) return false;
      return true;
  }
  return false;
}

bool CalibrationCurve::is_identity(double tol) const {
  if (kind_ == Kind::kIdentity) return true;
  if (kind_ == Kind::kTabulated) {
    for (std::size_t i = 0; i < grid_.size(); ++i)
      if (std::abs(values_[i] - grid_[i]) > tol) return false;
    return true;
  }
  return false;
}

double CalibrationCurve::inverse(double t) const {
  if (!strictly_increasing())
    throw DomainError("calibration curve is not strictly monotone");
  switch (kind_) {
    case Kind::kIdentity:
      return t;
    case Kind::kUnder:
      if (t < 0.0 || t > 1.0) throw DomainError("inverse target out of range");
      return 1.0 - std::sqrt(1.0 - t);
    case Kind::kOver:
      // 2s + (s-1)^2 - 1 = s^2, so the inverse is the square root.
      if (t < 0.0 || t > 1.0) throw DomainError("inverse target out of range");
      return std::sqrt(t);
    case Kind::kTabulated: {
      if (t <= values_.front()) return grid_.front();
      if (t >= values_.back()) return grid_.back();
      auto it = std::upper_bound(values_.begin(), values_.end(), t);
      std::size_t hi = static_cast<std::size_t>(it - values_.begin());
      std::size_t lo = hi - 1;
      double frac = (t - values_[lo]) / (values_[hi] - values_[lo]);
      return grid_[lo] + frac * (grid_[hi] - grid_[lo]);
    }
  }
  throw DomainError("unreachable");
}

double subgroup_incidence(const SubgroupSpec& spec) {
  spec.dist.validate();
  double acc = 0.0;
  const auto& g = spec.dist.grid;
  const auto& p = spec.dist.density;
  for (std::size_t i = 1; i < g.size(); ++i) {
    double f0 = spec.curve(g[i - 1]) * p[i - 1];
    double f1 = spec.curve(g[i]) * p[i];
    acc += 0.5 * (g[i] - g[i - 1]) * (f0 + f1);
  }
  return acc;
}

ScoreDistribution recalibrate_scores(const SubgroupSpec& spec) {
  spec.dist.validate();
  if (!spec.curve.strictly_increasing())
    throw DomainError("recalibration requires a strictly monotone curve");
  // Tabulate on the image grid t_i = c(s_i): the mesh grades itself
  // around any endpoint where c' vanishes, so the trapezoidal mass of
  // p(s)/c'(s) matches the source distribution to source accuracy.
  ScoreDistribution out;
  out.grid.reserve(spec.dist.grid.size());
  out.density.reserve(spec.dist.grid.size());
  for (std::size_t i = 0; i < spec.dist.grid.size(); ++i) {
    double s = spec.dist.grid[i];
    double t = spec.curve(s);
    if (!out.grid.empty() && t <= out.grid.back()) continue;  // fp-collapsed cell
    double p = spec.dist.density[i];
    double d = spec.curve.derivative(s);
    // 0/0 at an endpoint where both the density and the slope vanish.
    out.grid.push_back(t);
    out.density.push_back(p <= 0.0 ? 0.0 : p / d);
  }
  return out;
}

std::vector<TransformedSubgroup> equalize_odds_transform(
    const std::vector<SubgroupSpec>& specs, const SubgroupSpec& reference) {
  if (!reference.curve.is_identity())
    throw DomainError("equalized-odds reference must be identity-calibrated");
  reference.dist.validate();
  double inc_ref = subgroup_incidence(reference);
  if (inc_ref <= 0.0 || inc_ref >= 1.0)
    throw DomainError("reference incidence must lie in (0,1)");

  const auto& grid = reference.dist.grid;
  std::vector<TransformedSubgroup> out;
  for (const SubgroupSpec& spec : specs) {
    double inc = subgroup_incidence(spec);
    std::vector<double> density(grid.size()), curve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double s = grid[i];
      // Class-conditional mixture with the reference conditionals
      // p(s|1) = s p_ref(s)/inc_ref and p(s|0) = (1-s) p_ref(s)/(1-inc_ref).
      double a = s / inc_ref * inc;
      double b = (1.0 - s) / (1.0 - inc_ref) * (1.0 - inc);
      density[i] = reference.dist.density[i] * (a + b);
      curve[i] = a + b > 0.0 ? a / (a + b) : s;
    }
    TransformedSubgroup t;
    t.dist.grid = grid;
    t.dist.density = std::move(density);
    t.curve = CalibrationCurve::tabulated(grid, std::move(curve));
    out.push_back(std::move(t));
  }
  return out;
}

std::string sim_setting_name(SimSetting s) {
  switch (s) {
    case SimSetting::kDemographicParity:
      return "demographic_parity";
    case SimSetting::kRecalibrated:
      return "recalibrated";
    case SimSetting::kEqualizedOdds:
      return "equalized_odds";
  }
  return "unknown";
}

std::vector<double> uniform_eval_grid(double step) {
  if (step <= 0.0 || step >= 0.5) throw DomainError("bad evaluation grid step");
  std::vector<double> grid;
  int n = static_cast<int>(std::llround(1.0 / step)) - 1;
  for (int i = 1; i <= n; ++i) grid.push_back(i * step);
  return grid;
}

SimResult run_simulation(const SimScenario& scenario) {
  if (scenario.subgroups.empty())
    throw DomainError("simulation scenario has no subgroups");
  if (scenario.eval_grid.empty())
    throw DomainError("simulation scenario has an empty evaluation grid");

  // Materialize the per-setting subgroup populations.
  std::vector<std::string> names;
  std::vector<ScoreDistribution> dists;
  std::vector<CalibrationCurve> curves;
  switch (scenario.setting) {
    case SimSetting::kDemographicParity:
      for (const SubgroupSpec& spec : scenario.subgroups) {
        names.push_back(spec.name);
        dists.push_back(spec.dist);
        curves.push_back(spec.curve);
      }
      break;
    case SimSetting::kRecalibrated:
      for (const SubgroupSpec& spec : scenario.subgroups) {
        names.push_back(spec.name);
        dists.push_back(recalibrate_scores(spec));
        curves.push_back(CalibrationCurve::identity());
      }
      break;
    case SimSetting::kEqualizedOdds: {
      if (scenario.reference_index < 0 ||
          scenario.reference_index >= static_cast<int>(scenario.subgroups.size()))
        throw DomainError("equalized-odds reference index out of range");
      auto transformed = equalize_odds_transform(
          scenario.subgroups, scenario.subgroups[scenario.reference_index]);
      for (std::size_t k = 0; k < transformed.size(); ++k) {
        names.push_back(scenario.subgroups[k].name);
        dists.push_back(std::move(transformed[k].dist));
        curves.push_back(std::move(transformed[k].curve));
      }
      break;
    }
  }

  SimResult result;
  result.setting = scenario.setting;
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto& grid = dists[k].grid;
    std::vector<double> curve_vals(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
      curve_vals[i] = curves[k](grid[i]);
    ScorePopulation pop(grid, dists[k].density, curve_vals);
    result.incidence.push_back(pop.incidence());

    SimSeries density{names[k], "density", {}, {}};
    SimSeries calibration{names[k], "calibration", {}, {}};
    SimSeries utility{names[k], "utility", {}, {}};
    SimSeries nb{names[k], "nb", {}, {}};
    SimSeries roc_tpr{names[k], "roc_tpr", {}, {}};
    SimSeries roc_fpr{names[k], "roc_fpr", {}, {}};

    double best_util = -std::numeric_limits<double>::infinity();
    double best_util_tau = scenario.eval_grid.front();
    double best_nb = -std::numeric_limits<double>::infinity();
    double best_nb_tau = scenario.eval_grid.front();

    // ROC endpoints pinned at thresholds 0 and 1.
    roc_tpr.s.push_back(0.0);
    roc_tpr.value.push_back(pop.true_positive_rate(0.0));
    roc_fpr.s.push_back(0.0);
    roc_fpr.value.push_back(pop.false_positive_rate(0.0));

    for (double tau : scenario.eval_grid) {
      density.s.push_back(tau);
      density.value.push_back(interp_density(dists[k], tau));
      calibration.s.push_back(tau);
      calibration.value.push_back(curves[k](tau));
      double u = pop.aggregate_utility(scenario.utility, tau);
      utility.s.push_back(tau);
      utility.value.push_back(u);
      double b = pop.net_benefit(tau, scenario.tau_star);
      nb.s.push_back(tau);
      nb.value.push_back(b);
      roc_tpr.s.push_back(tau);
      roc_tpr.value.push_back(pop.true_positive_rate(tau));
      roc_fpr.s.push_back(tau);
      roc_fpr.value.push_back(pop.false_positive_rate(tau));
      if (u > best_util) {
        best_util = u;
        best_util_tau = tau;
      }
      if (b > best_nb) {
        best_nb = b;
        best_nb_tau = tau;
      }
    }
    roc_tpr.s.push_back(1.0);
    roc_tpr.value.push_back(pop.true_positive_rate(1.0));
    roc_fpr.s.push_back(1.0);
    roc_fpr.value.push_back(pop.false_positive_rate(1.0));

    result.series.push_back(std::move(density));
    result.series.push_back(std::move(calibration));
    result.series.push_back(std::move(roc_tpr));
    result.series.push_back(std::move(roc_fpr));
    result.series.push_back(std::move(utility));
    result.series.push_back(std::move(nb));
    result.argmax.push_back({names[k], "utility", best_util_tau});
    result.argmax.push_back({names[k], "nb", best_nb_tau});
  }
  return result;
}

std::vector<SimScenario> default_scenarios(int grid_points, double eval_step) {
  ScoreDistribution base = ScoreDistribution::beta(2.5, 7.5, grid_points);
  std::vector<SubgroupSpec> subgroups = {
      {"calibrated", base, CalibrationCurve::identity()},
      {"under", base, CalibrationCurve::under()},
      {"over", base, CalibrationCurve::over()},
  };
  std::vector<double> eval_grid = uniform_eval_grid(eval_step);
  std::vector<SimScenario> out;
  for (SimSetting setting :
       {SimSetting::kDemographicParity, SimSetting::kRecalibrated,
        SimSetting::kEqualizedOdds}) {
    SimScenario sc;
    sc.setting = setting;
    sc.subgroups = subgroups;
    sc.reference_index = 0;
    sc.eval_grid = eval_grid;
    out.push_back(std::move(sc));
  }
  return out;
}

}  // namespace riskdca
