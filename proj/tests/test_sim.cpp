#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "riskdca/errors.hpp"
#include "riskdca/rng.hpp"
#include "riskdca/sim.hpp"

using namespace riskdca;

namespace {

double beta_draw(Rng& rng, double alpha, double beta_param) {
  auto gamma_draw = [&](double shape) {
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = rng.normal();
      double v = 1.0 + c * x;
      if (v <= 0) continue;
      v = v * v * v;
      double u = rng.uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  };
  double a = gamma_draw(alpha);
  double b = gamma_draw(beta_param);
  return a / (a + b);
}

double series_value_at(const SimResult& result, const std::string& subgroup,
                       const std::string& series, double s) {
  for (const SimSeries& ser : result.series) {
    if (ser.subgroup != subgroup || ser.series != series) continue;
    for (std::size_t i = 0; i < ser.s.size(); ++i)
      if (std::abs(ser.s[i] - s) < 1e-12) return ser.value[i];
  }
  throw std::runtime_error("series point not found");
}

double argmax_of(const SimResult& result, const std::string& subgroup,
                 const std::string& metric) {
  for (const SimArgmax& am : result.argmax)
    if (am.subgroup == subgroup && am.metric == metric) return am.threshold;
  throw std::runtime_error("argmax entry not found");
}

}  // namespace

TEST_CASE("beta density is normalized on the default grid") {
  ScoreDistribution d = ScoreDistribution::beta(2.5, 7.5, 4001);
  CHECK(std::abs(d.integral() - 1.0) < 1e-6);
  d.validate();
  CHECK_THROWS_AS(ScoreDistribution::beta(0.0, 1.0), DomainError);
}

TEST_CASE("calibration curve shapes and inverses") {
  CalibrationCurve under = CalibrationCurve::under();
  CalibrationCurve over = CalibrationCurve::over();
  for (double s = 0.05; s < 1.0; s += 0.05) {
    CHECK(under(s) == doctest::Approx(-(s - 1) * (s - 1) + 1).epsilon(1e-15));
    CHECK(over(s) == doctest::Approx(2 * s + (s - 1) * (s - 1) - 1).epsilon(1e-15));
    CHECK(over(s) == doctest::Approx(s * s).epsilon(1e-12));  // same polynomial
    CHECK(under(s) > s);  // risk underestimated
    CHECK(over(s) < s);   // risk overestimated
    CHECK(under.inverse(under(s)) == doctest::Approx(s).epsilon(1e-12));
    CHECK(over.inverse(over(s)) == doctest::Approx(s).epsilon(1e-12));
  }
  CHECK(under.strictly_increasing());
  CHECK(over.strictly_increasing());

  CalibrationCurve flat = CalibrationCurve::tabulated({0, 0.5, 1}, {0.3, 0.3, 0.3});
  CHECK_FALSE(flat.strictly_increasing());
  CHECK_THROWS_AS(flat.inverse(0.3), DomainError);
}

TEST_CASE("subgroup incidence by quadrature") {
  ScoreDistribution beta = ScoreDistribution::beta(2.5, 7.5, 4001);
  SubgroupSpec identity{"id", beta, CalibrationCurve::identity()};
  CHECK(subgroup_incidence(identity) == doctest::Approx(0.25).epsilon(1e-6));

  SubgroupSpec constant{
      "const", beta,
      CalibrationCurve::tabulated({0.0, 1.0}, {0.1, 0.1})};
  CHECK(subgroup_incidence(constant) == doctest::Approx(0.1).epsilon(1e-6));

  // closed-form for the under curve: E[2S - S^2] with S ~ Beta(2.5, 7.5)
  SubgroupSpec under{"under", beta, CalibrationCurve::under()};
  double var = 2.5 * 7.5 / (100.0 * 11.0);
  double second_moment = 0.25 * 0.25 + var;
  CHECK(subgroup_incidence(under) ==
        doctest::Approx(0.5 - second_moment).epsilon(1e-6));
}

TEST_CASE("under-curve incidence agrees with Monte Carlo") {
  ScoreDistribution beta = ScoreDistribution::beta(2.5, 7.5, 4001);
  SubgroupSpec under{"under", beta, CalibrationCurve::under()};
  double quad = subgroup_incidence(under);
  Rng rng(41);
  double acc = 0.0;
  const int n = 10000000;
  CalibrationCurve curve = CalibrationCurve::under();
  for (int i = 0; i < n; ++i) acc += curve(beta_draw(rng, 2.5, 7.5));
  CHECK(std::abs(quad - acc / n) < 1e-3);
}

TEST_CASE("recalibration transports the density correctly") {
  ScoreDistribution beta = ScoreDistribution::beta(2.5, 7.5, 4001);

  SubgroupSpec identity{"id", beta, CalibrationCurve::identity()};
  ScoreDistribution same = recalibrate_scores(identity);
  for (std::size_t i = 0; i < beta.grid.size(); i += 400)
    CHECK(same.density[i] == doctest::Approx(beta.density[i]).epsilon(1e-9));

  for (CalibrationCurve curve :
       {CalibrationCurve::under(), CalibrationCurve::over()}) {
    SubgroupSpec spec{"g", beta, curve};
    ScoreDistribution moved = recalibrate_scores(spec);
    CHECK(std::abs(moved.integral() - 1.0) < 1e-6);
    // calibrated by construction: the mean equals the incidence
    double mean = 0.0;
    for (std::size_t i = 1; i < moved.grid.size(); ++i) {
      double h = moved.grid[i] - moved.grid[i - 1];
      mean += 0.5 * h *
              (moved.grid[i] * moved.density[i] +
               moved.grid[i - 1] * moved.density[i - 1]);
    }
    CHECK(mean == doctest::Approx(subgroup_incidence(spec)).epsilon(1e-4));
  }

  SubgroupSpec bad{"flat", beta,
                   CalibrationCurve::tabulated({0, 1}, {0.5, 0.5})};
  CHECK_THROWS_AS(recalibrate_scores(bad), DomainError);
}

TEST_CASE("equalized-odds transplant preserves incidence and the ROC") {
  ScoreDistribution beta = ScoreDistribution::beta(2.5, 7.5, 4001);
  SubgroupSpec reference{"ref", beta, CalibrationCurve::identity()};
  std::vector<SubgroupSpec> specs = {
      reference,
      {"under", beta, CalibrationCurve::under()},
      {"over", beta, CalibrationCurve::over()},
  };
  auto transformed = equalize_odds_transform(specs, reference);
  REQUIRE(transformed.size() == 3);

  // the subgroup matching the reference incidence is unchanged
  for (std::size_t i = 0; i < beta.grid.size(); i += 500) {
    CHECK(transformed[0].dist.density[i] ==
          doctest::Approx(beta.density[i]).epsilon(1e-9));
    double s = beta.grid[i];
    if (s > 0 && s < 1)
      CHECK(transformed[0].curve(s) == doctest::Approx(s).epsilon(1e-9));
  }

  std::vector<double> ref_curve(beta.grid.size());
  for (std::size_t i = 0; i < beta.grid.size(); ++i) ref_curve[i] = beta.grid[i];
  ScorePopulation ref_pop(beta.grid, beta.density, ref_curve);

  for (std::size_t k = 0; k < specs.size(); ++k) {
    double original = subgroup_incidence(specs[k]);
    CHECK(std::abs(transformed[k].dist.integral() - 1.0) < 1e-6);
    std::vector<double> curve_vals(beta.grid.size());
    for (std::size_t i = 0; i < beta.grid.size(); ++i)
      curve_vals[i] = transformed[k].curve(beta.grid[i]);
    ScorePopulation pop(transformed[k].dist.grid, transformed[k].dist.density,
                        curve_vals);
    CHECK(pop.incidence() == doctest::Approx(original).epsilon(1e-9));
    // class conditionals are shared, so the ROC coincides pointwise
    for (double tau = 0.05; tau < 1.0; tau += 0.05) {
      CHECK(pop.true_positive_rate(tau) ==
            doctest::Approx(ref_pop.true_positive_rate(tau)).epsilon(1e-9));
      CHECK(pop.false_positive_rate(tau) ==
            doctest::Approx(ref_pop.false_positive_rate(tau)).epsilon(1e-9));
    }
  }

  SubgroupSpec not_identity{"bad", beta, CalibrationCurve::under()};
  CHECK_THROWS_AS(equalize_odds_transform(specs, not_identity), DomainError);
}

TEST_CASE("the three default settings reproduce the known argmaxes") {
  std::vector<SimScenario> scenarios = default_scenarios();
  REQUIRE(scenarios.size() == 3);

  SimResult parity = run_simulation(scenarios[0]);
  CHECK(std::abs(argmax_of(parity, "calibrated", "utility") - 0.2) <= 1e-9);
  CHECK(std::abs(argmax_of(parity, "calibrated", "nb") - 0.2) <= 1e-9);
  double tau_under = 1.0 - std::sqrt(0.8);
  CHECK(std::abs(argmax_of(parity, "under", "utility") - tau_under) <= 0.001);
  double tau_over = std::sqrt(0.2);
  CHECK(std::abs(argmax_of(parity, "over", "utility") - tau_over) <= 0.001);

  SimResult recal = run_simulation(scenarios[1]);
  for (const std::string sub : {"calibrated", "under", "over"}) {
    CHECK(std::abs(argmax_of(recal, sub, "utility") - 0.2) <= 0.001);
    CHECK(std::abs(argmax_of(recal, sub, "nb") - 0.2) <= 0.001);
  }

  SimResult eo = run_simulation(scenarios[2]);
  CHECK(std::abs(argmax_of(eo, "calibrated", "utility") - 0.2) <= 1e-9);
  CHECK(std::abs(argmax_of(eo, "under", "utility") - 0.2) > 0.001);
  CHECK(std::abs(argmax_of(eo, "over", "utility") - 0.2) > 0.001);

  // per-subgroup utility and net-benefit argmaxes coincide everywhere
  for (const SimResult* r : {&parity, &recal, &eo})
    for (const std::string sub : {"calibrated", "under", "over"})
      CHECK(argmax_of(*r, sub, "utility") ==
            doctest::Approx(argmax_of(*r, sub, "nb")).epsilon(1e-12));
}

TEST_CASE("simulation series carry ROC endpoints and sane values") {
  SimResult result = run_simulation(default_scenarios()[0]);
  for (const std::string sub : {"calibrated", "under", "over"}) {
    CHECK(series_value_at(result, sub, "roc_tpr", 0.0) ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(series_value_at(result, sub, "roc_tpr", 1.0)) < 1e-9);
    CHECK(series_value_at(result, sub, "roc_fpr", 0.0) ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(series_value_at(result, sub, "roc_fpr", 1.0)) < 1e-9);
  }
  CHECK(result.incidence[0] == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("grid refinement changes reported values below 1e-5") {
  std::vector<SimScenario> coarse = default_scenarios(4001, 0.001);
  std::vector<SimScenario> fine = default_scenarios(8001, 0.001);
  for (int setting = 0; setting < 3; ++setting) {
    SimResult a = run_simulation(coarse[static_cast<std::size_t>(setting)]);
    SimResult b = run_simulation(fine[static_cast<std::size_t>(setting)]);
    for (std::size_t k = 0; k < a.incidence.size(); ++k)
      CHECK(std::abs(a.incidence[k] - b.incidence[k]) < 1e-5);
    for (const std::string sub : {"calibrated", "under", "over"}) {
      CHECK(std::abs(series_value_at(a, sub, "nb", 0.2) -
                     series_value_at(b, sub, "nb", 0.2)) < 1e-5);
      CHECK(std::abs(series_value_at(a, sub, "utility", 0.2) -
                     series_value_at(b, sub, "utility", 0.2)) < 1e-5);
    }
  }
}
