#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "riskdca/censoring.hpp"
#include "riskdca/cohort.hpp"
#include "riskdca/errors.hpp"
#include "riskdca/rng.hpp"

using namespace riskdca;

namespace {

Cohort make_cohort(const std::vector<double>& times,
                   const std::vector<bool>& events, double horizon,
                   int feature_dim = 0) {
  Cohort c;
  c.groups = {"g"};
  c.horizon = horizon;
  c.feature_dim = feature_dim;
  for (std::size_t i = 0; i < times.size(); ++i) {
    Sample s;
    s.id = "s" + std::to_string(i);
    s.followup_time = times[i];
    s.event_indicator = events[i];
    s.features.assign(feature_dim, 0.0);
    c.samples.push_back(std::move(s));
  }
  return c;
}

double logit_of(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TEST_CASE("composite outcome definitions") {
  CompositeOutcome a = derive_composite_outcome(5.0, true, 10.0);
  CHECK(a.y == 1);
  CHECK(a.u_y == 5.0);
  CHECK(a.delta_y == 1);

  CompositeOutcome b = derive_composite_outcome(8.0, false, 10.0);
  CHECK(b.delta_y == 0);
  CHECK(b.u_y == 8.0);

  CompositeOutcome c = derive_composite_outcome(12.0, false, 10.0);
  CHECK(c.y == 0);
  CHECK(c.u_y == 10.0);
  CHECK(c.delta_y == 1);

  // event observed past the horizon: binary outcome negative, uncensored
  CompositeOutcome d = derive_composite_outcome(12.0, true, 10.0);
  CHECK(d.y == 0);
  CHECK(d.u_y == 10.0);
  CHECK(d.delta_y == 1);

  CHECK_THROWS_AS(derive_composite_outcome(-1.0, true, 10.0), DomainError);
  CHECK_THROWS_AS(derive_composite_outcome(1.0, true, 0.0), DomainError);
}

TEST_CASE("no censoring events gives the degenerate all-ones survival") {
  Cohort c = make_cohort({1, 2, 3}, {true, true, true}, 10.0);
  CensoringModel m = fit_censoring_model(c, 4);
  CHECK(m.degenerate);
  CHECK(m.survival(0.0, {}) == 1.0);
  CHECK(m.survival(7.3, {}) == 1.0);
}

TEST_CASE("single interval with hazard 0.3 survives at 0.7 past its end") {
  CensoringModel m;
  m.feature_dim = 0;
  m.boundaries = {0.0, 1.0};
  m.intercepts = {logit_of(0.3)};
  m.coefficients = {{}};
  CHECK(m.survival(0.0, {}) == 1.0);
  CHECK(m.survival(0.5, {}) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(m.survival(2.0, {}) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK_THROWS_AS(m.survival(-0.1, {}), DomainError);
}

TEST_CASE("intercept-only fit reproduces the Kaplan-Meier censoring curve") {
  // 14 samples, ties between outcome and censoring times included
  std::vector<double> times{1, 1, 2, 2, 3, 3, 3, 4, 5, 5, 6, 7, 8, 9};
  std::vector<bool> events{true, false, false, true, false, false, true,
                           true, false, true, false, true, false, true};
  Cohort cohort = make_cohort(times, events, 100.0);
  int n_censor = 0;
  for (bool e : events)
    if (!e) ++n_censor;

  CensoringFitConfig cfg;
  cfg.intercept_only = true;
  cfg.max_iter = 200;
  std::vector<double> trace;
  CensoringModel m = fit_censoring_model(cohort, n_censor, cfg, &trace);

  std::vector<bool> outcome(events.begin(), events.end());
  for (std::size_t b = 1; b < m.boundaries.size(); ++b) {
    double t = m.boundaries[b];
    double km = oracle::km_censoring_survival(times, outcome, t);
    CHECK(m.survival(t, {}) == doctest::Approx(km).epsilon(1e-6));
  }

  for (std::size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] <= trace[i - 1] + 1e-9);
}

TEST_CASE("fitted survival is nonincreasing in time for random probes") {
  SynthConfig cfg;
  cfg.groups = {{"a", 400, 0.05, 0.05}};
  cfg.feature_dim = 3;
  cfg.horizon = 10.0;
  cfg.feature_coef = 0.3;
  cfg.censor_feature_coef = 0.5;
  cfg.seed = 3;
  Cohort cohort = generate_synthetic_cohort(cfg);
  CensoringModel m = fit_censoring_model(cohort, 8);
  Rng rng(99);
  for (int probe = 0; probe < 20; ++probe) {
    std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
    double prev = 1.0;
    for (double t = 0.0; t <= 12.0; t += 0.25) {
      double g = m.survival(t, x);
      CHECK(g <= prev + 1e-12);
      CHECK(g > 0.0);
      CHECK(g <= 1.0);
      prev = g;
    }
  }
}

TEST_CASE("censoring model text format round trips") {
  SynthConfig cfg;
  cfg.groups = {{"a", 150, 0.05, 0.08}};
  cfg.feature_dim = 2;
  cfg.horizon = 10.0;
  cfg.censor_feature_coef = 0.4;
  cfg.seed = 5;
  Cohort cohort = generate_synthetic_cohort(cfg);
  CensoringModel m = fit_censoring_model(cohort, 5);
  CensoringModel back = CensoringModel::deserialize(m.serialize());
  CHECK(back.boundaries == m.boundaries);
  CHECK(back.intercepts == m.intercepts);
  CHECK(back.coefficients == m.coefficients);
  CHECK(back.degenerate == m.degenerate);
}

TEST_CASE("ipcw weights: uniform without censoring, zero where censored") {
  Cohort c = make_cohort({1, 2, 12}, {true, true, false}, 10.0);
  CensoringModel m = fit_censoring_model(c, 4);  // one censor at 12 > horizon?
  // time 12 with event=false is censored after the horizon: delta_y = 1
  WeightVector w = ipcw_weights(m, c);
  double total = 0.0;
  for (double x : w.weights) total += x;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  Cohort pure = make_cohort({1, 2, 3, 4}, {true, true, true, true}, 10.0);
  CensoringModel deg = fit_censoring_model(pure, 4);
  WeightVector wp = ipcw_weights(deg, pure);
  for (double x : wp.weights) CHECK(x == 0.25);

  Cohort cens = make_cohort({1, 5, 3}, {true, false, true}, 10.0);
  CensoringModel mc = fit_censoring_model(cens, 2);
  WeightVector wc = ipcw_weights(mc, cens);
  CHECK(wc.weights[1] == 0.0);  // censored before the horizon
}

TEST_CASE("hand-evaluated weight normalization") {
  WeightVector w = normalize_weights({1.0, 2.0, 1.0, 0.0});
  CHECK(w.weights == std::vector<double>{0.25, 0.5, 0.25, 0.0});
}

TEST_CASE("weights from a hand-built hazard model") {
  // One interval (0,2] with hazard 1/2: G(t) = 1 at t = 0 and 1/2 after.
  CensoringModel m;
  m.feature_dim = 0;
  m.boundaries = {0.0, 2.0};
  m.intercepts = {0.0};
  m.coefficients = {{}};
  Cohort c = make_cohort({0.0, 1.0, 2.5, 1.5}, {true, true, true, false}, 10.0);
  WeightVector w = ipcw_weights(m, c);
  // raw weights (1, 2, 2, 0) -> normalized (0.2, 0.4, 0.4, 0)
  CHECK(w.weights[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(w.weights[1] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(w.weights[2] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(w.weights[3] == 0.0);
}

TEST_CASE("survival floor clipping is applied and counted") {
  CensoringModel m;
  m.feature_dim = 0;
  m.boundaries = {0.0, 1.0};
  m.intercepts = {logit_of(0.9999)};
  m.coefficients = {{}};
  Cohort c = make_cohort({2.0, 3.0}, {true, true}, 10.0);
  WeightVector w = ipcw_weights(m, c, 1e-3);
  CHECK(w.clip_count == 2);
  CHECK(w.weights[0] == doctest::Approx(0.5));
}

TEST_CASE("weight sum is 1 whenever any outcome is uncensored") {
  Rng rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    SynthConfig cfg;
    cfg.groups = {{"a", 50, 0.04, 0.05}};
    cfg.feature_dim = 2;
    cfg.horizon = 8.0;
    cfg.censor_feature_coef = 0.3;
    cfg.seed = rng.next();
    Cohort cohort = generate_synthetic_cohort(cfg);
    CensoringModel m = fit_censoring_model(cohort, 4);
    WeightVector w = ipcw_weights(m, cohort);
    auto comps = composite_outcomes(cohort);
    double total = 0.0;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      total += w.weights[i];
      CHECK((w.weights[i] == 0.0) == (comps[i].delta_y == 0));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("validation weights average survival across fold models") {
  Cohort c = make_cohort({1.0, 1.0}, {true, true}, 10.0);
  CensoringModel m1;  // G = 0.5 beyond 0
  m1.feature_dim = 0;
  m1.boundaries = {0.0, 0.5};
  m1.intercepts = {0.0};
  m1.coefficients = {{}};
  CensoringModel m2;  // degenerate: G = 1
  m2.feature_dim = 0;
  m2.degenerate = true;
  m2.boundaries = {0.0};
  WeightVector w = ipcw_weights_averaged({&m1, &m2}, c);
  // average G = 0.75 for both samples -> equal normalized weights
  CHECK(w.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w.weights[1] == doctest::Approx(0.5).epsilon(1e-12));
}
