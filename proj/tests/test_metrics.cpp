#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "riskdca/errors.hpp"
#include "riskdca/metrics.hpp"
#include "riskdca/rng.hpp"

using namespace riskdca;

namespace {

struct Instance {
  std::vector<double> s;
  std::vector<int> y;
  std::vector<double> w;
};

// Random weighted instance; a slice of the weights is zeroed to mimic
// censored samples.
Instance random_instance(Rng& rng, int n, bool allow_ties = true) {
  Instance inst;
  for (int i = 0; i < n; ++i) {
    double s = rng.uniform01() * 0.98 + 0.01;
    if (allow_ties && rng.bernoulli(0.2) && !inst.s.empty())
      s = inst.s[static_cast<std::size_t>(rng.below(inst.s.size()))];
    inst.s.push_back(s);
    inst.y.push_back(rng.bernoulli(0.4) ? 1 : 0);
    inst.w.push_back(rng.bernoulli(0.15) ? 0.0 : 0.2 + rng.uniform01());
  }
  // make sure both classes carry weight
  inst.y[0] = 1;
  inst.w[0] = 1.0;
  inst.y[1] = 0;
  inst.w[1] = 1.0;
  return inst;
}

}  // namespace

TEST_CASE("auc on separated and tied scores") {
  std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  std::vector<int> y{1, 1, 0, 0};
  std::vector<double> w{1, 1, 1, 1};
  CHECK(ipcw_auc(s, y, w) == 1.0);

  std::vector<double> tied{0.5, 0.5, 0.5, 0.5};
  CHECK(ipcw_auc(tied, y, w) == 0.5);

  std::vector<int> one_class{1, 1, 1, 1};
  CHECK_THROWS_AS(ipcw_auc(s, one_class, w), MetricUndefined);
}

TEST_CASE("auc equals the pairwise oracle on random instances") {
  Rng rng(2024);
  for (int rep = 0; rep < 300; ++rep) {
    Instance inst = random_instance(rng, 2 + static_cast<int>(rng.below(199)));
    double fast = ipcw_auc(inst.s, inst.y, inst.w);
    double slow = oracle::auc_pairwise(inst.s, inst.y, inst.w);
    CHECK(std::abs(fast - slow) < 1e-12);
  }
}

TEST_CASE("log loss matches direct evaluation and handles clipping") {
  std::vector<double> s{0.2, 0.9, 0.5, 0.35, 0.01};
  std::vector<int> y{0, 1, 1, 0, 0};
  std::vector<double> w{1.0, 0.5, 2.0, 0.25, 1.25};
  CHECK(ipcw_log_loss(s, y, w) ==
        doctest::Approx(oracle::log_loss_direct(s, y, w)).epsilon(1e-15));

  // exact score on the true label contributes ~0 after clipping
  std::vector<double> s2{1.0};
  std::vector<int> y2{1};
  std::vector<double> w2{1.0};
  CHECK(ipcw_log_loss(s2, y2, w2) < 1e-14);

  // intercept-only optimum: constant score at the weighted base rate
  double base = 0.3;
  std::vector<double> s3(10, base);
  std::vector<int> y3(10, 0);
  std::vector<double> w3(10, 1.0);
  for (int i = 0; i < 3; ++i) y3[i] = 1;
  double entropy = -base * std::log(base) - (1 - base) * std::log(1 - base);
  CHECK(ipcw_log_loss(s3, y3, w3) == doctest::Approx(entropy).epsilon(1e-12));
}

TEST_CASE("rates at extreme thresholds and against the oracle") {
  Rng rng(5);
  Instance inst = random_instance(rng, 6);
  CHECK(ipcw_rate(inst.s, inst.y, inst.w, 0.0, RateKind::kTruePositive) == 1.0);
  CHECK(ipcw_rate(inst.s, inst.y, inst.w, 0.0, RateKind::kFalsePositive) == 1.0);
  CHECK(ipcw_rate(inst.s, inst.y, inst.w, 1.0, RateKind::kTruePositive) == 0.0);
  CHECK(ipcw_rate(inst.s, inst.y, inst.w, 1.0, RateKind::kFalsePositive) == 0.0);

  for (int rep = 0; rep < 200; ++rep) {
    Instance r = random_instance(rng, 2 + static_cast<int>(rng.below(40)));
    double tau = rng.uniform01();
    CHECK(ipcw_rate(r.s, r.y, r.w, tau, RateKind::kTruePositive) ==
          oracle::rate_restricted(r.s, r.y, r.w, tau, 1));
    CHECK(ipcw_rate(r.s, r.y, r.w, tau, RateKind::kFalsePositive) ==
          oracle::rate_restricted(r.s, r.y, r.w, tau, 0));
  }
}

TEST_CASE("rates are nonincreasing in the threshold") {
  Rng rng(6);
  Instance inst = random_instance(rng, 80);
  double prev_tpr = 1.0, prev_fpr = 1.0;
  for (double tau = 0.0; tau <= 1.0; tau += 0.01) {
    double tpr = ipcw_rate(inst.s, inst.y, inst.w, tau, RateKind::kTruePositive);
    double fpr = ipcw_rate(inst.s, inst.y, inst.w, tau, RateKind::kFalsePositive);
    CHECK(tpr <= prev_tpr);
    CHECK(fpr <= prev_fpr);
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
}

TEST_CASE("metrics are exactly invariant to power-of-two weight rescaling") {
  Rng rng(7);
  Instance inst = random_instance(rng, 60);
  std::vector<double> w4 = inst.w;
  for (double& x : w4) x *= 4.0;
  CHECK(ipcw_auc(inst.s, inst.y, inst.w) == ipcw_auc(inst.s, inst.y, w4));
  CHECK(ipcw_log_loss(inst.s, inst.y, inst.w) ==
        ipcw_log_loss(inst.s, inst.y, w4));
  CHECK(ipcw_rate(inst.s, inst.y, inst.w, 0.3, RateKind::kTruePositive) ==
        ipcw_rate(inst.s, inst.y, w4, 0.3, RateKind::kTruePositive));
}

TEST_CASE("calibration recovers the identity on calibrated data") {
  Rng rng(8);
  std::vector<double> s;
  std::vector<int> y;
  std::vector<double> w;
  for (int i = 0; i < 50000; ++i) {
    double score = 0.02 + 0.96 * rng.uniform01();
    s.push_back(score);
    y.push_back(rng.bernoulli(score) ? 1 : 0);
    w.push_back(1.0);
  }
  CalibrationModel cal = fit_calibration_curve(s, y, w);
  CHECK(std::abs(cal.intercept) < 0.05);
  CHECK(std::abs(cal.slope - 1.0) < 0.05);
}

TEST_CASE("calibration recovers a known logit-linear transform") {
  Rng rng(9);
  std::vector<double> s;
  std::vector<int> y;
  std::vector<double> w;
  for (int i = 0; i < 50000; ++i) {
    double score = 0.02 + 0.96 * rng.uniform01();
    double z = 0.5 + 2.0 * std::log(score / (1 - score));
    double p = 1.0 / (1.0 + std::exp(-z));
    s.push_back(score);
    y.push_back(rng.bernoulli(p) ? 1 : 0);
    w.push_back(0.5 + rng.uniform01());
  }
  CalibrationModel cal = fit_calibration_curve(s, y, w);
  CHECK(cal.intercept == doctest::Approx(0.5).epsilon(0.1));
  CHECK(cal.slope == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("constant outcomes cannot be calibrated") {
  std::vector<double> s{0.2, 0.4, 0.6};
  std::vector<int> y{1, 1, 1};
  std::vector<double> w{1, 1, 1};
  CHECK_THROWS_AS(fit_calibration_curve(s, y, w), MetricUndefined);
}

TEST_CASE("calibration inversion") {
  CalibrationModel identity;
  CHECK(invert_calibration(identity, 0.075) == 0.075);

  CalibrationModel steep{0.0, 2.0};
  double inv = invert_calibration(steep, 0.2);
  double expected = 1.0 / (1.0 + std::exp(-std::log(0.2 / 0.8) / 2.0));
  CHECK(inv == doctest::Approx(expected).epsilon(1e-15));
  CHECK(steep(inv) == doctest::Approx(0.2).epsilon(1e-12));

  CalibrationModel bad{0.0, -1.0};
  CHECK_THROWS_AS(invert_calibration(bad, 0.2), NonInvertible);
  CHECK_THROWS_AS(invert_calibration(identity, 1.5), DomainError);

  // inverse composed with evaluation is the identity on (0,1)
  CalibrationModel skew{-0.4, 1.7};
  for (double t = 0.05; t < 1.0; t += 0.05)
    CHECK(skew(invert_calibration(skew, t)) ==
          doctest::Approx(t).epsilon(1e-10));
}

TEST_CASE("ace is zero under the identity and bounded by one") {
  Rng rng(10);
  Instance inst = random_instance(rng, 50);
  CalibrationModel identity;
  CHECK(ace(inst.s, inst.y, inst.w, identity) == 0.0);

  CalibrationModel shifted{0.7, 1.0};
  double direct_num = 0.0, direct_den = 0.0;
  for (std::size_t i = 0; i < inst.s.size(); ++i) {
    direct_num += inst.w[i] * std::abs(inst.s[i] - shifted(inst.s[i]));
    direct_den += inst.w[i];
  }
  double value = ace(inst.s, inst.y, inst.w, shifted);
  CHECK(value == doctest::Approx(direct_num / direct_den).epsilon(1e-15));
  CHECK(value <= 1.0);
}

TEST_CASE("intergroup variance") {
  CHECK(intergroup_variance(std::vector<double>{0.3, 0.3, 0.3}) == 0.0);
  CHECK(intergroup_variance(std::vector<double>{0.2, 0.4}) ==
        doctest::Approx(0.01).epsilon(1e-15));
  CHECK(intergroup_variance(std::vector<double>{0.7}) == 0.0);
}

TEST_CASE("bootstrap basics: constant statistic, single replicate, seeds") {
  std::vector<int> strata{0, 0, 0, 1, 1, 1};
  BootstrapStatistic constant = [](const std::vector<int>&) { return 3.5; };
  BootstrapCI ci = stratified_bootstrap({constant}, strata, 100, 1);
  CHECK(ci.lower == 3.5);
  CHECK(ci.upper == 3.5);
  CHECK(ci.point == 3.5);

  BootstrapStatistic mean_idx = [&](const std::vector<int>& idx) {
    double acc = 0;
    for (int i : idx) acc += i;
    return acc / static_cast<double>(idx.size());
  };
  BootstrapCI one = stratified_bootstrap({mean_idx}, strata, 1, 9);
  CHECK(one.lower == one.upper);

  Rng rng(123);
  std::vector<double> x;
  std::vector<int> big_strata;
  for (int i = 0; i < 40; ++i) {
    x.push_back(rng.uniform01());
    big_strata.push_back(i % 2);
  }
  BootstrapStatistic mean_x = [&](const std::vector<int>& idx) {
    double acc = 0;
    for (int i : idx) acc += x[static_cast<std::size_t>(i)];
    return acc / static_cast<double>(idx.size());
  };
  BootstrapCI a = stratified_bootstrap({mean_x}, big_strata, 50, 4);
  BootstrapCI b = stratified_bootstrap({mean_x}, big_strata, 50, 4);
  BootstrapCI c = stratified_bootstrap({mean_x}, big_strata, 50, 5);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
  CHECK((a.lower != c.lower || a.upper != c.upper));
}

TEST_CASE("bootstrap respects strata sizes") {
  std::vector<int> strata{0, 0, 1, 1, 1, 2};
  BootstrapStatistic count_stratum2 = [&](const std::vector<int>& idx) {
    int n = 0;
    for (int i : idx)
      if (strata[static_cast<std::size_t>(i)] == 2) ++n;
    return static_cast<double>(n);
  };
  BootstrapCI ci = stratified_bootstrap({count_stratum2}, strata, 200, 3);
  CHECK(ci.lower == 1.0);  // the singleton stratum always resamples itself
  CHECK(ci.upper == 1.0);
}

TEST_CASE("bootstrap coverage for a weighted mean") {
  // 200 repetitions at n=500; the 95% interval should cover the true
  // mean at least 90% of the time.
  Rng rng(77);
  int covered = 0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<double> x;
    std::vector<double> w;
    std::vector<int> strata;
    for (int i = 0; i < 500; ++i) {
      x.push_back(0.3 + rng.normal());
      w.push_back(0.5 + rng.uniform01());
      strata.push_back(i % 2);
    }
    BootstrapStatistic wmean = [&](const std::vector<int>& idx) {
      double num = 0, den = 0;
      for (int i : idx) {
        num += w[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
        den += w[static_cast<std::size_t>(i)];
      }
      return num / den;
    };
    BootstrapCI ci = stratified_bootstrap({wmean}, strata, 200, rng.next());
    if (ci.lower <= 0.3 && 0.3 <= ci.upper) ++covered;
  }
  CHECK(covered >= 180);
}

TEST_CASE("empty stratum errors") {
  std::vector<int> strata;
  BootstrapStatistic s = [](const std::vector<int>&) { return 0.0; };
  CHECK_THROWS_AS(stratified_bootstrap({s}, strata, 10, 0), ConfigError);
}
