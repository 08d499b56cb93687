#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "riskdca/censoring.hpp"
#include "riskdca/cohort.hpp"
#include "riskdca/config.hpp"
#include "riskdca/errors.hpp"

using namespace riskdca;

namespace {

SynthConfig two_group_config() {
  SynthConfig cfg;
  cfg.groups = {{"a", 200, 0.03, 0.02}, {"b", 100, 0.06, 0.02}};
  cfg.feature_dim = 3;
  cfg.horizon = 10.0;
  cfg.feature_coef = 0.4;
  cfg.censor_feature_coef = 0.2;
  cfg.seed = 7;
  return cfg;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("synthetic generator rejects bad configs") {
  SynthConfig cfg = two_group_config();
  cfg.groups[0].count = 0;
  CHECK_THROWS_AS(generate_synthetic_cohort(cfg), ConfigError);
  cfg = two_group_config();
  cfg.groups[1].event_rate = 0.0;
  CHECK_THROWS_AS(generate_synthetic_cohort(cfg), ConfigError);
  cfg = two_group_config();
  cfg.horizon = -1.0;
  CHECK_THROWS_AS(generate_synthetic_cohort(cfg), ConfigError);
}

TEST_CASE("zero censoring intensity leaves every outcome uncensored") {
  SynthConfig cfg = two_group_config();
  for (auto& g : cfg.groups) g.censor_rate = 0.0;
  Cohort cohort = generate_synthetic_cohort(cfg);
  for (const Sample& s : cohort.samples) {
    CompositeOutcome c = derive_composite_outcome(s.followup_time,
                                                  s.event_indicator,
                                                  cohort.horizon);
    CHECK(c.delta_y == 1);
  }
}

TEST_CASE("same seed reproduces the cohort byte for byte") {
  SynthConfig cfg = two_group_config();
  Cohort a = generate_synthetic_cohort(cfg);
  Cohort b = generate_synthetic_cohort(cfg);
  CHECK(a == b);
  CHECK(cohort_to_csv(a) == cohort_to_csv(b));
  cfg.seed = 8;
  CHECK_FALSE(generate_synthetic_cohort(cfg) == a);
}

TEST_CASE("generator incidence matches the exponential closed form") {
  // rate chosen so P(T <= horizon) = 0.25, no feature effect
  double p_target = 0.25;
  SynthConfig cfg;
  cfg.groups = {{"g", 10000, -std::log1p(-p_target) / 10.0, 0.0}};
  cfg.feature_dim = 2;
  cfg.horizon = 10.0;
  cfg.feature_coef = 0.0;
  cfg.seed = 11;
  Cohort cohort = generate_synthetic_cohort(cfg);
  int events = 0;
  for (const Sample& s : cohort.samples)
    if (s.event_indicator && s.followup_time <= cfg.horizon) ++events;
  double phat = static_cast<double>(events) / 10000.0;
  double sigma = std::sqrt(p_target * (1 - p_target) / 10000.0);
  CHECK(std::abs(phat - p_target) < 3.0 * sigma);
  for (double p : cohort.true_event_prob) CHECK(p == doctest::Approx(0.25));
}

TEST_CASE("cohort csv round trip preserves everything") {
  Cohort cohort = generate_synthetic_cohort(two_group_config());
  std::string path = temp_path("riskdca_roundtrip.csv");
  save_cohort(cohort, path);
  Cohort loaded = load_cohort(path, cohort.horizon);
  CHECK(loaded == cohort);
  std::remove(path.c_str());
}

TEST_CASE("load_cohort parses a small well-formed file") {
  std::string path = temp_path("riskdca_small.csv");
  {
    FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("id,group,t,event,f0\nA,x,1.5,1,0.2\nB,y,3.0,0,-1\nC,x,12,1,0\n",
               f);
    std::fclose(f);
  }
  Cohort cohort = load_cohort(path, 10.0);
  CHECK(cohort.size() == 3);
  CHECK(cohort.feature_dim == 1);
  // vocabulary is the sorted set of observed labels
  CHECK(cohort.groups == std::vector<std::string>{"x", "y"});
  CHECK(cohort.samples[1].group == 1);
  std::remove(path.c_str());
}

TEST_CASE("load_cohort errors name the offending row") {
  std::string path = temp_path("riskdca_bad.csv");
  {
    FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("id,group,t,event,f0\nA,x,1.5,1,0.2\nB,y,-3.0,0,0\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(load_cohort(path, 10.0),
                       doctest::Contains("row 3"), ParseError);
  {
    FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("id,group,t,event,f0\nA,x,abc,1,0.2\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(load_cohort(path, 10.0),
                       doctest::Contains("column t"), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("group directive fixes the vocabulary order") {
  std::string path = temp_path("riskdca_directive.csv");
  {
    FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("# groups: z,x,unused\nid,group,t,event,f0\nA,x,1,1,0\n", f);
    std::fclose(f);
  }
  Cohort cohort = load_cohort(path, 10.0);
  CHECK(cohort.groups == std::vector<std::string>{"z", "x", "unused"});
  CHECK(cohort.samples[0].group == 1);
  std::remove(path.c_str());
}

TEST_CASE("partition slices 8 samples into 5/1/2") {
  SynthConfig cfg = two_group_config();
  cfg.groups = {{"a", 8, 0.03, 0.0}};
  Cohort cohort = generate_synthetic_cohort(cfg);
  SplitSpec spec;
  spec.n_train_folds = 5;
  spec.seed = 1;
  Split split = partition(cohort, spec);
  std::size_t train_total = 0;
  for (const Cohort& f : split.train_folds) train_total += f.size();
  CHECK(train_total == 5);
  CHECK(split.validation.size() == 1);
  CHECK(split.test.size() == 2);
}

TEST_CASE("degenerate fractions are rejected") {
  SplitSpec spec;
  spec.train_fraction = 1.0;
  spec.validation_fraction = 0.0;
  spec.test_fraction = 0.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = SplitSpec{};
  spec.train_fraction = 0.5;  // fractions no longer sum to 1
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("partition is a bijection on sample ids") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    SynthConfig cfg = two_group_config();
    cfg.seed = seed;
    Cohort cohort = generate_synthetic_cohort(cfg);
    SplitSpec spec;
    spec.seed = seed;
    Split split = partition(cohort, spec);
    std::set<std::string> seen;
    std::size_t total = 0;
    auto account = [&](const Cohort& part) {
      for (const Sample& s : part.samples) {
        CHECK(seen.insert(s.id).second);  // pairwise disjoint
        ++total;
      }
    };
    for (const Cohort& f : split.train_folds) account(f);
    account(split.validation);
    account(split.test);
    CHECK(total == cohort.size());
  }
}

TEST_CASE("partition too small for the requested parts errors") {
  SynthConfig cfg = two_group_config();
  cfg.groups = {{"a", 3, 0.03, 0.0}};
  Cohort cohort = generate_synthetic_cohort(cfg);
  SplitSpec spec;  // needs at least 5 train + 1 val + 1 test
  CHECK_THROWS_AS(partition(cohort, spec), ConfigError);
}

TEST_CASE("config parsing and hashing") {
  KeyValueConfig cfg = KeyValueConfig::from_string(
      "a = 1\n# comment\nlist = x, y ,z\nflag = true\n");
  CHECK(cfg.get_int("a") == 1);
  CHECK(cfg.get_list("list") == std::vector<std::string>{"x", "y", "z"});
  CHECK(cfg.get_bool("flag", false));
  CHECK(cfg.get_double("missing", 2.5) == 2.5);
  CHECK_THROWS_AS(cfg.get_string("missing"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::from_string("noequals\n"), ConfigError);

  std::uint64_t h = cfg.hash();
  KeyValueConfig cfg2 = KeyValueConfig::from_string(
      "a = 1\nlist = x, y ,z\nflag = true\n");
  CHECK(cfg2.hash() == h);  // comments do not affect the hash
  cfg2.set("a", "2");
  CHECK(cfg2.hash() != h);
}
