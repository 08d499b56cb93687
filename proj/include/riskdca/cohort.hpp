// Cohort data model: samples with follow-up times and censoring
// indicators, synthetic generation, CSV ingestion, and partitioning.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "riskdca/config.hpp"

namespace riskdca {

struct Sample {
  std::string id;
  int group = 0;                  // index into Cohort::groups
  std::vector<double> features;
  double followup_time = 0.0;     // min(event time, censoring time)
  bool event_indicator = false;   // true when the outcome event was observed

  bool operator==(const Sample&) const = default;
};

struct Cohort {
  std::vector<Sample> samples;
  std::vector<std::string> groups;  // ordered vocabulary of group labels
  double horizon = 0.0;
  int feature_dim = 0;

  // Per-sample event probability at the horizon, kept by the synthetic
  // generator for oracle checks; empty for loaded cohorts. Not part of
  // the on-disk schema and excluded from equality.
  std::vector<double> true_event_prob;

  std::size_t size() const { return samples.size(); }
  int n_groups() const { return static_cast<int>(groups.size()); }
  int group_index(const std::string& name) const;
  void validate() const;

  bool operator==(const Cohort& other) const {
    return samples == other.samples && groups == other.groups &&
           horizon == other.horizon && feature_dim == other.feature_dim;
  }
};

struct SplitSpec {
  double train_fraction = 0.625;
  double validation_fraction = 0.125;
  double test_fraction = 0.25;
  int n_train_folds = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  std::vector<Cohort> train_folds;
  Cohort validation;
  Cohort test;
};

struct GroupSynthSpec {
  std::string name;
  int count = 0;
  double event_rate = 0.0;    // exponential rate of the event time at x = 0
  double censor_rate = 0.0;   // exponential rate of the censoring time; 0 = none
};

struct SynthConfig {
  std::vector<GroupSynthSpec> groups;
  int feature_dim = 4;
  double horizon = 10.0;
  // Log-linear feature effect on the event rate: the per-sample rate is
  // event_rate * exp(feature_coef * mean(x)). Censoring analogous via x[0].
  double feature_coef = 0.0;
  double censor_feature_coef = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Event times are exponential with a log-linear rate in the features plus
// a group offset; censoring times are exponential and independent of the
// event time given the features. Deterministic given the seed.
Cohort generate_synthetic_cohort(const SynthConfig& config);

// CSV schema: header `id,group,t,event,f0,...,f{m-1}`. An optional
// leading directive line `# groups: a,b,c` fixes the vocabulary order;
// otherwise the vocabulary is the sorted set of observed labels.
Cohort load_cohort(const std::string& path, double horizon);
void save_cohort(const Cohort& cohort, const std::string& path);
std::string cohort_to_csv(const Cohort& cohort);

// Seeded shuffle then contiguous slicing into train folds / validation /
// test. Train fold sizes differ by at most one.
Split partition(const Cohort& cohort, const SplitSpec& spec);

SynthConfig synth_config_from(const KeyValueConfig& cfg);
SplitSpec split_spec_from(const KeyValueConfig& cfg);

}  // namespace riskdca
