// Command-line front-end: synthetic cohorts, censoring weights, model
// training, evaluation with bootstrap intervals, decision curves, and the
// analytic simulation, all driven by flat key-value config files.
#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "riskdca/censoring.hpp"
#include "riskdca/cohort.hpp"
#include "riskdca/config.hpp"
#include "riskdca/decision.hpp"
#include "riskdca/errors.hpp"
#include "riskdca/io.hpp"
#include "riskdca/metrics.hpp"
#include "riskdca/report.hpp"
#include "riskdca/sim.hpp"
#include "riskdca/train.hpp"

namespace fs = std::filesystem;
using namespace riskdca;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
  std::string config_path;
  std::optional<long long> seed;
  std::optional<std::string> out;
  int threads = 1;
};

KeyValueConfig load_config(const CommonArgs& args) {
  KeyValueConfig cfg = args.config_path.empty()
                           ? KeyValueConfig()
                           : KeyValueConfig::from_file(args.config_path);
  if (args.seed) cfg.set("seed", std::to_string(*args.seed));
  if (args.out) cfg.set("out", *args.out);
  return cfg;
}

std::string out_dir(const KeyValueConfig& cfg) {
  std::string dir = cfg.get_string("out", "out");
  fs::create_directories(dir);
  return dir;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// Incremental stage log; rewritten atomically after every stage so a
// failed run still records what completed.
struct Manifest {
  std::string path;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> stages;

  void record(const std::string& stage) {
    stages.push_back(stage);
    std::ostringstream out;
    out << "config_hash " << std::hex << config_hash << std::dec << "\n";
    out << "seed " << seed << "\n";
    for (const std::string& s : stages) out << "stage " << s << "\n";
    write_file_atomic(path, out.str());
  }
};

// The output directory determines where results land, not what they are,
// so it stays out of the recorded config hash.
std::uint64_t result_config_hash(const KeyValueConfig& cfg) {
  KeyValueConfig stripped;
  for (const auto& [k, v] : cfg.entries())
    if (k != "out") stripped.set(k, v);
  return stripped.hash();
}

Cohort load_or_synth(const KeyValueConfig& cfg) {
  if (cfg.has("data.cohort"))
    return load_cohort(cfg.get_string("data.cohort"),
                       cfg.get_double("data.horizon"));
  return generate_synthetic_cohort(synth_config_from(cfg));
}

ModelArch arch_from(const KeyValueConfig& cfg) {
  ModelArch arch;
  std::string kind = cfg.get_string("train.model", "logistic");
  if (kind == "mlp") {
    for (double h : cfg.get_double_list("train.hidden"))
      arch.hidden.push_back(static_cast<int>(h));
    if (arch.hidden.empty())
      throw ConfigError("train.hidden required for train.model = mlp");
  } else if (kind != "logistic") {
    throw ConfigError("train.model must be logistic or mlp");
  }
  std::string act = cfg.get_string("train.activation", "relu");
  if (act == "tanh")
    arch.activation = Activation::kTanh;
  else if (act != "relu")
    throw ConfigError("train.activation must be relu or tanh");
  arch.dropout = cfg.get_double("train.dropout", 0.0);
  return arch;
}

Objective objective_from(const std::string& name) {
  if (name == "erm" || name == "stratified") return Objective::kErm;
  if (name == "reg_mmd") return Objective::kRegMmd;
  if (name == "reg_parity") return Objective::kRegParity;
  if (name == "dro_logloss") return Objective::kDroLogLoss;
  if (name == "dro_auc") return Objective::kDroAuc;
  throw ConfigError("unknown objective: " + name);
}

std::vector<ParityMetricSpec> parity_metrics_from(const KeyValueConfig& cfg) {
  std::vector<ParityMetricSpec> out;
  std::vector<double> thresholds{0.075, 0.20};
  if (cfg.has("train.parity_thresholds"))
    thresholds = cfg.get_double_list("train.parity_thresholds");
  std::vector<std::string> names{"tpr", "fpr"};
  if (cfg.has("train.parity_metrics")) names = cfg.get_list("train.parity_metrics");
  for (const std::string& name : names) {
    if (name == "auc") {
      out.push_back({ParityMetricSpec::Kind::kAuc, 0.0});
    } else if (name == "log_loss") {
      out.push_back({ParityMetricSpec::Kind::kLogLoss, 0.0});
    } else if (name == "tpr" || name == "fpr") {
      for (double t : thresholds)
        out.push_back({name == "tpr" ? ParityMetricSpec::Kind::kTpr
                                     : ParityMetricSpec::Kind::kFpr,
                       t});
    } else {
      throw ConfigError("unknown parity metric: " + name);
    }
  }
  return out;
}

TrainConfig train_config_from(const KeyValueConfig& cfg) {
  TrainConfig tc;
  tc.objective = objective_from(cfg.get_string("train.objective", "erm"));
  tc.arch = arch_from(cfg);
  tc.lambda = cfg.get_double("train.lambda", 0.0);
  tc.eta = cfg.get_double("train.eta", 0.1);
  tc.gamma = cfg.get_double("train.gamma", 1.0);
  tc.surrogate = surrogate_from_name(cfg.get_string("train.surrogate", "softplus"));
  tc.parity_metrics = parity_metrics_from(cfg);
  tc.mmd_cell_average = cfg.get_bool("train.mmd_cell_average", false);
  tc.learning_rate = cfg.get_double("train.lr", 0.1);
  tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size", 64));
  tc.max_epochs = static_cast<int>(cfg.get_int("train.max_epochs", 200));
  tc.patience = static_cast<int>(cfg.get_int("train.patience", 25));
  tc.balanced_sampling = cfg.get_bool("train.balanced_sampling", false);
  tc.adam = cfg.get_bool("train.adam", false);
  tc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  tc.validate();
  return tc;
}

// ---------------------------------------------------------------------------
// Fold machinery shared by train and pipeline

struct FoldData {
  std::vector<Cohort> folds;
  Cohort validation, test;
  std::vector<CensoringModel> censoring;   // one per fold, fit excluding it
  std::vector<std::vector<double>> raw_w;  // per fold, from its own model
  WeightVector validation_w, test_w;

  Cohort train_union(int held_out) const {
    Cohort out;
    out.groups = validation.groups;
    out.horizon = validation.horizon;
    out.feature_dim = validation.feature_dim;
    for (std::size_t j = 0; j < folds.size(); ++j) {
      if (static_cast<int>(j) == held_out) continue;
      for (const Sample& s : folds[j].samples) out.samples.push_back(s);
    }
    return out;
  }

  WeightVector train_weights(int held_out) const {
    std::vector<double> raw;
    for (std::size_t j = 0; j < folds.size(); ++j) {
      if (static_cast<int>(j) == held_out) continue;
      raw.insert(raw.end(), raw_w[j].begin(), raw_w[j].end());
    }
    return normalize_weights(std::move(raw));
  }
};

FoldData prepare_folds(const Cohort& cohort, const KeyValueConfig& cfg) {
  FoldData fd;
  SplitSpec split = split_spec_from(cfg);
  Split parts = partition(cohort, split);
  fd.folds = std::move(parts.train_folds);
  fd.validation = std::move(parts.validation);
  fd.test = std::move(parts.test);

  int n_intervals = static_cast<int>(cfg.get_int("censoring.intervals", 20));
  CensoringFitConfig fit_cfg;
  fit_cfg.max_iter = static_cast<int>(cfg.get_int("censoring.max_iter", 100));
  fit_cfg.intercept_only = cfg.get_bool("censoring.intercept_only", false);
  double floor = cfg.get_double("censoring.g_floor", 1e-3);

  const int k = static_cast<int>(fd.folds.size());
  for (int f = 0; f < k; ++f) {
    Cohort train = k > 1 ? fd.train_union(f) : fd.folds[0];
    fd.censoring.push_back(fit_censoring_model(train, n_intervals, fit_cfg));
  }
  for (int f = 0; f < k; ++f)
    fd.raw_w.push_back(ipcw_raw_weights(fd.censoring[static_cast<std::size_t>(f)],
                                        fd.folds[static_cast<std::size_t>(f)],
                                        floor));
  std::vector<const CensoringModel*> all;
  for (const CensoringModel& m : fd.censoring) all.push_back(&m);
  fd.validation_w = ipcw_weights_averaged(all, fd.validation, floor);
  fd.test_w = ipcw_weights_averaged(all, fd.test, floor);
  int clipped = fd.validation_w.clip_count + fd.test_w.clip_count;
  if (clipped)
    std::cerr << "warning: censoring survival floored at " << floor << " for "
              << clipped << " evaluation sample(s)\n";
  return fd;
}

std::string training_log_csv(const std::vector<std::vector<EpochLog>>& logs) {
  std::ostringstream out;
  out << "epoch,fold,objective_value,dev_metric,worst_group\n";
  for (std::size_t f = 0; f < logs.size(); ++f)
    for (const EpochLog& e : logs[f])
      out << e.epoch << ',' << f << ',' << format_double_short(e.train_objective)
          << ',' << format_double_short(e.dev_metric) << ',' << e.worst_group
          << "\n";
  return out.str();
}

struct TrainedCandidate {
  std::string name;
  double lambda = 0.0;
  std::vector<TrainResult> folds;
  std::vector<std::vector<EpochLog>> logs;
  std::vector<double> fold_val_metric;
};

double validation_metric(const Cohort& validation, const WeightVector& vw,
                         const std::vector<double>& scores,
                         SelectionCriterion criterion) {
  auto comps = composite_outcomes(validation);
  std::vector<int> y;
  for (const CompositeOutcome& c : comps) y.push_back(c.y);
  if (criterion == SelectionCriterion::kPooledLogLoss)
    return ipcw_log_loss(scores, y, vw.weights);
  double worst = 0.0;
  bool any = false;
  for (int g = 0; g < validation.n_groups(); ++g) {
    std::vector<double> s, w;
    std::vector<int> yg;
    for (std::size_t i = 0; i < validation.size(); ++i) {
      if (validation.samples[i].group != g) continue;
      s.push_back(scores[i]);
      yg.push_back(y[i]);
      w.push_back(vw.weights[i]);
    }
    if (s.empty()) continue;
    try {
      double v = criterion == SelectionCriterion::kWorstCaseAuc
                     ? ipcw_auc(s, yg, w)
                     : ipcw_log_loss(s, yg, w);
      bool worse = criterion == SelectionCriterion::kWorstCaseAuc ? v < worst
                                                                  : v > worst;
      if (!any || worse) worst = v;
      any = true;
    } catch (const MetricUndefined&) {
    }
  }
  if (!any) throw TrainingError("validation metric undefined for every group");
  return worst;
}

TrainedCandidate train_candidate(const FoldData& fd, const TrainConfig& tc,
                                 const std::string& name, bool group_onehot,
                                 SelectionCriterion criterion) {
  TrainedCandidate cand;
  cand.name = name;
  cand.lambda = tc.lambda;
  const int k = static_cast<int>(fd.folds.size());
  for (int f = 0; f < k; ++f) {
    Cohort train = k > 1 ? fd.train_union(f) : fd.folds[0];
    WeightVector tw = k > 1 ? fd.train_weights(f)
                            : normalize_weights(std::vector<double>(
                                  fd.raw_w[0].begin(), fd.raw_w[0].end()));
    const Cohort& dev = fd.folds[static_cast<std::size_t>(f)];
    WeightVector dw = ipcw_weights(fd.censoring[static_cast<std::size_t>(f)],
                                   dev);
    TrainConfig fold_cfg = tc;
    fold_cfg.seed = splitmix64(tc.seed ^ (0xf01d0000ULL + static_cast<std::uint64_t>(f)));
    Dataset train_ds = Dataset::from(train, tw, group_onehot);
    Dataset dev_ds = Dataset::from(dev, dw, group_onehot);
    TrainResult res = train_model(train_ds, dev_ds, fold_cfg);
    Dataset val_ds = Dataset::from(fd.validation, fd.validation_w, group_onehot);
    Eigen::VectorXd vs = res.model.score(val_ds.X);
    std::vector<double> scores(vs.data(), vs.data() + vs.size());
    cand.fold_val_metric.push_back(
        validation_metric(fd.validation, fd.validation_w, scores, criterion));
    cand.logs.push_back(res.log);
    cand.folds.push_back(std::move(res));
  }
  return cand;
}

std::vector<std::vector<double>> candidate_scores(
    const TrainedCandidate& cand, const Cohort& cohort,
    const WeightVector& weights, bool group_onehot) {
  Dataset ds = Dataset::from(cohort, weights, group_onehot);
  std::vector<std::vector<double>> out;
  for (const TrainResult& fold : cand.folds) {
    Eigen::VectorXd s = fold.model.score(ds.X);
    out.emplace_back(s.data(), s.data() + s.size());
  }
  return out;
}

SelectionCriterion criterion_for(const KeyValueConfig& cfg, Objective obj) {
  std::string name = cfg.get_string("pipeline.selection", "");
  if (name.empty()) {
    if (obj == Objective::kErm) return SelectionCriterion::kPooledLogLoss;
    if (obj == Objective::kDroAuc) return SelectionCriterion::kWorstCaseAuc;
    if (obj == Objective::kRegParity)
      for (const ParityMetricSpec& m : parity_metrics_from(cfg))
        if (m.kind == ParityMetricSpec::Kind::kAuc)
          return SelectionCriterion::kWorstCaseAuc;
    return SelectionCriterion::kWorstCaseLogLoss;
  }
  if (name == "pooled_log_loss") return SelectionCriterion::kPooledLogLoss;
  if (name == "worst_case_auc") return SelectionCriterion::kWorstCaseAuc;
  if (name == "worst_case_log_loss") return SelectionCriterion::kWorstCaseLogLoss;
  throw ConfigError("unknown selection criterion: " + name);
}

EvaluationSpec evaluation_spec_from(const KeyValueConfig& cfg, int threads) {
  EvaluationSpec spec;
  if (cfg.has("eval.thresholds"))
    spec.thresholds = cfg.get_double_list("eval.thresholds");
  std::string kind = cfg.get_string("eval.nb_kind", "rr");
  if (kind == "fixed")
    spec.nb_kind = BenefitKind::kFixedCost;
  else if (kind == "rr")
    spec.nb_kind = BenefitKind::kRiskReduction;
  else
    throw ConfigError("eval.nb_kind must be fixed or rr");
  spec.r = cfg.has("eval.kappa")
               ? relative_risk_reduction(cfg.get_double("eval.kappa"))
               : cfg.get_double("eval.r", 0.275);
  spec.n_bootstrap = static_cast<int>(cfg.get_int("eval.n_bootstrap", 1000));
  spec.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  spec.threads = threads;
  return spec;
}

std::string decision_curves_csv(const Cohort& cohort,
                                const std::vector<double>& scores,
                                const WeightVector& weights,
                                const DecisionCurveSpec& spec) {
  auto comps = composite_outcomes(cohort);
  std::vector<int> y;
  for (const CompositeOutcome& c : comps) y.push_back(c.y);

  std::ostringstream out;
  out << "group,mode,tau,tau_star,nb,cnb,treat_all_nb\n";
  auto emit = [&](const std::string& label, const std::vector<double>& s,
                  const std::vector<int>& yy, const std::vector<double>& ww) {
    // A non-invertible fitted curve leaves cNB undefined for the series;
    // the column carries the NA marker rather than dropping the rows.
    bool have_cal = true;
    CalibrationModel cal;
    try {
      cal = fit_calibration_curve(s, yy, ww);
      if (cal.slope <= 0.0) have_cal = false;
    } catch (const std::exception&) {
      have_cal = false;
    }
    if (!have_cal) {
      std::cerr << "warning: calibration for '" << label
                << "' is not invertible; cnb marked NA\n";
      cal = CalibrationModel{};
    }
    DecisionCurve curve = decision_curve(s, yy, ww, spec, cal);
    const char* mode =
        spec.mode == CurveMode::kStandard ? "standard" : "parameterized";
    for (const DecisionCurvePoint& p : curve.points)
      out << label << ',' << mode << ',' << format_double_short(p.tau) << ','
          << format_double_short(p.tau_star) << ','
          << format_double_short(p.nb) << ','
          << (have_cal ? format_double_short(p.cnb) : std::string("NA")) << ','
          << format_double_short(p.treat_all_nb) << "\n";
  };
  emit("overall", scores, y, weights.weights);
  for (int g = 0; g < cohort.n_groups(); ++g) {
    std::vector<double> s, w;
    std::vector<int> yg;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      if (cohort.samples[i].group != g) continue;
      s.push_back(scores[i]);
      yg.push_back(y[i]);
      w.push_back(weights.weights[i]);
    }
    if (s.empty()) continue;
    emit(cohort.groups[static_cast<std::size_t>(g)], s, yg, w);
  }
  return out.str();
}

DecisionCurveSpec dca_spec_from(const KeyValueConfig& cfg) {
  DecisionCurveSpec spec;
  double start = cfg.get_double("dca.grid_start", 0.005);
  double stop = cfg.get_double("dca.grid_stop", 0.995);
  double step = cfg.get_double("dca.grid_step", 0.005);
  if (step <= 0.0 || start <= 0.0 || stop >= 1.0 || stop < start)
    throw ConfigError("bad dca grid");
  spec.grid.clear();
  // multiply-only form so default grids hit 0.075 and 0.20 bit-exactly
  long long k0 = std::llround(start / step);
  long long n = std::llround(stop / step) - k0;
  for (long long i = 0; i <= n; ++i)
    spec.grid.push_back(static_cast<double>(k0 + i) * step);
  std::string mode = cfg.get_string("dca.mode", "standard");
  if (mode == "parameterized")
    spec.mode = CurveMode::kParameterized;
  else if (mode != "standard")
    throw ConfigError("dca.mode must be standard or parameterized");
  std::string kind = cfg.get_string("dca.nb_kind", "rr");
  if (kind == "fixed")
    spec.kind = BenefitKind::kFixedCost;
  else if (kind == "rr")
    spec.kind = BenefitKind::kRiskReduction;
  else
    throw ConfigError("dca.nb_kind must be fixed or rr");
  spec.tau_star = cfg.get_double("dca.tau_star", 0.2);
  spec.r = cfg.has("dca.kappa")
               ? relative_risk_reduction(cfg.get_double("dca.kappa"))
               : cfg.get_double("dca.r", 0.275);
  return spec;
}

WeightVector weights_from_config(const KeyValueConfig& cfg, const Cohort& cohort,
                                 const std::string& prefix) {
  if (cfg.has(prefix + ".weights")) {
    std::string v = cfg.get_string(prefix + ".weights");
    if (v == "uniform") return WeightVector::uniform(cohort.size());
    return load_weights(cohort, v);
  }
  if (cfg.has(prefix + ".censoring_model")) {
    CensoringModel m =
        CensoringModel::load(cfg.get_string(prefix + ".censoring_model"));
    return ipcw_weights(m, cohort);
  }
  throw ConfigError("set " + prefix + ".weights (path or 'uniform') or " +
                    prefix + ".censoring_model");
}

// ---------------------------------------------------------------------------
// Commands

int cmd_simulate(const CommonArgs& args) {
  KeyValueConfig cfg = load_config(args);
  std::string dir = out_dir(cfg);
  int grid_points = static_cast<int>(cfg.get_int("sim.grid_points", 4001));
  double eval_step = cfg.get_double("sim.eval_step", 0.001);

  std::vector<SimScenario> scenarios = default_scenarios(grid_points, eval_step);
  for (SimScenario& sc : scenarios) {
    sc.tau_star = cfg.get_double("sim.tau_star", 0.2);
    sc.utility.u_tp = cfg.get_double("sim.u_tp", 0.8);
    sc.utility.u_fp = cfg.get_double("sim.u_fp", 0.0);
    sc.utility.u_tn = cfg.get_double("sim.u_tn", 0.2);
    sc.utility.u_fn = cfg.get_double("sim.u_fn", 0.0);
  }

  std::ostringstream series_csv, argmax_csv;
  series_csv << "setting,subgroup,series,s,value\n";
  argmax_csv << "setting,subgroup,metric,threshold\n";
  for (const SimScenario& sc : scenarios) {
    SimResult result = run_simulation(sc);
    std::string setting = sim_setting_name(result.setting);
    for (const SimSeries& ser : result.series)
      for (std::size_t i = 0; i < ser.s.size(); ++i)
        series_csv << setting << ',' << ser.subgroup << ',' << ser.series << ','
                   << format_double_short(ser.s[i]) << ','
                   << format_double_short(ser.value[i]) << "\n";
    for (const SimArgmax& am : result.argmax)
      argmax_csv << setting << ',' << am.subgroup << ',' << am.metric << ','
                 << format_double_short(am.threshold) << "\n";
  }
  write_file_atomic(join_path(dir, "sim_series.csv"), series_csv.str());
  write_file_atomic(join_path(dir, "sim_argmax.csv"), argmax_csv.str());
  std::cout << "simulation written to " << dir << "\n";
  return kExitOk;
}

int cmd_synth(const CommonArgs& args) {
  KeyValueConfig cfg = load_config(args);
  std::string dir = out_dir(cfg);
  Cohort cohort = generate_synthetic_cohort(synth_config_from(cfg));
  save_cohort(cohort, join_path(dir, "cohort.csv"));
  std::ostringstream truth;
  truth << "id,true_event_prob\n";
  for (std::size_t i = 0; i < cohort.size(); ++i)
    truth << cohort.samples[i].id << ','
          << format_double(cohort.true_event_prob[i]) << "\n";
  write_file_atomic(join_path(dir, "cohort_truth.csv"), truth.str());
  std::cout << "cohort of " << cohort.size() << " samples written to " << dir
            << "\n";
  return kExitOk;
}

int cmd_train(const CommonArgs& args) {
  KeyValueConfig cfg = load_config(args);
  std::string dir = out_dir(cfg);
  Cohort cohort = load_or_synth(cfg);
  FoldData fd = prepare_folds(cohort, cfg);
  TrainConfig tc = train_config_from(cfg);
  bool onehot = cfg.get_bool("train.group_onehot", true);
  std::string objective = cfg.get_string("train.objective", "erm");
  SelectionCriterion criterion = criterion_for(cfg, tc.objective);

  for (std::size_t f = 0; f < fd.folds.size(); ++f)
    fd.censoring[f].save(join_path(dir, "censoring_fold" + std::to_string(f) +
                                            ".txt"));
  if (objective == "stratified") {
    // One model per group per fold.
    std::vector<std::vector<EpochLog>> logs;
    for (std::size_t f = 0; f < fd.folds.size(); ++f) {
      Cohort train = fd.folds.size() > 1 ? fd.train_union(static_cast<int>(f))
                                         : fd.folds[0];
      WeightVector tw =
          fd.folds.size() > 1
              ? fd.train_weights(static_cast<int>(f))
              : normalize_weights(std::vector<double>(fd.raw_w[0].begin(),
                                                      fd.raw_w[0].end()));
      WeightVector dw = ipcw_weights(fd.censoring[f], fd.folds[f]);
      StratifiedResult res =
          train_stratified(Dataset::from(train, tw, onehot),
                           Dataset::from(fd.folds[f], dw, onehot), tc);
      for (const std::string& err : res.errors)
        std::cerr << "warning: fold " << f << ": " << err << "\n";
      for (std::size_t g = 0; g < res.per_group.size(); ++g)
        if (res.per_group[g]) {
          res.per_group[g]->model.save(
              join_path(dir, "model_fold" + std::to_string(f) + "_group" +
                                 std::to_string(g) + ".txt"));
          logs.push_back(res.per_group[g]->log);
        }
    }
    write_file_atomic(join_path(dir, "training_log.csv"), training_log_csv(logs));
  } else {
    TrainedCandidate cand = train_candidate(fd, tc, objective, onehot, criterion);
    for (std::size_t f = 0; f < cand.folds.size(); ++f)
      cand.folds[f].model.save(
          join_path(dir, "model_fold" + std::to_string(f) + ".txt"));
    write_file_atomic(join_path(dir, "training_log.csv"),
                      training_log_csv(cand.logs));
  }
  save_weights(fd.validation, fd.validation_w,
               join_path(dir, "weights_validation.csv"));
  save_weights(fd.test, fd.test_w, join_path(dir, "weights_test.csv"));
  std::cout << "training artifacts written to " << dir << "\n";
  return kExitOk;
}

int cmd_pipeline(const CommonArgs& args) {
  KeyValueConfig cfg = load_config(args);
  std::string dir = out_dir(cfg);
  Manifest manifest{join_path(dir, "manifest.txt"), result_config_hash(cfg),
                    static_cast<std::uint64_t>(cfg.get_int("seed", 0)),
                    {}};

  Cohort cohort = load_or_synth(cfg);
  save_cohort(cohort, join_path(dir, "cohort.csv"));
  manifest.record("cohort");

  FoldData fd = prepare_folds(cohort, cfg);
  for (std::size_t f = 0; f < fd.folds.size(); ++f)
    fd.censoring[f].save(
        join_path(dir, "censoring_fold" + std::to_string(f) + ".txt"));
  save_weights(fd.validation, fd.validation_w,
               join_path(dir, "weights_validation.csv"));
  save_weights(fd.test, fd.test_w, join_path(dir, "weights_test.csv"));
  manifest.record("censoring_weights");

  TrainConfig base_tc = train_config_from(cfg);
  bool onehot = cfg.get_bool("train.group_onehot", true);
  SelectionCriterion criterion = criterion_for(cfg, base_tc.objective);
  std::string objective = cfg.get_string("train.objective", "erm");

  std::vector<std::vector<double>> test_scores;
  if (objective == "stratified") {
    // One ERM model per group per fold; evaluation routes each test row
    // to its group's model.
    std::vector<std::vector<EpochLog>> logs;
    for (std::size_t f = 0; f < fd.folds.size(); ++f) {
      Cohort train = fd.folds.size() > 1 ? fd.train_union(static_cast<int>(f))
                                         : fd.folds[0];
      WeightVector tw =
          fd.folds.size() > 1
              ? fd.train_weights(static_cast<int>(f))
              : normalize_weights(std::vector<double>(fd.raw_w[0].begin(),
                                                      fd.raw_w[0].end()));
      WeightVector dw = ipcw_weights(fd.censoring[f], fd.folds[f]);
      TrainConfig tc = base_tc;
      tc.seed = splitmix64(base_tc.seed ^
                           (0xf01d0000ULL + static_cast<std::uint64_t>(f)));
      StratifiedResult res =
          train_stratified(Dataset::from(train, tw, onehot),
                           Dataset::from(fd.folds[f], dw, onehot), tc);
      if (!res.errors.empty()) {
        std::string detail;
        for (const std::string& e : res.errors) detail += e + "; ";
        throw TrainingError("stratified pipeline needs every group: " + detail);
      }
      std::vector<const RiskModel*> models;
      for (std::size_t g = 0; g < res.per_group.size(); ++g) {
        models.push_back(&res.per_group[g]->model);
        res.per_group[g]->model.save(
            join_path(dir, "model_fold" + std::to_string(f) + "_group" +
                               std::to_string(g) + ".txt"));
        logs.push_back(res.per_group[g]->log);
      }
      Dataset test_ds = Dataset::from(fd.test, fd.test_w, onehot);
      Eigen::VectorXd s = score_stratified(models, test_ds);
      test_scores.emplace_back(s.data(), s.data() + s.size());
      manifest.record("train stratified fold " + std::to_string(f));
    }
    write_file_atomic(join_path(dir, "selected.txt"), "stratified\n");
    write_file_atomic(join_path(dir, "training_log.csv"),
                      training_log_csv(logs));
    manifest.record("select stratified");
  } else {
    // Candidate grid: lambda values for regularized objectives, eta for DRO.
    std::vector<TrainedCandidate> trained;
    std::vector<Candidate> cands;
    auto add_candidate = [&](TrainConfig tc, const std::string& name) {
      TrainedCandidate tcand = train_candidate(fd, tc, name, onehot, criterion);
      cands.push_back({name, tc.lambda, tcand.fold_val_metric});
      trained.push_back(std::move(tcand));
      manifest.record("train " + name);
    };
    if (base_tc.objective == Objective::kRegMmd ||
        base_tc.objective == Objective::kRegParity) {
      std::vector<double> grid = cfg.has("train.lambda_grid")
                                     ? cfg.get_double_list("train.lambda_grid")
                                     : std::vector<double>{base_tc.lambda};
      for (double lambda : grid) {
        TrainConfig tc = base_tc;
        tc.lambda = lambda;
        add_candidate(tc, objective + "_lambda" + format_double_short(lambda));
      }
    } else if (base_tc.objective == Objective::kDroLogLoss ||
               base_tc.objective == Objective::kDroAuc) {
      std::vector<double> grid = cfg.has("train.eta_grid")
                                     ? cfg.get_double_list("train.eta_grid")
                                     : std::vector<double>{base_tc.eta};
      for (double eta : grid) {
        TrainConfig tc = base_tc;
        tc.eta = eta;
        add_candidate(tc, objective + "_eta" + format_double_short(eta));
      }
    } else {
      add_candidate(base_tc, objective);
    }

    int chosen = select_model(cands, criterion);
    write_file_atomic(join_path(dir, "selected.txt"),
                      cands[static_cast<std::size_t>(chosen)].name + "\n");
    manifest.record("select " + cands[static_cast<std::size_t>(chosen)].name);
    const TrainedCandidate& best = trained[static_cast<std::size_t>(chosen)];
    for (std::size_t f = 0; f < best.folds.size(); ++f)
      best.folds[f].model.save(
          join_path(dir, "model_fold" + std::to_string(f) + ".txt"));
    write_file_atomic(join_path(dir, "training_log.csv"),
                      training_log_csv(best.logs));
    test_scores = candidate_scores(best, fd.test, fd.test_w, onehot);
  }

  // Optional ERM baseline for relative test-set columns.
  std::optional<TrainedCandidate> baseline;
  if (cfg.get_string("pipeline.baseline", "") == "erm" && objective != "erm") {
    TrainConfig tc = base_tc;
    tc.objective = Objective::kErm;
    tc.lambda = 0.0;
    baseline = train_candidate(fd, tc, "baseline_erm", onehot,
                               SelectionCriterion::kPooledLogLoss);
    manifest.record("train baseline_erm");
  }

  EvaluationSpec espec = evaluation_spec_from(cfg, args.threads);
  std::optional<std::vector<std::vector<double>>> base_scores;
  if (baseline)
    base_scores = candidate_scores(*baseline, fd.test, fd.test_w, onehot);
  MetricReport report =
      evaluate_models(fd.test, test_scores, fd.test_w, espec,
                      base_scores ? &*base_scores : nullptr);
  write_file_atomic(join_path(dir, "metrics.csv"), report.to_csv());
  write_file_atomic(join_path(dir, "metrics.txt"), report.to_text());
  manifest.record("evaluate");

  // Committee scores (mean over fold models) for the decision curves.
  std::vector<double> mean_scores(fd.test.size(), 0.0);
  for (const auto& s : test_scores)
    for (std::size_t i = 0; i < s.size(); ++i) mean_scores[i] += s[i];
  for (double& s : mean_scores) s /= static_cast<double>(test_scores.size());
  DecisionCurveSpec dspec = dca_spec_from(cfg);
  write_file_atomic(join_path(dir, "decision_curve.csv"),
                    decision_curves_csv(fd.test, mean_scores, fd.test_w, dspec));
  manifest.record("dca");
  std::cout << "pipeline artifacts written to " << dir << "\n";
  return kExitOk;
}

int cmd_evaluate(const CommonArgs& args) {
  KeyValueConfig cfg = load_config(args);
  std::string dir = out_dir(cfg);
  Cohort cohort = load_or_synth(cfg);
  WeightVector weights = weights_from_config(cfg, cohort, "eval");
  bool onehot = cfg.get_bool("train.group_onehot", true);
  Dataset ds = Dataset::from(cohort, weights, onehot);

  auto score_files = [&](const std::string& key) {
    std::vector<std::vector<double>> out;
    for (const std::string& path : cfg.get_list(key)) {
      RiskModel model = RiskModel::load(path);
      Eigen::VectorXd s = model.score(ds.X);
      out.emplace_back(s.data(), s.data() + s.size());
    }
    return out;
  };
  std::vector<std::vector<double>> scores = score_files("eval.models");
  std::optional<std::vector<std::vector<double>>> baseline;
  if (cfg.has("eval.baseline_models")) baseline = score_files("eval.baseline_models");

  EvaluationSpec espec = evaluation_spec_from(cfg, args.threads);
  MetricReport report = evaluate_models(cohort, scores, weights, espec,
                                        baseline ? &*baseline : nullptr);
  write_file_atomic(join_path(dir, "metrics.csv"), report.to_csv());
  write_file_atomic(join_path(dir, "metrics.txt"), report.to_text());
  int undefined = 0;
  for (const MetricRow& r : report.rows)
    if (!r.defined) ++undefined;
  if (undefined)
    std::cerr << "warning: " << undefined
              << " metric rows undefined (marked NA)\n";
  std::cout << "metrics written to " << dir << "\n";
  return kExitOk;
}

int cmd_dca(const CommonArgs& args) {
  KeyValueConfig cfg = load_config(args);
  std::string dir = out_dir(cfg);
  Cohort cohort = load_or_synth(cfg);
  WeightVector weights = weights_from_config(cfg, cohort, "dca");
  bool onehot = cfg.get_bool("train.group_onehot", true);
  Dataset ds = Dataset::from(cohort, weights, onehot);
  RiskModel model = RiskModel::load(cfg.get_string("dca.model"));
  Eigen::VectorXd s = model.score(ds.X);
  std::vector<double> scores(s.data(), s.data() + s.size());
  DecisionCurveSpec spec = dca_spec_from(cfg);
  write_file_atomic(join_path(dir, "decision_curve.csv"),
                    decision_curves_csv(cohort, scores, weights, spec));
  std::cout << "decision curves written to " << dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision-analytic evaluation and fairness-aware training "
               "for censored binary outcomes"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "key = value config file");
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->add_option("--out", args.out, "override the output directory");
    sub->add_option("--threads", args.threads, "worker threads")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* simulate = app.add_subcommand("simulate", "analytic study");
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  CLI::App* train = app.add_subcommand("train", "fit models on one objective");
  CLI::App* pipeline =
      app.add_subcommand("pipeline", "cohort to metrics, end to end");
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "metric report for saved models");
  CLI::App* dca = app.add_subcommand("dca", "decision curves for a model");
  for (CLI::App* sub : {simulate, synth, train, pipeline, evaluate, dca})
    add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(args);
    if (synth->parsed()) return cmd_synth(args);
    if (train->parsed()) return cmd_train(args);
    if (pipeline->parsed()) return cmd_pipeline(args);
    if (evaluate->parsed()) return cmd_evaluate(args);
    if (dca->parsed()) return cmd_dca(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
