// Gradient-based training of risk models under weighted ERM,
// fairness-regularized objectives (MMD and surrogate metric parity), and
// group distributionally robust optimization.
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "riskdca/censoring.hpp"
#include "riskdca/cohort.hpp"
#include "riskdca/rng.hpp"

namespace riskdca {

enum class Activation { kRelu, kTanh };

struct ModelArch {
  std::vector<int> hidden;  // empty = logistic regression
  Activation activation = Activation::kRelu;
  double dropout = 0.0;  // applied to hidden activations in training mode
};

// Score model f(x) = sigmoid(g(x)) with g either linear or a small
// feed-forward network. Evaluation mode is deterministic; dropout draws
// only happen in training-mode forward passes.
class RiskModel {
 public:
  RiskModel(const ModelArch& arch, int input_dim, std::uint64_t init_seed);

  int input_dim() const { return input_dim_; }
  const ModelArch& arch() const { return arch_; }
  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }

  // Deterministic scores in (0,1); rows of X are samples.
  Eigen::VectorXd score(const Eigen::MatrixXd& X) const;

  struct Forward {
    Eigen::VectorXd logits;
    Eigen::VectorXd scores;
    std::vector<Eigen::MatrixXd> activations;  // layer inputs, col per sample
    std::vector<Eigen::MatrixXd> preact;
    std::vector<Eigen::MatrixXd> dropout_mask;  // scaled keep masks
  };

  // train_mode enables dropout, drawing masks from `rng`.
  Forward forward(const Eigen::MatrixXd& X, bool train_mode, Rng* rng) const;

  // Gradient of sum_i dlogit[i] * logit_i with respect to the parameters.
  Eigen::VectorXd backward(const Forward& f, const Eigen::VectorXd& dlogit) const;

  std::string serialize() const;
  static RiskModel deserialize(const std::string& text);
  void save(const std::string& path) const;
  static RiskModel load(const std::string& path);

 private:
  ModelArch arch_;
  int input_dim_;
  std::vector<int> layer_sizes_;  // input, hidden..., 1
  Eigen::VectorXd theta_;

  std::pair<Eigen::Map<const Eigen::MatrixXd>, Eigen::Map<const Eigen::VectorXd>>
  layer(int l) const;
  int layer_offset(int l) const;
};

// Dense training view of a cohort: composite outcomes at the horizon,
// weights, group ids, and features (optionally with group one-hots
// appended so the model can represent group-specific risk).
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;  // composite outcome, 0 where censored
  Eigen::VectorXd w;  // nonnegative; 0 where censored
  std::vector<int> group;
  int n_groups = 0;

  static Dataset from(const Cohort& cohort, const WeightVector& weights,
                      bool group_onehot = true);
  std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
};

Dataset dataset_subset(const Dataset& data, std::span<const int> idx);

enum class SurrogateKind { kStep, kHinge, kSoftplus, kSigmoid };

// step(z) = 1[z>0]; hinge(z) = max(0, 1+z);
// softplus(z) = log(1+exp(z))/log 2; sigmoid(z) = 1/(1+exp(-z)).
double surrogate(SurrogateKind kind, double z);
double surrogate_grad(SurrogateKind kind, double z);
SurrogateKind surrogate_from_name(const std::string& name);

struct PenaltyValue {
  double value = 0.0;
  Eigen::VectorXd dscore;  // gradient with respect to the scores
  int skipped_cells = 0;   // empty (group, outcome) cells in this batch
};

// Weighted all-pairs V-statistic MMD between each group's outcome-
// conditioned score distribution and the population's, averaged per the
// regularizer definition; kernel k(z,z') = exp(-gamma |z - z'|). When
// cells are empty the outer average renormalizes over live cells.
// `cell_average` divides by 2K instead of K.
PenaltyValue mmd_penalty_grad(std::span<const double> scores,
                              std::span<const int> y,
                              std::span<const int> group,
                              std::span<const double> weights, int n_groups,
                              double gamma, bool cell_average = false);
double mmd_penalty(std::span<const double> scores, std::span<const int> y,
                   std::span<const int> group, std::span<const double> weights,
                   int n_groups, double gamma, bool cell_average = false);

struct ParityMetricSpec {
  enum class Kind { kTpr, kFpr, kAuc, kLogLoss } kind = Kind::kTpr;
  double threshold = 0.0;  // used by TPR / FPR
};

// Sum over metrics and groups of squared gaps between the group and
// population relaxed metrics; threshold metrics use the surrogate.
PenaltyValue parity_penalty_grad(std::span<const double> scores,
                                 std::span<const int> y,
                                 std::span<const int> group,
                                 std::span<const double> weights, int n_groups,
                                 const std::vector<ParityMetricSpec>& metrics,
                                 SurrogateKind kind);
double parity_penalty(std::span<const double> scores, std::span<const int> y,
                      std::span<const int> group,
                      std::span<const double> weights, int n_groups,
                      const std::vector<ParityMetricSpec>& metrics,
                      SurrogateKind kind);

struct DROState {
  Eigen::VectorXd lambda;  // simplex weights over groups

  static DROState uniform(int n_groups);
};

// Exponentiated update lambda_k <- lambda_k exp(eta g_k) / sum_j lambda_j
// exp(eta g_j), stabilized by max subtraction. NaN metrics freeze the
// corresponding group's multiplier for this step (factor 1).
DROState dro_update(const DROState& state, std::span<const double> group_metrics,
                    double eta);

enum class Objective { kErm, kRegMmd, kRegParity, kDroLogLoss, kDroAuc };

struct TrainConfig {
  Objective objective = Objective::kErm;
  ModelArch arch;
  double lambda = 0.0;          // penalty weight
  double eta = 0.1;             // DRO step size
  double gamma = 1.0;           // MMD kernel bandwidth
  SurrogateKind surrogate = SurrogateKind::kSoftplus;
  std::vector<ParityMetricSpec> parity_metrics;
  bool mmd_cell_average = false;
  double learning_rate = 0.1;
  int batch_size = 64;
  int max_epochs = 200;
  int patience = 25;
  bool balanced_sampling = false;
  bool adam = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BatchObjective {
  double value = 0.0;
  Eigen::VectorXd dlogit;  // d value / d logit per sample
  int skipped_cells = 0;
};

// Objective value and its per-sample logit gradient on one batch, for a
// fixed DRO state (`dro_lambda` is required for DRO objectives and
// ignored otherwise). This is the exact assembly a training step uses.
BatchObjective batch_objective(const Eigen::VectorXd& scores,
                               const Dataset& batch, const TrainConfig& config,
                               const Eigen::VectorXd* dro_lambda = nullptr);

// Per-group metric driving the DRO multiplier update on a batch:
// weighted log-loss or 1 - AUC; NaN where a group is absent/undefined.
std::vector<double> dro_group_metrics(const Eigen::VectorXd& scores,
                                      const Dataset& batch, Objective objective);

struct ObjectiveEval {
  double value = 0.0;
  Eigen::VectorXd grad;  // with respect to the model parameters
};

// Full-batch objective and parameter gradient in evaluation mode (no
// dropout draws); the composition of batch_objective with backprop.
ObjectiveEval objective_value_grad(const RiskModel& model, const Dataset& batch,
                                   const TrainConfig& config,
                                   const Eigen::VectorXd* dro_lambda = nullptr);

struct EpochLog {
  int epoch = 0;  // 0 is the initial state before any update
  double train_objective = 0.0;
  double dev_metric = 0.0;
  int worst_group = -1;  // DRO objectives only
};

struct TrainResult {
  RiskModel model;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_dev_metric = 0.0;
  int penalty_cells_skipped = 0;
  Eigen::VectorXd final_dro_lambda;  // empty unless a DRO objective ran
};

// Minibatch gradient descent on the configured objective with early
// stopping on the development metric (log-loss for ERM, penalized loss
// for regularized objectives, worst-case group metric for DRO). Returns
// the best checkpoint. Deterministic given the config seed.
TrainResult train_model(const Dataset& train, const Dataset& dev,
                        const TrainConfig& config);

TrainResult train_erm(const Dataset& train, const Dataset& dev,
                      TrainConfig config);

// Penalized objective (MMD or metric parity per the config's objective).
TrainResult train_regularized(const Dataset& train, const Dataset& dev,
                              const TrainConfig& config);

// Group distributionally robust objective (log-loss or 1-AUC metric).
TrainResult train_dro(const Dataset& train, const Dataset& dev,
                      const TrainConfig& config);

struct StratifiedResult {
  std::vector<std::optional<TrainResult>> per_group;
  std::vector<std::string> errors;  // one message per failed group
};

// Independent ERM per group; groups missing from train or dev record an
// error and leave the slot empty.
StratifiedResult train_stratified(const Dataset& train, const Dataset& dev,
                                  const TrainConfig& config);

// Routes each row to its group's model.
Eigen::VectorXd score_stratified(const std::vector<const RiskModel*>& models,
                                 const Dataset& data);

struct Candidate {
  std::string name;
  double lambda = 0.0;
  std::vector<double> fold_metrics;  // validation metric per fold
};

enum class SelectionCriterion { kPooledLogLoss, kWorstCaseAuc, kWorstCaseLogLoss };

// Averages the fold metrics and picks the optimum (max for AUC, min
// otherwise); ties break toward the smallest lambda, then the
// lexicographically smallest name. Returns the candidate index.
int select_model(const std::vector<Candidate>& candidates,
                 SelectionCriterion criterion);

}  // namespace riskdca
