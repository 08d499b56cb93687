#include "riskdca/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "riskdca/errors.hpp"
#include "riskdca/io.hpp"
#include "riskdca/metrics.hpp"

namespace riskdca {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

constexpr double kLog2 = 0.6931471805599453094172321214581766;

}  // namespace

// ---------------------------------------------------------------------------
// RiskModel

RiskModel::RiskModel(const ModelArch& arch, int input_dim,
                     std::uint64_t init_seed)
    : arch_(arch), input_dim_(input_dim) {
  if (input_dim < 1) throw ConfigError("model input dimension must be >= 1");
  for (int h : arch.hidden)
    if (h < 1) throw ConfigError("hidden layer sizes must be >= 1");
  if (arch.dropout < 0.0 || arch.dropout >= 1.0)
    throw ConfigError("dropout probability must lie in [0,1)");
  layer_sizes_.push_back(input_dim);
  for (int h : arch.hidden) layer_sizes_.push_back(h);
  layer_sizes_.push_back(1);

  int total = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l)
    total += layer_sizes_[l + 1] * layer_sizes_[l] + layer_sizes_[l + 1];
  theta_ = Eigen::VectorXd::Zero(total);

  // Linear models start at zero; networks draw scaled normal weights.
  if (!arch.hidden.empty()) {
    Rng rng = Rng::stream(init_seed, 0x1217);
    int off = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
      int fan_in = layer_sizes_[l];
      int n_w = layer_sizes_[l + 1] * fan_in;
      double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (int i = 0; i < n_w; ++i) theta_[off + i] = scale * rng.normal();
      off += n_w + layer_sizes_[l + 1];  // biases stay zero
    }
  }
}

int RiskModel::layer_offset(int l) const {
  int off = 0;
  for (int k = 0; k < l; ++k)
    off += layer_sizes_[k + 1] * layer_sizes_[k] + layer_sizes_[k + 1];
  return off;
}

std::pair<Eigen::Map<const Eigen::MatrixXd>, Eigen::Map<const Eigen::VectorXd>>
RiskModel::layer(int l) const {
  int rows = layer_sizes_[l + 1];
  int cols = layer_sizes_[l];
  const double* base = theta_.data() + layer_offset(l);
  return {Eigen::Map<const Eigen::MatrixXd>(base, rows, cols),
          Eigen::Map<const Eigen::VectorXd>(base + rows * cols, rows)};
}

RiskModel::Forward RiskModel::forward(const Eigen::MatrixXd& X, bool train_mode,
                                      Rng* rng) const {
  if (X.cols() != input_dim_)
    throw DomainError("feature matrix width does not match the model");
  const int n = static_cast<int>(X.rows());
  const int n_layers = static_cast<int>(layer_sizes_.size()) - 1;
  Forward f;
  f.activations.resize(n_layers + 1);
  f.preact.resize(n_layers);
  f.dropout_mask.resize(std::max(0, n_layers - 1));
  f.activations[0] = X.transpose();

  bool use_dropout = train_mode && arch_.dropout > 0.0;
  double keep = 1.0 - arch_.dropout;
  for (int l = 0; l < n_layers; ++l) {
    auto [W, b] = layer(l);
    Eigen::MatrixXd Z = W * f.activations[l];
    Z.colwise() += b;
    f.preact[l] = Z;
    if (l + 1 < n_layers) {
      Eigen::MatrixXd A =
          arch_.activation == Activation::kRelu
              ? Z.cwiseMax(0.0).eval()
              : Z.array().tanh().matrix().eval();
      if (use_dropout) {
        if (!rng) throw TrainingError("dropout requires an RNG in training mode");
        Eigen::MatrixXd mask(A.rows(), A.cols());
        for (int j = 0; j < A.cols(); ++j)
          for (int i = 0; i < A.rows(); ++i)
            mask(i, j) = rng->uniform01() < keep ? 1.0 / keep : 0.0;
        A = A.cwiseProduct(mask);
        f.dropout_mask[l] = std::move(mask);
      }
      f.activations[l + 1] = std::move(A);
    } else {
      f.activations[l + 1] = Z;
    }
  }
  f.logits = f.preact.back().row(0).transpose();
  f.scores.resize(n);
  for (int i = 0; i < n; ++i) f.scores[i] = sigmoid(f.logits[i]);
  return f;
}

Eigen::VectorXd RiskModel::score(const Eigen::MatrixXd& X) const {
  return forward(X, false, nullptr).scores;
}

Eigen::VectorXd RiskModel::backward(const Forward& f,
                                    const Eigen::VectorXd& dlogit) const {
  const int n_layers = static_cast<int>(layer_sizes_.size()) - 1;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta_.size());
  Eigen::MatrixXd G = dlogit.transpose();  // dL/dZ for the top layer
  for (int l = n_layers - 1; l >= 0; --l) {
    int rows = layer_sizes_[l + 1];
    int cols = layer_sizes_[l];
    double* base = grad.data() + layer_offset(l);
    Eigen::Map<Eigen::MatrixXd> dW(base, rows, cols);
    Eigen::Map<Eigen::VectorXd> db(base + rows * cols, rows);
    dW = G * f.activations[l].transpose();
    db = G.rowwise().sum();
    if (l > 0) {
      auto [W, b] = layer(l);
      Eigen::MatrixXd dA = W.transpose() * G;
      if (f.dropout_mask.size() > static_cast<std::size_t>(l - 1) &&
          f.dropout_mask[l - 1].size() > 0)
        dA = dA.cwiseProduct(f.dropout_mask[l - 1]);
      if (arch_.activation == Activation::kRelu) {
        G = dA.cwiseProduct(
            (f.preact[l - 1].array() > 0.0).cast<double>().matrix());
      } else {
        Eigen::MatrixXd t = f.preact[l - 1].array().tanh().matrix();
        G = dA.cwiseProduct((1.0 - t.array().square()).matrix());
      }
    }
  }
  return grad;
}

std::string RiskModel::serialize() const {
  std::ostringstream out;
  out << "risk_model v1\n";
  out << "input_dim " << input_dim_ << "\n";
  out << "hidden";
  for (int h : arch_.hidden) out << ' ' << h;
  out << "\n";
  out << "activation " << (arch_.activation == Activation::kRelu ? "relu" : "tanh")
      << "\n";
  out << "dropout " << format_double(arch_.dropout) << "\n";
  out << "params " << theta_.size() << "\n";
  for (Eigen::Index i = 0; i < theta_.size(); ++i)
    out << format_double(theta_[i]) << "\n";
  return out.str();
}

RiskModel RiskModel::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string tok, version;
  in >> tok >> version;
  if (tok != "risk_model" || version != "v1")
    throw ParseError("not a risk model file");
  ModelArch arch;
  int input_dim = 0;
  in >> tok >> input_dim;
  std::string line;
  std::getline(in, line);  // rest of input_dim line
  std::getline(in, line);  // hidden line
  {
    std::istringstream hs(line);
    hs >> tok;
    int h;
    while (hs >> h) arch.hidden.push_back(h);
  }
  std::string act;
  in >> tok >> act;
  arch.activation = act == "tanh" ? Activation::kTanh : Activation::kRelu;
  in >> tok >> arch.dropout;
  long long n_params = 0;
  in >> tok >> n_params;
  RiskModel model(arch, input_dim, 0);
  if (model.theta_.size() != n_params)
    throw ParseError("risk model parameter count mismatch");
  for (long long i = 0; i < n_params; ++i) in >> model.theta_[i];
  if (!in) throw ParseError("truncated risk model file");
  return model;
}

void RiskModel::save(const std::string& path) const {
  write_file_atomic(path, serialize());
}

RiskModel RiskModel::load(const std::string& path) {
  return deserialize(read_file(path));
}

// ---------------------------------------------------------------------------
// Dataset

Dataset Dataset::from(const Cohort& cohort, const WeightVector& weights,
                      bool group_onehot) {
  if (weights.weights.size() != cohort.size())
    throw DomainError("weight vector does not match the cohort");
  Dataset d;
  const int m = cohort.feature_dim;
  const int k = cohort.n_groups();
  const int width = m + (group_onehot ? k : 0);
  d.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cohort.size()), width);
  d.y.resize(static_cast<Eigen::Index>(cohort.size()));
  d.w.resize(static_cast<Eigen::Index>(cohort.size()));
  d.n_groups = k;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const Sample& s = cohort.samples[i];
    for (int j = 0; j < m; ++j) d.X(static_cast<Eigen::Index>(i), j) = s.features[j];
    if (group_onehot) d.X(static_cast<Eigen::Index>(i), m + s.group) = 1.0;
    CompositeOutcome c = derive_composite_outcome(s.followup_time,
                                                  s.event_indicator,
                                                  cohort.horizon);
    d.y[static_cast<Eigen::Index>(i)] = c.y;
    d.w[static_cast<Eigen::Index>(i)] = weights.weights[i];
    d.group.push_back(s.group);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Surrogates

double surrogate(SurrogateKind kind, double z) {
  switch (kind) {
    case SurrogateKind::kStep:
      return z > 0.0 ? 1.0 : 0.0;
    case SurrogateKind::kHinge:
      return std::max(0.0, 1.0 + z);
    case SurrogateKind::kSoftplus:
      // log(1+exp(z))/log 2, overflow-safe in both tails
      return (z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) /
             kLog2;
    case SurrogateKind::kSigmoid:
      return sigmoid(z);
  }
  throw DomainError("unreachable");
}

double surrogate_grad(SurrogateKind kind, double z) {
  switch (kind) {
    case SurrogateKind::kStep:
      return 0.0;
    case SurrogateKind::kHinge:
      return z > -1.0 ? 1.0 : 0.0;
    case SurrogateKind::kSoftplus:
      return sigmoid(z) / kLog2;
    case SurrogateKind::kSigmoid: {
      double s = sigmoid(z);
      return s * (1.0 - s);
    }
  }
  throw DomainError("unreachable");
}

SurrogateKind surrogate_from_name(const std::string& name) {
  if (name == "step") return SurrogateKind::kStep;
  if (name == "hinge") return SurrogateKind::kHinge;
  if (name == "softplus") return SurrogateKind::kSoftplus;
  if (name == "sigmoid") return SurrogateKind::kSigmoid;
  throw ConfigError("unknown surrogate: " + name);
}

// ---------------------------------------------------------------------------
// MMD penalty

namespace {

// All-pairs sums over the Laplacian kernel exp(-gamma |z_i - z_j|) in
// O(n log n): with scores sorted, the weighted row sum at a query point t
// splits into exp(-gamma t) * sum_{z<t} w exp(gamma z) + sum_{z==t} w +
// exp(gamma t) * sum_{z>t} w exp(-gamma z). Tied pairs (including the
// diagonal) carry kernel 1 and derivative 0, matching the pairwise
// subgradient convention.
struct SortedKernelSet {
  std::vector<double> z;        // ascending scores
  std::vector<double> w;        // aligned weights
  std::vector<double> up;       // prefix sums of w * exp(gamma z)
  std::vector<double> down;     // suffix sums of w * exp(-gamma z)
  double w_total = 0.0;
  double gamma = 1.0;

  SortedKernelSet(std::span<const double> scores,
                  std::span<const double> weights,
                  const std::vector<int>& members, double gamma_)
      : gamma(gamma_) {
    std::vector<int> order = members;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return scores[static_cast<std::size_t>(a)] <
             scores[static_cast<std::size_t>(b)];
    });
    z.reserve(order.size());
    w.reserve(order.size());
    for (int i : order) {
      z.push_back(scores[static_cast<std::size_t>(i)]);
      w.push_back(weights[static_cast<std::size_t>(i)]);
      w_total += weights[static_cast<std::size_t>(i)];
    }
    up.resize(z.size() + 1, 0.0);
    down.resize(z.size() + 1, 0.0);
    for (std::size_t k = 0; k < z.size(); ++k)
      up[k + 1] = up[k] + w[k] * std::exp(gamma * z[k]);
    for (std::size_t k = z.size(); k-- > 0;)
      down[k] = down[k + 1] + w[k] * std::exp(-gamma * z[k]);
  }

  struct RowSum {
    double value;  // sum_j w_j k(t, z_j)
    double dt;     // d value / d t
  };

  RowSum row(double t) const {
    auto lo = std::lower_bound(z.begin(), z.end(), t) - z.begin();
    auto hi = std::upper_bound(z.begin(), z.end(), t) - z.begin();
    double tied = 0.0;
    for (auto k = lo; k < hi; ++k) tied += w[static_cast<std::size_t>(k)];
    double below = std::exp(-gamma * t) * up[static_cast<std::size_t>(lo)];
    double above = std::exp(gamma * t) * down[static_cast<std::size_t>(hi)];
    return {below + tied + above, gamma * (above - below)};
  }
};

}  // namespace

PenaltyValue mmd_penalty_grad(std::span<const double> scores,
                              std::span<const int> y,
                              std::span<const int> group,
                              std::span<const double> weights, int n_groups,
                              double gamma, bool cell_average) {
  if (gamma <= 0.0) throw DomainError("MMD kernel bandwidth must be > 0");
  const std::size_t n = scores.size();
  PenaltyValue out;
  out.dscore = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));

  struct CellTerm {
    std::vector<int> a;  // group & outcome cell
    std::vector<int> b;  // outcome slice of the population
  };
  std::vector<CellTerm> live;
  for (int y_val = 0; y_val <= 1; ++y_val) {
    std::vector<int> pop;
    for (std::size_t i = 0; i < n; ++i)
      if (y[i] == y_val && weights[i] > 0.0) pop.push_back(static_cast<int>(i));
    for (int k = 0; k < n_groups; ++k) {
      std::vector<int> cell;
      for (int i : pop)
        if (group[static_cast<std::size_t>(i)] == k) cell.push_back(i);
      if (cell.empty()) {
        ++out.skipped_cells;
        continue;
      }
      live.push_back({std::move(cell), pop});
    }
  }
  if (live.empty()) return out;

  // Renormalize the outer average over live cells; with every cell live
  // this reduces to 1/K (or 1/2K with cell_average).
  double norm = (cell_average ? 1.0 : 2.0) / static_cast<double>(live.size());

  for (const CellTerm& term : live) {
    const std::vector<int>& A = term.a;
    const std::vector<int>& B = term.b;
    SortedKernelSet set_a(scores, weights, A, gamma);
    SortedKernelSet set_b(scores, weights, B, gamma);
    const double wa = set_a.w_total;
    const double wb = set_b.w_total;

    double s_aa = 0.0, s_ab = 0.0, s_bb = 0.0;
    for (int t : A) {
      double zt = scores[static_cast<std::size_t>(t)];
      double wt = weights[static_cast<std::size_t>(t)];
      s_aa += wt * set_a.row(zt).value;
      s_ab += wt * set_b.row(zt).value;
    }
    for (int t : B) {
      double zt = scores[static_cast<std::size_t>(t)];
      s_bb += weights[static_cast<std::size_t>(t)] * set_b.row(zt).value;
    }
    double d_hat = s_aa / (wa * wa) - 2.0 * s_ab / (wa * wb) + s_bb / (wb * wb);
    out.value += norm * d_hat;

    // dD/ds_t: quadratic forms contribute twice their signed row sums;
    // the cross term splits by the roles t plays in A and B.
    for (int t : A) {
      double zt = scores[static_cast<std::size_t>(t)];
      double wt = weights[static_cast<std::size_t>(t)];
      out.dscore[t] += norm * 2.0 * wt * set_a.row(zt).dt / (wa * wa);
      out.dscore[t] -= norm * 2.0 * wt * set_b.row(zt).dt / (wa * wb);
    }
    for (int t : B) {
      double zt = scores[static_cast<std::size_t>(t)];
      double wt = weights[static_cast<std::size_t>(t)];
      out.dscore[t] -= norm * 2.0 * wt * set_a.row(zt).dt / (wa * wb);
      out.dscore[t] += norm * 2.0 * wt * set_b.row(zt).dt / (wb * wb);
    }
  }
  return out;
}

double mmd_penalty(std::span<const double> scores, std::span<const int> y,
                   std::span<const int> group, std::span<const double> weights,
                   int n_groups, double gamma, bool cell_average) {
  return mmd_penalty_grad(scores, y, group, weights, n_groups, gamma,
                          cell_average)
      .value;
}

// ---------------------------------------------------------------------------
// Metric parity penalty

namespace {

struct RelaxedMetric {
  double value = 0.0;
  bool defined = false;
  std::vector<std::pair<int, double>> grad;  // sparse d value / d score
};

RelaxedMetric relaxed_rate(std::span<const double> scores,
                           std::span<const int> y,
                           std::span<const double> weights,
                           const std::vector<int>& idx, int target,
                           double threshold, SurrogateKind kind) {
  RelaxedMetric m;
  double w_class = 0.0;
  for (int i : idx)
    if (y[i] == target) w_class += weights[i];
  if (w_class <= 0.0) return m;
  m.defined = true;
  for (int i : idx) {
    if (y[i] != target) continue;
    m.value += weights[i] * surrogate(kind, scores[i] - threshold) / w_class;
    double g = weights[i] * surrogate_grad(kind, scores[i] - threshold) / w_class;
    if (g != 0.0) m.grad.push_back({i, g});
  }
  return m;
}

RelaxedMetric relaxed_auc(std::span<const double> scores,
                          std::span<const int> y,
                          std::span<const double> weights,
                          const std::vector<int>& idx, SurrogateKind kind) {
  RelaxedMetric m;
  std::vector<int> pos, neg;
  double w_pos = 0.0, w_neg = 0.0;
  for (int i : idx) {
    if (weights[i] <= 0.0) continue;
    if (y[i]) {
      pos.push_back(i);
      w_pos += weights[i];
    } else {
      neg.push_back(i);
      w_neg += weights[i];
    }
  }
  if (w_pos <= 0.0 || w_neg <= 0.0) return m;
  m.defined = true;
  std::vector<double> acc(scores.size(), 0.0);
  for (int i : pos) {
    for (int j : neg) {
      double pair_w = weights[i] * weights[j] / (w_pos * w_neg);
      m.value += pair_w * surrogate(kind, scores[i] - scores[j]);
      double g = pair_w * surrogate_grad(kind, scores[i] - scores[j]);
      acc[i] += g;
      acc[j] -= g;
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i)
    if (acc[i] != 0.0) m.grad.push_back({static_cast<int>(i), acc[i]});
  return m;
}

RelaxedMetric relaxed_log_loss(std::span<const double> scores,
                               std::span<const int> y,
                               std::span<const double> weights,
                               const std::vector<int>& idx) {
  RelaxedMetric m;
  double w_total = 0.0;
  for (int i : idx) w_total += weights[i];
  if (w_total <= 0.0) return m;
  m.defined = true;
  for (int i : idx) {
    double s = clip_probability(scores[i]);
    m.value += weights[i] * (y[i] ? -std::log(s) : -std::log(1.0 - s)) / w_total;
    double g = weights[i] * (s - y[i]) / (s * (1.0 - s)) / w_total;
    m.grad.push_back({i, g});
  }
  return m;
}

RelaxedMetric eval_relaxed(std::span<const double> scores,
                           std::span<const int> y,
                           std::span<const double> weights,
                           const std::vector<int>& idx,
                           const ParityMetricSpec& spec, SurrogateKind kind) {
  switch (spec.kind) {
    case ParityMetricSpec::Kind::kTpr:
      return relaxed_rate(scores, y, weights, idx, 1, spec.threshold, kind);
    case ParityMetricSpec::Kind::kFpr:
      return relaxed_rate(scores, y, weights, idx, 0, spec.threshold, kind);
    case ParityMetricSpec::Kind::kAuc:
      return relaxed_auc(scores, y, weights, idx, kind);
    case ParityMetricSpec::Kind::kLogLoss:
      return relaxed_log_loss(scores, y, weights, idx);
  }
  throw DomainError("unreachable");
}

}  // namespace

PenaltyValue parity_penalty_grad(std::span<const double> scores,
                                 std::span<const int> y,
                                 std::span<const int> group,
                                 std::span<const double> weights, int n_groups,
                                 const std::vector<ParityMetricSpec>& metrics,
                                 SurrogateKind kind) {
  const std::size_t n = scores.size();
  PenaltyValue out;
  out.dscore = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::vector<int>> by_group(static_cast<std::size_t>(n_groups));
  for (std::size_t i = 0; i < n; ++i)
    by_group[static_cast<std::size_t>(group[i])].push_back(static_cast<int>(i));

  for (const ParityMetricSpec& spec : metrics) {
    RelaxedMetric overall = eval_relaxed(scores, y, weights, all, spec, kind);
    if (!overall.defined) {
      out.skipped_cells += n_groups;
      continue;
    }
    for (int k = 0; k < n_groups; ++k) {
      RelaxedMetric gm =
          eval_relaxed(scores, y, weights, by_group[static_cast<std::size_t>(k)],
                       spec, kind);
      if (!gm.defined) {
        ++out.skipped_cells;
        continue;
      }
      double gap = gm.value - overall.value;
      out.value += gap * gap;
      for (const auto& [i, g] : gm.grad) out.dscore[i] += 2.0 * gap * g;
      for (const auto& [i, g] : overall.grad) out.dscore[i] -= 2.0 * gap * g;
    }
  }
  return out;
}

double parity_penalty(std::span<const double> scores, std::span<const int> y,
                      std::span<const int> group,
                      std::span<const double> weights, int n_groups,
                      const std::vector<ParityMetricSpec>& metrics,
                      SurrogateKind kind) {
  return parity_penalty_grad(scores, y, group, weights, n_groups, metrics, kind)
      .value;
}

// ---------------------------------------------------------------------------
// DRO

DROState DROState::uniform(int n_groups) {
  if (n_groups < 1) throw DomainError("DRO needs at least one group");
  DROState s;
  s.lambda =
      Eigen::VectorXd::Constant(n_groups, 1.0 / static_cast<double>(n_groups));
  return s;
}

DROState dro_update(const DROState& state, std::span<const double> group_metrics,
                    double eta) {
  if (static_cast<Eigen::Index>(group_metrics.size()) != state.lambda.size())
    throw DomainError("DRO metric vector length mismatch");
  if (eta < 0.0) throw DomainError("DRO step size must be >= 0");
  const Eigen::Index k = state.lambda.size();
  // Frozen (NaN) groups keep exponent 0; subtract the running max for
  // numerical stability (the common factor cancels in the ratio).
  double max_exp = 0.0;
  for (Eigen::Index i = 0; i < k; ++i)
    if (std::isfinite(group_metrics[i]))
      max_exp = std::max(max_exp, eta * group_metrics[i]);
  DROState next;
  next.lambda.resize(k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    double e = std::isfinite(group_metrics[i]) ? eta * group_metrics[i] : 0.0;
    next.lambda[i] = state.lambda[i] * std::exp(e - max_exp);
    total += next.lambda[i];
  }
  if (total <= 0.0) throw TrainingError("DRO update produced zero mass");
  next.lambda /= total;
  return next;
}

// ---------------------------------------------------------------------------
// Trainer

void TrainConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (eta < 0.0) throw ConfigError("eta must be >= 0");
  if (gamma <= 0.0) throw ConfigError("gamma must be > 0");
  if (batch_size < 2) throw ConfigError("batch size must be >= 2");
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be > 0");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (objective == Objective::kRegParity && parity_metrics.empty())
    throw ConfigError("parity objective requires at least one metric");
}

Dataset dataset_subset(const Dataset& data, std::span<const int> idx) {
  Dataset b;
  const auto n = static_cast<Eigen::Index>(idx.size());
  b.X.resize(n, data.X.cols());
  b.y.resize(n);
  b.w.resize(n);
  b.n_groups = data.n_groups;
  for (Eigen::Index r = 0; r < n; ++r) {
    int i = idx[static_cast<std::size_t>(r)];
    b.X.row(r) = data.X.row(i);
    b.y[r] = data.y[i];
    b.w[r] = data.w[i];
    b.group.push_back(data.group[static_cast<std::size_t>(i)]);
  }
  return b;
}

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<int> y_int(const Dataset& d) {
  std::vector<int> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    out[i] = static_cast<int>(d.y[static_cast<Eigen::Index>(i)]);
  return out;
}

}  // namespace

std::vector<double> dro_group_metrics(const Eigen::VectorXd& scores,
                                      const Dataset& batch,
                                      Objective objective) {
  const int n_groups = batch.n_groups;
  std::vector<double> out(static_cast<std::size_t>(n_groups),
                          std::numeric_limits<double>::quiet_NaN());
  if (objective == Objective::kDroLogLoss) {
    std::vector<double> w_sum(static_cast<std::size_t>(n_groups), 0.0);
    std::vector<double> acc(static_cast<std::size_t>(n_groups), 0.0);
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      auto k = static_cast<std::size_t>(batch.group[static_cast<std::size_t>(i)]);
      double s = clip_probability(scores[i]);
      w_sum[k] += batch.w[i];
      acc[k] += batch.w[i] * (batch.y[i] > 0.5 ? -std::log(s) : -std::log(1.0 - s));
    }
    for (std::size_t k = 0; k < acc.size(); ++k)
      if (w_sum[k] > 0.0) out[k] = acc[k] / w_sum[k];
    return out;
  }
  for (int k = 0; k < n_groups; ++k) {
    std::vector<double> s, w;
    std::vector<int> y;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      if (batch.group[static_cast<std::size_t>(i)] != k) continue;
      s.push_back(scores[i]);
      y.push_back(batch.y[i] > 0.5 ? 1 : 0);
      w.push_back(batch.w[i]);
    }
    if (s.empty()) continue;
    try {
      out[static_cast<std::size_t>(k)] = 1.0 - ipcw_auc(s, y, w);
    } catch (const MetricUndefined&) {
    }
  }
  return out;
}

BatchObjective batch_objective(const Eigen::VectorXd& scores,
                               const Dataset& batch, const TrainConfig& cfg,
                               const Eigen::VectorXd* dro_lambda) {
  BatchObjective out;
  out.dlogit = Eigen::VectorXd::Zero(scores.size());
  const bool is_dro = cfg.objective == Objective::kDroLogLoss ||
                      cfg.objective == Objective::kDroAuc;

  if (is_dro) {
    if (!dro_lambda || dro_lambda->size() != batch.n_groups)
      throw TrainingError("DRO objective requires multipliers per group");
    // sum_k lambda_k * (group-weighted mean cross-entropy)
    std::vector<double> w_sum(static_cast<std::size_t>(batch.n_groups), 0.0);
    std::vector<double> acc(static_cast<std::size_t>(batch.n_groups), 0.0);
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      auto k = static_cast<std::size_t>(batch.group[static_cast<std::size_t>(i)]);
      double s = clip_probability(scores[i]);
      w_sum[k] += batch.w[i];
      acc[k] += batch.w[i] * (batch.y[i] > 0.5 ? -std::log(s) : -std::log(1.0 - s));
    }
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      auto k = static_cast<std::size_t>(batch.group[static_cast<std::size_t>(i)]);
      if (w_sum[k] <= 0.0) continue;
      out.dlogit[i] = (*dro_lambda)[static_cast<Eigen::Index>(k)] *
                      ((batch.w[i] / w_sum[k]) * (scores[i] - batch.y[i]));
    }
    for (std::size_t k = 0; k < acc.size(); ++k)
      if (w_sum[k] > 0.0)
        out.value += (*dro_lambda)[static_cast<Eigen::Index>(k)] *
                     (acc[k] / w_sum[k]);
    return out;
  }

  // Weighted-mean cross-entropy with weights renormalized in the batch.
  double w_total = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) w_total += batch.w[i];
  if (w_total > 0.0) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      double s = clip_probability(scores[i]);
      acc += batch.w[i] * (batch.y[i] > 0.5 ? -std::log(s) : -std::log(1.0 - s));
      out.dlogit[i] = (batch.w[i] / w_total) * (scores[i] - batch.y[i]);
    }
    out.value = acc / w_total;
  }

  const bool has_penalty = (cfg.objective == Objective::kRegMmd ||
                            cfg.objective == Objective::kRegParity) &&
                           cfg.lambda > 0.0;
  if (has_penalty) {
    std::vector<double> s = to_std(scores);
    std::vector<double> w = to_std(batch.w);
    std::vector<int> yi = y_int(batch);
    PenaltyValue pen =
        cfg.objective == Objective::kRegMmd
            ? mmd_penalty_grad(s, yi, batch.group, w, batch.n_groups, cfg.gamma,
                               cfg.mmd_cell_average)
            : parity_penalty_grad(s, yi, batch.group, w, batch.n_groups,
                                  cfg.parity_metrics, cfg.surrogate);
    out.value += cfg.lambda * pen.value;
    out.skipped_cells = pen.skipped_cells;
    for (Eigen::Index i = 0; i < out.dlogit.size(); ++i)
      out.dlogit[i] +=
          cfg.lambda * pen.dscore[i] * scores[i] * (1.0 - scores[i]);
  }
  return out;
}

ObjectiveEval objective_value_grad(const RiskModel& model, const Dataset& batch,
                                   const TrainConfig& cfg,
                                   const Eigen::VectorXd* dro_lambda) {
  RiskModel::Forward f = model.forward(batch.X, false, nullptr);
  BatchObjective obj = batch_objective(f.scores, batch, cfg, dro_lambda);
  ObjectiveEval out;
  out.value = obj.value;
  out.grad = model.backward(f, obj.dlogit);
  return out;
}

namespace {

struct DevMetric {
  double value = 0.0;
  int worst_group = -1;
};

DevMetric dev_metric(const Dataset& dev, const Eigen::VectorXd& scores,
                     const TrainConfig& cfg) {
  std::vector<double> s = to_std(scores);
  std::vector<int> yi = y_int(dev);
  std::vector<double> w = to_std(dev.w);
  DevMetric out;
  switch (cfg.objective) {
    case Objective::kErm:
      out.value = ipcw_log_loss(s, yi, w);
      return out;
    case Objective::kRegMmd: {
      out.value = ipcw_log_loss(s, yi, w);
      if (cfg.lambda > 0.0)
        out.value += cfg.lambda * mmd_penalty(s, yi, dev.group, w, dev.n_groups,
                                              cfg.gamma, cfg.mmd_cell_average);
      return out;
    }
    case Objective::kRegParity: {
      out.value = ipcw_log_loss(s, yi, w);
      if (cfg.lambda > 0.0)
        out.value += cfg.lambda * parity_penalty(s, yi, dev.group, w,
                                                 dev.n_groups,
                                                 cfg.parity_metrics,
                                                 cfg.surrogate);
      return out;
    }
    case Objective::kDroLogLoss:
    case Objective::kDroAuc: {
      double worst = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < dev.n_groups; ++k) {
        std::vector<double> sk, wk;
        std::vector<int> yk;
        for (std::size_t i = 0; i < dev.size(); ++i) {
          if (dev.group[i] != k) continue;
          sk.push_back(s[i]);
          yk.push_back(yi[i]);
          wk.push_back(w[i]);
        }
        if (sk.empty()) continue;
        double v;
        try {
          v = cfg.objective == Objective::kDroLogLoss
                  ? ipcw_log_loss(sk, yk, wk)
                  : 1.0 - ipcw_auc(sk, yk, wk);
        } catch (const MetricUndefined&) {
          continue;
        }
        if (v > worst) {
          worst = v;
          out.worst_group = k;
        }
      }
      if (!std::isfinite(worst))
        throw TrainingError("development worst-case metric undefined");
      out.value = worst;
      return out;
    }
  }
  throw DomainError("unreachable");
}

std::vector<int> epoch_order(const Dataset& train, const TrainConfig& cfg,
                             int epoch) {
  Rng rng = Rng::stream(cfg.seed, 0x0e90c000ULL + static_cast<std::uint64_t>(epoch));
  std::vector<int> order;
  if (!cfg.balanced_sampling) {
    order.resize(train.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    return order;
  }
  // Balanced sampling: cycle groups, drawing uniformly within each.
  std::vector<std::vector<int>> by_group(static_cast<std::size_t>(train.n_groups));
  for (std::size_t i = 0; i < train.size(); ++i)
    by_group[static_cast<std::size_t>(train.group[i])].push_back(
        static_cast<int>(i));
  std::vector<std::size_t> live;
  for (std::size_t k = 0; k < by_group.size(); ++k)
    if (!by_group[k].empty()) live.push_back(k);
  if (live.empty()) throw TrainingError("no training samples");
  order.reserve(train.size());
  for (std::size_t slot = 0; slot < train.size(); ++slot) {
    const std::vector<int>& pool = by_group[live[slot % live.size()]];
    order.push_back(pool[static_cast<std::size_t>(rng.below(pool.size()))]);
  }
  return order;
}

}  // namespace

TrainResult train_model(const Dataset& train, const Dataset& dev,
                        const TrainConfig& cfg) {
  cfg.validate();
  if (train.size() == 0 || dev.size() == 0)
    throw ConfigError("training requires nonempty train and development sets");

  RiskModel model(cfg.arch, static_cast<int>(train.X.cols()), cfg.seed);
  DROState dro = DROState::uniform(std::max(1, train.n_groups));
  const bool is_dro = cfg.objective == Objective::kDroLogLoss ||
                      cfg.objective == Objective::kDroAuc;

  TrainResult result{std::move(model), {}, 0, 0.0, 0, {}};
  Eigen::VectorXd best_params = result.model.params();

  DevMetric initial = dev_metric(dev, result.model.score(dev.X), cfg);
  result.best_dev_metric = initial.value;
  result.best_epoch = 0;
  result.log.push_back({0, 0.0, initial.value, initial.worst_group});

  Eigen::VectorXd adam_m, adam_v;
  if (cfg.adam) {
    adam_m = Eigen::VectorXd::Zero(result.model.params().size());
    adam_v = Eigen::VectorXd::Zero(result.model.params().size());
  }
  long long adam_t = 0;
  int stall = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<int> order = epoch_order(train, cfg, epoch);
    Rng dropout_rng = Rng::stream(cfg.seed, 0xd307000ULL + static_cast<std::uint64_t>(epoch));
    double epoch_objective = 0.0;
    int n_batches = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t stop = std::min(order.size(),
                                  start + static_cast<std::size_t>(cfg.batch_size));
      if (stop - start < 2) break;  // a gradient step needs a real batch
      Dataset b = dataset_subset(
          train, std::span<const int>(order.data() + start, stop - start));
      RiskModel::Forward f = result.model.forward(b.X, true, &dropout_rng);

      if (is_dro) {
        std::vector<double> metric =
            dro_group_metrics(f.scores, b, cfg.objective);
        dro = dro_update(dro, metric, cfg.eta);
      }
      BatchObjective obj = batch_objective(f.scores, b, cfg,
                                           is_dro ? &dro.lambda : nullptr);
      result.penalty_cells_skipped += obj.skipped_cells;
      double objective = obj.value;
      if (!std::isfinite(objective))
        throw TrainingError("objective diverged at epoch " +
                            std::to_string(epoch));

      Eigen::VectorXd grad = result.model.backward(f, obj.dlogit);
      if (cfg.adam) {
        ++adam_t;
        adam_m = 0.9 * adam_m + 0.1 * grad;
        adam_v = 0.999 * adam_v + 0.001 * grad.cwiseProduct(grad);
        double c1 = 1.0 - std::pow(0.9, static_cast<double>(adam_t));
        double c2 = 1.0 - std::pow(0.999, static_cast<double>(adam_t));
        result.model.params() -=
            cfg.learning_rate *
            (adam_m / c1)
                .cwiseQuotient(((adam_v / c2).cwiseSqrt().array() + 1e-8)
                                   .matrix());
      } else {
        result.model.params() -= cfg.learning_rate * grad;
      }
      if (!result.model.params().allFinite())
        throw TrainingError("parameters diverged at epoch " +
                            std::to_string(epoch));
      epoch_objective += objective;
      ++n_batches;
    }

    DevMetric dm = dev_metric(dev, result.model.score(dev.X), cfg);
    result.log.push_back({epoch,
                          n_batches ? epoch_objective / n_batches : 0.0,
                          dm.value, dm.worst_group});
    if (dm.value < result.best_dev_metric) {
      result.best_dev_metric = dm.value;
      result.best_epoch = epoch;
      best_params = result.model.params();
      stall = 0;
    } else {
      ++stall;
      if (stall >= cfg.patience) break;
    }
  }
  result.model.params() = best_params;
  if (is_dro) result.final_dro_lambda = dro.lambda;
  return result;
}

TrainResult train_erm(const Dataset& train, const Dataset& dev,
                      TrainConfig config) {
  config.objective = Objective::kErm;
  return train_model(train, dev, config);
}

TrainResult train_regularized(const Dataset& train, const Dataset& dev,
                              const TrainConfig& config) {
  if (config.objective != Objective::kRegMmd &&
      config.objective != Objective::kRegParity)
    throw ConfigError("train_regularized requires a penalized objective");
  return train_model(train, dev, config);
}

TrainResult train_dro(const Dataset& train, const Dataset& dev,
                      const TrainConfig& config) {
  if (config.objective != Objective::kDroLogLoss &&
      config.objective != Objective::kDroAuc)
    throw ConfigError("train_dro requires a DRO objective");
  return train_model(train, dev, config);
}

StratifiedResult train_stratified(const Dataset& train, const Dataset& dev,
                                  const TrainConfig& config) {
  StratifiedResult out;
  out.per_group.resize(static_cast<std::size_t>(train.n_groups));
  for (int k = 0; k < train.n_groups; ++k) {
    std::vector<int> tr_idx, de_idx;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (train.group[i] == k) tr_idx.push_back(static_cast<int>(i));
    for (std::size_t i = 0; i < dev.size(); ++i)
      if (dev.group[i] == k) de_idx.push_back(static_cast<int>(i));
    if (tr_idx.empty() || de_idx.empty()) {
      out.errors.push_back("group " + std::to_string(k) +
                           ": no train or development samples");
      continue;
    }
    auto subset = [&](const Dataset& d, const std::vector<int>& idx) {
      Dataset s;
      s.X.resize(static_cast<Eigen::Index>(idx.size()), d.X.cols());
      s.y.resize(static_cast<Eigen::Index>(idx.size()));
      s.w.resize(static_cast<Eigen::Index>(idx.size()));
      s.n_groups = d.n_groups;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        s.X.row(static_cast<Eigen::Index>(r)) = d.X.row(idx[r]);
        s.y[static_cast<Eigen::Index>(r)] = d.y[idx[r]];
        s.w[static_cast<Eigen::Index>(r)] = d.w[idx[r]];
        s.group.push_back(d.group[static_cast<std::size_t>(idx[r])]);
      }
      return s;
    };
    TrainConfig cfg = config;
    cfg.objective = Objective::kErm;
    cfg.seed = splitmix64(config.seed ^ (0xabcd0000ULL + static_cast<std::uint64_t>(k)));
    try {
      out.per_group[static_cast<std::size_t>(k)] =
          train_model(subset(train, tr_idx), subset(dev, de_idx), cfg);
    } catch (const std::exception& e) {
      out.errors.push_back("group " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

Eigen::VectorXd score_stratified(const std::vector<const RiskModel*>& models,
                                 const Dataset& data) {
  if (models.size() != static_cast<std::size_t>(data.n_groups))
    throw DomainError("one model per group is required");
  // rows whose group has no model stay NaN rather than silently garbage
  Eigen::VectorXd scores = Eigen::VectorXd::Constant(
      static_cast<Eigen::Index>(data.size()),
      std::numeric_limits<double>::quiet_NaN());
  for (int k = 0; k < data.n_groups; ++k) {
    if (!models[static_cast<std::size_t>(k)]) continue;
    std::vector<int> idx;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.group[i] == k) idx.push_back(static_cast<int>(i));
    if (idx.empty()) continue;
    Eigen::MatrixXd Xk(static_cast<Eigen::Index>(idx.size()), data.X.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      Xk.row(static_cast<Eigen::Index>(r)) = data.X.row(idx[r]);
    Eigen::VectorXd sk = models[static_cast<std::size_t>(k)]->score(Xk);
    for (std::size_t r = 0; r < idx.size(); ++r) scores[idx[r]] = sk[static_cast<Eigen::Index>(r)];
  }
  return scores;
}

int select_model(const std::vector<Candidate>& candidates,
                 SelectionCriterion criterion) {
  if (candidates.empty()) throw ConfigError("no candidates to select from");
  const bool maximize = criterion == SelectionCriterion::kWorstCaseAuc;
  int best = -1;
  double best_avg = 0.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const Candidate& cand = candidates[c];
    if (cand.fold_metrics.empty())
      throw ConfigError("candidate " + cand.name + " has no fold metrics");
    double avg = 0.0;
    for (double v : cand.fold_metrics) avg += v;
    avg /= static_cast<double>(cand.fold_metrics.size());
    bool better;
    if (best < 0) {
      better = true;
    } else if (avg != best_avg) {
      better = maximize ? avg > best_avg : avg < best_avg;
    } else {
      const Candidate& prev = candidates[static_cast<std::size_t>(best)];
      better = cand.lambda != prev.lambda ? cand.lambda < prev.lambda
                                          : cand.name < prev.name;
    }
    if (better) {
      best = static_cast<int>(c);
      best_avg = avg;
    }
  }
  return best;
}

}  // namespace riskdca
