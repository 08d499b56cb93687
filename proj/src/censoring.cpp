#include "riskdca/censoring.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "riskdca/errors.hpp"
#include "riskdca/io.hpp"

namespace riskdca {

CompositeOutcome derive_composite_outcome(double followup_time,
                                          bool event_indicator,
                                          double horizon) {
  if (followup_time < 0.0) throw DomainError("followup_time must be >= 0");
  if (horizon <= 0.0) throw DomainError("horizon must be > 0");
  CompositeOutcome out;
  if (event_indicator) {
    // T observed; C > T.
    out.y = followup_time <= horizon ? 1 : 0;
    out.u_y = std::min(followup_time, horizon);
    out.delta_y = 1;
  } else {
    // C observed; T > C.
    if (followup_time < horizon) {
      out.y = 0;  // carried as 0 but excluded by weight 0
      out.u_y = followup_time;
      out.delta_y = 0;
    } else {
      out.y = 0;  // T > C >= horizon
      out.u_y = horizon;
      out.delta_y = 1;
    }
  }
  return out;
}

std::vector<CompositeOutcome> composite_outcomes(const Cohort& cohort) {
  std::vector<CompositeOutcome> out;
  out.reserve(cohort.size());
  for (const Sample& s : cohort.samples)
    out.push_back(derive_composite_outcome(s.followup_time, s.event_indicator,
                                           cohort.horizon));
  return out;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double CensoringModel::hazard(int interval, const std::vector<double>& x) const {
  double z = intercepts[interval];
  const std::vector<double>& w = coefficients[interval];
  for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[j];
  return sigmoid(z);
}

double CensoringModel::survival(double t, const std::vector<double>& x) const {
  if (t < 0.0) throw DomainError("survival time must be >= 0");
  if (degenerate) return 1.0;
  double g = 1.0;
  for (int j = 0; j < n_intervals(); ++j) {
    if (boundaries[j] >= t) break;  // interval (b[j], b[j+1]] has not begun
    g *= 1.0 - hazard(j, x);
  }
  return g;
}

namespace {

// Inverse-CDF empirical quantile: the ceil(n*p)-th order statistic.
double quantile_type1(const std::vector<double>& sorted, double p) {
  std::size_t n = sorted.size();
  auto idx = static_cast<std::size_t>(std::ceil(p * n));
  if (idx < 1) idx = 1;
  if (idx > n) idx = n;
  return sorted[idx - 1];
}

}  // namespace

CensoringModel fit_censoring_model(const Cohort& train, int n_intervals,
                                   const CensoringFitConfig& config,
                                   std::vector<double>* loss_trace) {
  if (n_intervals < 1) throw ConfigError("n_intervals must be >= 1");
  const int m = train.feature_dim;

  std::vector<double> censor_times;
  for (const Sample& s : train.samples)
    if (!s.event_indicator) censor_times.push_back(s.followup_time);

  CensoringModel model;
  model.feature_dim = m;
  if (censor_times.empty()) {
    model.degenerate = true;
    model.boundaries = {0.0};
    return model;
  }
  std::sort(censor_times.begin(), censor_times.end());

  model.boundaries.push_back(0.0);
  for (int j = 1; j <= n_intervals; ++j) {
    double b = quantile_type1(censor_times, static_cast<double>(j) / n_intervals);
    if (b > model.boundaries.back()) model.boundaries.push_back(b);
  }
  if (model.boundaries.size() < 2) {
    // All censoring happens at a single time equal to 0 cannot occur
    // (times are > 0 whenever they are boundaries); still guard.
    model.boundaries.push_back(censor_times.back());
  }
  const int B = static_cast<int>(model.boundaries.size()) - 1;
  model.intercepts.assign(B, 0.0);
  model.coefficients.assign(B, std::vector<double>(m, 0.0));

  // Person-period expansion. A sample with an observed censoring event in
  // interval j is at risk in 1..j with the event in j; a sample whose
  // outcome event occurred at u is at risk in every interval ending at or
  // before u.
  std::vector<std::vector<int>> risk_rows(B);   // sample indices at risk
  std::vector<std::vector<int>> risk_label(B);  // 1 = censoring event here
  for (std::size_t i = 0; i < train.size(); ++i) {
    const Sample& s = train.samples[i];
    if (!s.event_indicator) {
      int j = B - 1;
      for (int k = 0; k < B; ++k) {
        if (s.followup_time <= model.boundaries[k + 1]) {
          j = k;
          break;
        }
      }
      for (int k = 0; k < j; ++k) {
        risk_rows[k].push_back(static_cast<int>(i));
        risk_label[k].push_back(0);
      }
      risk_rows[j].push_back(static_cast<int>(i));
      risk_label[j].push_back(1);
    } else {
      for (int k = 0; k < B; ++k) {
        if (model.boundaries[k + 1] > s.followup_time) break;
        risk_rows[k].push_back(static_cast<int>(i));
        risk_label[k].push_back(0);
      }
    }
  }

  const int dim = config.intercept_only ? 1 : m + 1;
  auto interval_nll = [&](int j, const Eigen::VectorXd& beta) {
    double nll = 0.0;
    for (std::size_t r = 0; r < risk_rows[j].size(); ++r) {
      const Sample& s = train.samples[risk_rows[j][r]];
      double z = beta[0];
      if (!config.intercept_only)
        for (int f = 0; f < m; ++f) z += beta[1 + f] * s.features[f];
      // -log likelihood of a Bernoulli(h) draw, numerically stable form
      double lse = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      nll += risk_label[j][r] ? (lse - z) : lse;
    }
    return nll;
  };

  // Independent Newton fits per interval (the likelihood factorizes).
  double total_prev = 0.0;
  std::vector<Eigen::VectorXd> betas(B, Eigen::VectorXd::Zero(dim));
  for (int j = 0; j < B; ++j) total_prev += interval_nll(j, betas[j]);
  if (loss_trace) loss_trace->push_back(total_prev);

  for (int iter = 0; iter < config.max_iter; ++iter) {
    double total = 0.0;
    for (int j = 0; j < B; ++j) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
      Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
      Eigen::VectorXd row(dim);
      for (std::size_t r = 0; r < risk_rows[j].size(); ++r) {
        const Sample& s = train.samples[risk_rows[j][r]];
        row[0] = 1.0;
        if (!config.intercept_only)
          for (int f = 0; f < m; ++f) row[1 + f] = s.features[f];
        double h = sigmoid(betas[j].dot(row));
        grad += (h - risk_label[j][r]) * row;
        hess += h * (1.0 - h) * row * row.transpose();
      }
      hess.diagonal().array() += 1e-10;  // guard near-separated intervals
      Eigen::VectorXd step = hess.ldlt().solve(grad);
      double f0 = interval_nll(j, betas[j]);
      double scale = 1.0;
      Eigen::VectorXd cand = betas[j] - step;
      // Step halving: never accept an increase.
      for (int h = 0; h < 30 && interval_nll(j, cand) > f0; ++h) {
        scale *= 0.5;
        cand = betas[j] - scale * step;
      }
      if (interval_nll(j, cand) <= f0) betas[j] = cand;
      total += interval_nll(j, betas[j]);
    }
    if (loss_trace) loss_trace->push_back(total);
    if (total_prev - total < config.tol) break;
    total_prev = total;
  }

  for (int j = 0; j < B; ++j) {
    model.intercepts[j] = betas[j][0];
    if (!config.intercept_only)
      for (int f = 0; f < m; ++f) model.coefficients[j][f] = betas[j][1 + f];
  }
  return model;
}

std::string CensoringModel::serialize() const {
  std::ostringstream out;
  out << "censoring_model v1\n";
  out << "degenerate " << (degenerate ? 1 : 0) << "\n";
  out << "feature_dim " << feature_dim << "\n";
  out << "n_intervals " << n_intervals() << "\n";
  out << "boundaries";
  for (double b : boundaries) out << ' ' << format_double(b);
  out << "\n";
  for (int j = 0; j < n_intervals(); ++j) {
    out << "interval " << j << ' ' << format_double(intercepts[j]);
    for (double c : coefficients[j]) out << ' ' << format_double(c);
    out << "\n";
  }
  return out.str();
}

CensoringModel CensoringModel::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string tok;
  CensoringModel model;
  in >> tok;
  std::string version;
  in >> version;
  if (tok != "censoring_model" || version != "v1")
    throw ParseError("not a censoring model file");
  int deg = 0, nint = 0;
  in >> tok >> deg;
  in >> tok >> model.feature_dim;
  in >> tok >> nint;
  model.degenerate = deg != 0;
  in >> tok;
  model.boundaries.resize(nint + 1);
  if (model.degenerate) model.boundaries.resize(1);
  for (double& b : model.boundaries) in >> b;
  model.intercepts.resize(nint);
  model.coefficients.assign(nint, std::vector<double>(model.feature_dim, 0.0));
  for (int j = 0; j < nint; ++j) {
    int idx;
    in >> tok >> idx >> model.intercepts[j];
    for (double& c : model.coefficients[j]) in >> c;
  }
  if (!in) throw ParseError("truncated censoring model file");
  return model;
}

void CensoringModel::save(const std::string& path) const {
  write_file_atomic(path, serialize());
}

CensoringModel CensoringModel::load(const std::string& path) {
  return deserialize(read_file(path));
}

WeightVector WeightVector::uniform(std::size_t n) {
  WeightVector out;
  out.weights.assign(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  return out;
}

std::vector<double> ipcw_raw_weights(const CensoringModel& model,
                                     const Cohort& cohort, double g_floor,
                                     int* clip_count) {
  std::vector<double> raw(cohort.size(), 0.0);
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const Sample& s = cohort.samples[i];
    CompositeOutcome c = derive_composite_outcome(s.followup_time,
                                                  s.event_indicator,
                                                  cohort.horizon);
    if (!c.delta_y) continue;
    double g = model.survival(c.u_y, s.features);
    if (g < g_floor) {
      g = g_floor;
      if (clip_count) ++*clip_count;
    }
    raw[i] = 1.0 / g;
  }
  return raw;
}

WeightVector normalize_weights(std::vector<double> raw, int clip_count) {
  WeightVector out;
  out.clip_count = clip_count;
  double total = 0.0;
  for (double w : raw) {
    if (w < 0.0) throw DomainError("weights must be nonnegative");
    total += w;
  }
  if (total > 0.0)
    for (double& w : raw) w /= total;
  out.weights = std::move(raw);
  return out;
}

WeightVector ipcw_weights(const CensoringModel& model, const Cohort& cohort,
                          double g_floor) {
  int clips = 0;
  std::vector<double> raw = ipcw_raw_weights(model, cohort, g_floor, &clips);
  return normalize_weights(std::move(raw), clips);
}

WeightVector ipcw_weights_averaged(
    const std::vector<const CensoringModel*>& models, const Cohort& cohort,
    double g_floor) {
  if (models.empty()) throw ConfigError("no censoring models supplied");
  std::vector<double> raw(cohort.size(), 0.0);
  int clips = 0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const Sample& s = cohort.samples[i];
    CompositeOutcome c = derive_composite_outcome(s.followup_time,
                                                  s.event_indicator,
                                                  cohort.horizon);
    if (!c.delta_y) continue;
    double g = 0.0;
    for (const CensoringModel* m : models) g += m->survival(c.u_y, s.features);
    g /= static_cast<double>(models.size());
    if (g < g_floor) {
      g = g_floor;
      ++clips;
    }
    raw[i] = 1.0 / g;
  }
  return normalize_weights(std::move(raw), clips);
}

void save_weights(const Cohort& cohort, const WeightVector& weights,
                  const std::string& path) {
  std::ostringstream out;
  out << "id,weight\n";
  for (std::size_t i = 0; i < cohort.size(); ++i)
    out << cohort.samples[i].id << ',' << format_double(weights.weights[i])
        << "\n";
  write_file_atomic(path, out.str());
}

WeightVector load_weights(const Cohort& cohort, const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line)[0] != "id")
    throw ParseError("weights file missing id,weight header: " + path);
  std::map<std::string, double> by_id;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 2)
      throw ParseError("weights row " + std::to_string(row) +
                       ": expected id,weight");
    char* end = nullptr;
    double w = std::strtod(cells[1].c_str(), &end);
    if (end == cells[1].c_str() || *end != '\0' || w < 0.0)
      throw ParseError("weights row " + std::to_string(row) +
                       ": bad weight '" + cells[1] + "'");
    by_id[trim(cells[0])] = w;
  }
  WeightVector out;
  out.weights.reserve(cohort.size());
  for (const Sample& s : cohort.samples) {
    auto it = by_id.find(s.id);
    if (it == by_id.end())
      throw ParseError("weights file missing id: " + s.id);
    out.weights.push_back(it->second);
  }
  return out;
}

}  // namespace riskdca
