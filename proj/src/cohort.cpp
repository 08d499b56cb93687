#include "riskdca/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "riskdca/errors.hpp"
#include "riskdca/io.hpp"
#include "riskdca/rng.hpp"

namespace riskdca {

int Cohort::group_index(const std::string& name) const {
  for (std::size_t k = 0; k < groups.size(); ++k)
    if (groups[k] == name) return static_cast<int>(k);
  return -1;
}

void Cohort::validate() const {
  if (groups.empty()) throw ConfigError("cohort has empty group vocabulary");
  if (horizon <= 0.0) throw ConfigError("cohort horizon must be positive");
  for (const Sample& s : samples) {
    if (s.group < 0 || s.group >= n_groups())
      throw ConfigError("sample " + s.id + ": group index out of range");
    if (s.followup_time < 0.0)
      throw ConfigError("sample " + s.id + ": negative followup_time");
    if (static_cast<int>(s.features.size()) != feature_dim)
      throw ConfigError("sample " + s.id + ": feature vector length mismatch");
  }
  if (!true_event_prob.empty() && true_event_prob.size() != samples.size())
    throw ConfigError("true_event_prob length mismatch");
}

void SplitSpec::validate() const {
  auto in_open_unit = [](double f) { return f > 0.0 && f < 1.0; };
  if (!in_open_unit(train_fraction) || !in_open_unit(validation_fraction) ||
      !in_open_unit(test_fraction))
    throw ConfigError("split fractions must each lie in (0,1)");
  double total = train_fraction + validation_fraction + test_fraction;
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  if (n_train_folds < 1) throw ConfigError("n_train_folds must be >= 1");
}

void SynthConfig::validate() const {
  if (groups.empty()) throw ConfigError("synthetic config: no groups");
  if (feature_dim < 0) throw ConfigError("synthetic config: feature_dim < 0");
  if (horizon <= 0.0) throw ConfigError("synthetic config: horizon must be > 0");
  for (const GroupSynthSpec& g : groups) {
    if (g.count < 1)
      throw ConfigError("synthetic config: group " + g.name + " count < 1");
    if (g.event_rate <= 0.0)
      throw ConfigError("synthetic config: group " + g.name +
                        " event_rate must be > 0");
    if (g.censor_rate < 0.0)
      throw ConfigError("synthetic config: group " + g.name +
                        " censor_rate must be >= 0");
    double p = -std::expm1(-g.event_rate * horizon);
    if (p <= 0.0 || p >= 1.0)
      throw ConfigError("synthetic config: group " + g.name +
                        " implies degenerate event probability");
  }
}

Cohort generate_synthetic_cohort(const SynthConfig& config) {
  config.validate();
  Cohort cohort;
  cohort.horizon = config.horizon;
  cohort.feature_dim = config.feature_dim;
  for (const GroupSynthSpec& g : config.groups) cohort.groups.push_back(g.name);

  for (std::size_t k = 0; k < config.groups.size(); ++k) {
    const GroupSynthSpec& g = config.groups[k];
    Rng rng = Rng::stream(config.seed, k);
    for (int i = 0; i < g.count; ++i) {
      Sample s;
      s.id = g.name + "_" + std::to_string(i);
      s.group = static_cast<int>(k);
      s.features.resize(config.feature_dim);
      double xsum = 0.0;
      for (double& f : s.features) {
        f = rng.normal();
        xsum += f;
      }
      double xmean = config.feature_dim > 0 ? xsum / config.feature_dim : 0.0;
      double event_rate = g.event_rate * std::exp(config.feature_coef * xmean);
      double censor_rate =
          g.censor_rate *
          (config.feature_dim > 0
               ? std::exp(config.censor_feature_coef * s.features[0])
               : 1.0);
      double t_event = rng.exponential(event_rate);
      double t_censor = rng.exponential(censor_rate);
      s.event_indicator = t_event <= t_censor;
      s.followup_time = std::min(t_event, t_censor);
      cohort.samples.push_back(std::move(s));
      cohort.true_event_prob.push_back(-std::expm1(-event_rate * config.horizon));
    }
  }
  cohort.validate();
  return cohort;
}

std::string cohort_to_csv(const Cohort& cohort) {
  std::ostringstream out;
  out << "# groups:";
  for (std::size_t k = 0; k < cohort.groups.size(); ++k)
    out << (k ? "," : " ") << cohort.groups[k];
  out << "\n";
  out << "id,group,t,event";
  for (int j = 0; j < cohort.feature_dim; ++j) out << ",f" << j;
  out << "\n";
  for (const Sample& s : cohort.samples) {
    out << s.id << ',' << cohort.groups[s.group] << ','
        << format_double(s.followup_time) << ',' << (s.event_indicator ? 1 : 0);
    for (double f : s.features) out << ',' << format_double(f);
    out << "\n";
  }
  return out.str();
}

void save_cohort(const Cohort& cohort, const std::string& path) {
  write_file_atomic(path, cohort_to_csv(cohort));
}

namespace {

double parse_csv_double(const std::string& v, int row, const std::string& col) {
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ParseError("row " + std::to_string(row) + ", column " + col +
                     ": not a number: '" + v + "'");
  return x;
}

}  // namespace

Cohort load_cohort(const std::string& path, double horizon) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open cohort file: " + path);
  if (horizon <= 0.0) throw ConfigError("horizon must be positive");

  Cohort cohort;
  cohort.horizon = horizon;

  std::string line;
  int row = 0;
  bool have_header = false;
  std::vector<std::string> declared_groups;
  struct RawRow {
    std::string id;
    std::string group;
    double t;
    bool event;
    std::vector<double> features;
  };
  std::vector<RawRow> raw;

  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line[0] == '#') {
      std::string body = trim(line.substr(1));
      const std::string tag = "groups:";
      if (body.rfind(tag, 0) == 0) {
        for (const std::string& g : split(body.substr(tag.size()), ','))
          if (!trim(g).empty()) declared_groups.push_back(trim(g));
      }
      continue;
    }
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (!have_header) {
      if (cells.size() < 4 || cells[0] != "id" || cells[1] != "group" ||
          cells[2] != "t" || cells[3] != "event")
        throw ParseError("row " + std::to_string(row) +
                         ": expected header id,group,t,event,f0,...");
      cohort.feature_dim = static_cast<int>(cells.size()) - 4;
      for (int j = 0; j < cohort.feature_dim; ++j)
        if (cells[4 + j] != "f" + std::to_string(j))
          throw ParseError("row " + std::to_string(row) + ": feature column " +
                           std::to_string(j) + " must be named f" +
                           std::to_string(j));
      have_header = true;
      continue;
    }
    if (cells.size() != static_cast<std::size_t>(4 + cohort.feature_dim))
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(4 + cohort.feature_dim) + " columns, got " +
                       std::to_string(cells.size()));
    RawRow r;
    r.id = trim(cells[0]);
    r.group = trim(cells[1]);
    if (r.id.empty())
      throw ParseError("row " + std::to_string(row) + ", column id: empty");
    if (r.group.empty())
      throw ParseError("row " + std::to_string(row) + ", column group: empty");
    r.t = parse_csv_double(trim(cells[2]), row, "t");
    if (r.t < 0.0)
      throw ParseError("row " + std::to_string(row) +
                       ", column t: negative followup time");
    std::string ev = trim(cells[3]);
    if (ev != "0" && ev != "1")
      throw ParseError("row " + std::to_string(row) +
                       ", column event: expected 0 or 1, got '" + ev + "'");
    r.event = ev == "1";
    for (int j = 0; j < cohort.feature_dim; ++j)
      r.features.push_back(
          parse_csv_double(trim(cells[4 + j]), row, "f" + std::to_string(j)));
    raw.push_back(std::move(r));
  }
  if (!have_header) throw ParseError("cohort file has no header row: " + path);

  if (!declared_groups.empty()) {
    cohort.groups = declared_groups;
  } else {
    std::set<std::string> seen;
    for (const RawRow& r : raw) seen.insert(r.group);
    cohort.groups.assign(seen.begin(), seen.end());  // sorted by std::set
  }

  for (const RawRow& r : raw) {
    Sample s;
    s.id = r.id;
    int g = cohort.group_index(r.group);
    if (g < 0)
      throw ParseError("group '" + r.group +
                       "' not in the declared vocabulary");
    s.group = g;
    s.followup_time = r.t;
    s.event_indicator = r.event;
    s.features = r.features;
    cohort.samples.push_back(std::move(s));
  }
  cohort.validate();
  return cohort;
}

namespace {

Cohort slice(const Cohort& base, const std::vector<std::size_t>& order,
             std::size_t begin, std::size_t end) {
  Cohort out;
  out.groups = base.groups;
  out.horizon = base.horizon;
  out.feature_dim = base.feature_dim;
  for (std::size_t i = begin; i < end; ++i) {
    out.samples.push_back(base.samples[order[i]]);
    if (!base.true_event_prob.empty())
      out.true_event_prob.push_back(base.true_event_prob[order[i]]);
  }
  return out;
}

}  // namespace

Split partition(const Cohort& cohort, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = cohort.size();
  if (n == 0) throw ConfigError("cannot partition an empty cohort");

  auto n_train =
      static_cast<std::size_t>(std::llround(spec.train_fraction * n));
  auto n_val =
      static_cast<std::size_t>(std::llround(spec.validation_fraction * n));
  if (n_train + n_val >= n || n_train < static_cast<std::size_t>(spec.n_train_folds) ||
      n_val == 0)
    throw ConfigError("cohort too small for the requested partition");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(spec.seed, 0x70a7);
  rng.shuffle(order);

  Split out;
  // Contiguous fold slices; the first (n_train % folds) folds get one extra.
  std::size_t fold_base = n_train / spec.n_train_folds;
  std::size_t remainder = n_train % spec.n_train_folds;
  std::size_t pos = 0;
  for (int f = 0; f < spec.n_train_folds; ++f) {
    std::size_t len = fold_base + (static_cast<std::size_t>(f) < remainder ? 1 : 0);
    out.train_folds.push_back(slice(cohort, order, pos, pos + len));
    pos += len;
  }
  out.validation = slice(cohort, order, pos, pos + n_val);
  pos += n_val;
  out.test = slice(cohort, order, pos, n);
  return out;
}

SynthConfig synth_config_from(const KeyValueConfig& cfg) {
  SynthConfig out;
  out.feature_dim = static_cast<int>(cfg.get_int("synth.feature_dim", 4));
  out.horizon = cfg.get_double("synth.horizon", 10.0);
  out.feature_coef = cfg.get_double("synth.feature_coef", 0.0);
  out.censor_feature_coef = cfg.get_double("synth.censor_feature_coef", 0.0);
  out.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  for (const std::string& name : cfg.get_list("synth.groups")) {
    GroupSynthSpec g;
    g.name = name;
    g.count = static_cast<int>(cfg.get_int("synth.count." + name));
    g.event_rate = cfg.get_double("synth.event_rate." + name);
    g.censor_rate = cfg.get_double("synth.censor_rate." + name, 0.0);
    out.groups.push_back(std::move(g));
  }
  out.validate();
  return out;
}

SplitSpec split_spec_from(const KeyValueConfig& cfg) {
  SplitSpec out;
  out.train_fraction = cfg.get_double("split.train", 0.625);
  out.validation_fraction = cfg.get_double("split.validation", 0.125);
  out.test_fraction = cfg.get_double("split.test", 0.25);
  out.n_train_folds = static_cast<int>(cfg.get_int("split.n_train_folds", 5));
  out.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  out.validate();
  return out;
}

}  // namespace riskdca
