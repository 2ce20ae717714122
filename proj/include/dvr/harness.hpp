#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "dvr/data_io.hpp"
#include "dvr/diagnostics.hpp"
#include "dvr/error.hpp"
#include "dvr/model.hpp"
#include "dvr/orchestrator.hpp"

namespace dvr {

// ---------------------------------------------------------------------------
// Experiment description
// ---------------------------------------------------------------------------

/// A libsvm file, or a seeded synthetic dataset when `path` is empty.
struct DataSource {
  std::string path;
  std::size_t samples = 4096;
  std::size_t dim = 50;
  std::uint64_t seed = 1;

  bool synthetic() const noexcept { return path.empty(); }

  friend bool operator==(const DataSource&, const DataSource&) = default;
};

/// Parses `synthetic:N,d` or a file path.
inline DataSource parse_data_source(std::string_view text, std::uint64_t seed = 1) {
  DataSource src;
  src.seed = seed;
  constexpr std::string_view prefix = "synthetic:";
  if (text.substr(0, prefix.size()) != prefix) {
    if (text.empty()) throw ConfigError("empty data source");
    src.path = std::string(text);
    return src;
  }
  const std::string_view rest = text.substr(prefix.size());
  const auto comma = rest.find(',');
  std::uint64_t n = 0, d = 0;
  if (comma == std::string_view::npos || !detail::parse_uint(rest.substr(0, comma), n) ||
      !detail::parse_uint(rest.substr(comma + 1), d) || n == 0 || d == 0) {
    throw ConfigError("synthetic data source must look like synthetic:N,d");
  }
  src.samples = n;
  src.dim = d;
  return src;
}

inline std::string to_string(const DataSource& src) {
  if (!src.synthetic()) return src.path;
  return "synthetic:" + std::to_string(src.samples) + "," + std::to_string(src.dim);
}

/// Loads the dataset; logistic losses get normalized features.
inline Dataset load_dataset(const DataSource& src, LossKind loss) {
  if (src.synthetic()) return synthesize(loss, src.samples, src.dim, src.seed);
  Dataset ds = load_libsvm(src.path);
  if (is_logistic(loss)) ds = normalize_features(std::move(ds));
  return ds;
}

/// Which workers get the anchor pull mu, and how much.
struct MuAssignment {
  std::optional<double> broadcast;         // every worker
  std::map<std::size_t, double> per_worker;
  std::optional<double> smallest_worker;   // the worker holding the fewest samples

  bool empty() const { return !broadcast && per_worker.empty() && !smallest_worker; }

  std::vector<double> resolve(const Partition& partition) const {
    std::vector<double> mu(partition.worker_count(), broadcast.value_or(0.0));
    for (const auto& [k, v] : per_worker) {
      if (k >= mu.size()) throw ConfigError("mu given for nonexistent worker " + std::to_string(k));
      mu[k] = v;
    }
    if (smallest_worker) mu[partition.smallest_worker()] = *smallest_worker;
    for (double v : mu) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("mu must be finite and >= 0");
    }
    return mu;
  }

  friend bool operator==(const MuAssignment&, const MuAssignment&) = default;
};

/// Explicit parameters layered over default_parameters().
struct AlgorithmOverrides {
  std::optional<double> eta;
  std::optional<std::size_t> m;
  std::optional<double> m_factor;  // m = factor * N (total samples)
  std::optional<double> theta;
  std::optional<double> w;
  std::optional<double> momentum;
  std::optional<MomentumSchedule> schedule;
  std::optional<AggregationRule> aggregation;
  std::optional<SvrgOutput> svrg_output;
  std::optional<SarahOutput> sarah_output;
  MuAssignment mu;

  friend bool operator==(const AlgorithmOverrides&, const AlgorithmOverrides&) = default;
};

struct AlgorithmEntry {
  std::string label;
  Algorithm algorithm = Algorithm::d_svrg;
  AlgorithmOverrides overrides;

  friend bool operator==(const AlgorithmEntry&, const AlgorithmEntry&) = default;
};

struct ExperimentCase {
  std::string id;
  double lambda = 0.0;
  std::size_t workers = 1;

  friend bool operator==(const ExperimentCase&, const ExperimentCase&) = default;
};

enum class PartitionMode { equal, fractions };

struct ExperimentConfig {
  std::string name = "experiment";
  DataSource data;
  LossKind loss = LossKind::logistic_l2;
  std::vector<ExperimentCase> cases;
  PartitionMode partition = PartitionMode::equal;
  std::vector<double> fractions;
  std::vector<AlgorithmEntry> algorithms;
  std::size_t rounds = 20;
  std::vector<std::uint64_t> seeds{1};
  bool compute_gap = true;
  double fstar_tol = 1e-11;
  Weighting weighting = Weighting::uniform;
  Execution execution = Execution::concurrent;
  std::string output;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

struct MetricRow {
  std::string experiment;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::size_t round = 0;
  std::uint64_t comm_rounds = 0;
  std::uint64_t grad_evals = 0;     // max over workers
  std::optional<double> gap;        // f(x~^t) - f*, convex runs only
  double grad_norm_sq = 0.0;
  bool diverged = false;
};

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

/// Builds the orchestrator configuration for one algorithm entry.
inline RunConfig resolve_run_config(const AlgorithmEntry& entry, const SmoothnessInfo& smooth,
                                    const Partition& partition, std::size_t rounds,
                                    std::uint64_t seed) {
  const std::size_t total = partition.total();
  const std::size_t n = partition.worker_count();
  RunConfig cfg;
  cfg.algorithm = entry.algorithm;
  cfg.rounds = rounds;
  cfg.master_seed = seed;
  cfg.solver = default_parameters(entry.algorithm, smooth, total, n);
  const AlgorithmOverrides& o = entry.overrides;
  cfg.aggregation = o.aggregation.value_or(default_aggregation(entry.algorithm));

  std::optional<std::size_t> m = o.m;
  if (o.m_factor) {
    m = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(*o.m_factor * static_cast<double>(total))));
  }
  std::visit(
      [&](auto& c) {
        using C = std::decay_t<decltype(c)>;
        if (o.eta) c.eta = *o.eta;
        if constexpr (std::is_same_v<C, SvrgConfig> || std::is_same_v<C, SarahConfig> ||
                      std::is_same_v<C, MigConfig>) {
          if (m) c.m = *m;
        }
        if constexpr (std::is_same_v<C, SvrgConfig>) {
          if (o.svrg_output) c.output = *o.svrg_output;
        }
        if constexpr (std::is_same_v<C, SarahConfig>) {
          if (o.sarah_output) c.output = *o.sarah_output;
        }
        if constexpr (std::is_same_v<C, MigConfig>) {
          if (o.theta) {
            c.theta = *o.theta;
            if (!o.eta) c.eta = 1.0 / (3.0 * c.theta * smooth.L);
          }
          // w tracks the step size unless given explicitly.
          c.w = o.w.value_or(1.0 + c.eta * smooth.sigma);
        }
        if constexpr (std::is_same_v<C, AgdConfig>) {
          if (o.momentum) c.momentum = *o.momentum;
          if (o.schedule) c.schedule = *o.schedule;
        }
      },
      cfg.solver);
  if (!o.mu.empty()) {
    if (!std::holds_alternative<SvrgConfig>(cfg.solver)) {
      throw ConfigError("mu applies only to d_svrg / d_rsvrg");
    }
    cfg.worker_mu = o.mu.resolve(partition);
  }
  return cfg;
}

inline Partition make_experiment_partition(const ExperimentConfig& config, const Dataset& ds,
                                           std::size_t workers) {
  if (config.partition == PartitionMode::fractions) {
    if (config.fractions.size() != workers) {
      throw ConfigError("fraction count must equal the worker count");
    }
    return partition_fractions(ds, config.fractions, config.data.seed);
  }
  return partition_equal(ds, workers, config.data.seed);
}

inline void append_rows(const Trace& trace, const std::string& experiment, const std::string& label,
                        std::uint64_t seed, std::optional<double> f_star,
                        std::vector<MetricRow>& rows) {
  for (const RoundRecord& r : trace.records) {
    MetricRow row;
    row.experiment = experiment;
    row.algorithm = label;
    row.seed = seed;
    row.round = r.round;
    row.comm_rounds = r.comm_rounds;
    row.grad_evals = r.max_grad_evals();
    if (f_star) row.gap = r.objective - *f_star;
    row.grad_norm_sq = r.grad_norm_sq;
    row.diverged = r.diverged;
    rows.push_back(std::move(row));
  }
}

/// Runs every (case, algorithm, seed) combination in configuration order.
/// f* is computed once per case; divergence shows up as flagged rows.
inline std::vector<MetricRow> run_experiment(const ExperimentConfig& config) {
  if (config.cases.empty()) throw ConfigError("experiment has no cases");
  if (config.algorithms.empty()) throw ConfigError("experiment has no algorithms");
  const Dataset ds = load_dataset(config.data, config.loss);
  std::vector<MetricRow> rows;
  for (const ExperimentCase& c : config.cases) {
    const LossSpec spec(config.loss, c.lambda);
    const Partition partition = make_experiment_partition(config, ds, c.workers);
    const SmoothnessInfo smooth = smoothness_constants(spec, ds);
    std::optional<double> f_star;
    if (config.compute_gap) {
      ReferenceOptions ref_opts;
      ref_opts.weighting = config.weighting;
      f_star = reference_optimum(spec, ds, partition, config.fstar_tol, ref_opts).f_star;
    }
    for (const AlgorithmEntry& entry : config.algorithms) {
      for (std::uint64_t seed : config.seeds) {
        RunConfig rc = resolve_run_config(entry, smooth, partition, config.rounds, seed);
        rc.weighting = config.weighting;
        rc.execution = config.execution;
        const Trace trace = run(spec, ds, partition, rc);
        append_rows(trace, c.id, entry.label, seed, f_star, rows);
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

struct PresetOptions {
  std::optional<std::string> data_path;
  std::size_t samples = 4096;
  std::size_t dim = 50;
  std::uint64_t seed = 1;
  std::size_t replicates = 1;
  std::optional<std::size_t> rounds;
  // Unbalanced preset inner loop: m = inner_factor * N on all workers.
  double unbalanced_inner_factor = 2.0;
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"kappa_sweep", "worker_sweep", "unbalanced",
                                              "nonconvex"};
  return names;
}

/// Desk-scale instances of the four experiment families.
inline ExperimentConfig preset(std::string_view name, const PresetOptions& opts = {}) {
  ExperimentConfig cfg;
  cfg.name = std::string(name);
  cfg.data.seed = opts.seed;
  std::size_t total = opts.samples;
  if (opts.data_path) {
    cfg.data.path = *opts.data_path;
    total = load_libsvm(*opts.data_path).size();
  } else {
    cfg.data.samples = opts.samples;
    cfg.data.dim = opts.dim;
  }
  if (opts.replicates == 0) throw ConfigError("replicates must be >= 1");
  cfg.seeds.clear();
  for (std::size_t r = 0; r < opts.replicates; ++r) cfg.seeds.push_back(opts.seed + r);

  const auto N = static_cast<double>(total);
  auto entry = [](Algorithm a) { return AlgorithmEntry{std::string(to_string(a)), a, {}}; };
  const std::vector<AlgorithmEntry> convex_algos{entry(Algorithm::d_svrg), entry(Algorithm::d_sarah),
                                                 entry(Algorithm::d_mig), entry(Algorithm::d_agd)};

  if (name == "kappa_sweep") {
    cfg.loss = LossKind::logistic_l2;
    for (double p : {0.5, 0.75, 1.0}) {
      cfg.cases.push_back({"lambda=N^-" + detail::format_double(p), std::pow(N, -p), 4});
    }
    cfg.algorithms = convex_algos;
    cfg.rounds = opts.rounds.value_or(30);
  } else if (name == "worker_sweep") {
    cfg.loss = LossKind::logistic_l2;
    for (std::size_t n : {4, 8, 16}) {
      cfg.cases.push_back({"n=" + std::to_string(n), 1.0 / N, n});
    }
    cfg.algorithms = convex_algos;
    cfg.rounds = opts.rounds.value_or(30);
  } else if (name == "unbalanced") {
    cfg.loss = LossKind::logistic_l2;
    cfg.partition = PartitionMode::fractions;
    cfg.fractions = {0.5, 0.3, 0.199, 0.001};
    cfg.cases.push_back({"unbalanced", 1.0 / N, 4});
    AlgorithmEntry plain = entry(Algorithm::d_svrg);
    plain.overrides.m_factor = opts.unbalanced_inner_factor;
    AlgorithmEntry reg = entry(Algorithm::d_rsvrg);
    reg.overrides.m_factor = opts.unbalanced_inner_factor;
    reg.overrides.mu.smallest_worker = 0.1 / std::sqrt(0.001 * N);
    cfg.algorithms = {plain, reg};
    cfg.rounds = opts.rounds.value_or(15);
  } else if (name == "nonconvex") {
    cfg.loss = LossKind::logistic_nonconvex;
    cfg.cases.push_back({"nonconvex", 0.1, 4});
    cfg.algorithms = {entry(Algorithm::d_sarah), entry(Algorithm::d_gd)};
    cfg.compute_gap = false;
    cfg.rounds = opts.rounds.value_or(20);
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCsvHeader =
    "experiment,algorithm,seed,round,comm_rounds,grad_evals,gap,grad_norm_sq,diverged";

namespace detail {

inline std::string csv_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

inline void check_csv_field(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos) {
    throw ConfigError("CSV field may not contain separators: '" + s + "'");
  }
}

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline void emit_csv(const std::vector<MetricRow>& rows, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const MetricRow& r : rows) {
    detail::check_csv_field(r.experiment);
    detail::check_csv_field(r.algorithm);
    out << r.experiment << ',' << r.algorithm << ',' << r.seed << ',' << r.round << ','
        << r.comm_rounds << ',' << r.grad_evals << ','
        << (r.gap ? detail::csv_double(*r.gap) : std::string()) << ','
        << detail::csv_double(r.grad_norm_sq) << ',' << (r.diverged ? 1 : 0) << '\n';
  }
}

inline void emit_csv(const std::vector<MetricRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  emit_csv(rows, out);
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline std::vector<MetricRow> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw DataError("CSV header mismatch");
  std::vector<MetricRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    auto fail = [&] { throw DataError("CSV line " + std::to_string(line_no) + " malformed"); };
    if (f.size() != 9) fail();
    MetricRow r;
    r.experiment = f[0];
    r.algorithm = f[1];
    std::uint64_t u = 0;
    if (!detail::parse_uint(f[2], r.seed)) fail();
    if (!detail::parse_uint(f[3], u)) fail();
    r.round = u;
    if (!detail::parse_uint(f[4], r.comm_rounds)) fail();
    if (!detail::parse_uint(f[5], r.grad_evals)) fail();
    if (!f[6].empty()) {
      double g = 0.0;
      if (!detail::parse_double(f[6], g)) fail();
      r.gap = g;
    }
    if (!detail::parse_double(f[7], r.grad_norm_sq)) fail();
    if (f[8] != "0" && f[8] != "1") fail();
    r.diverged = f[8] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Flat key-value configuration
// ---------------------------------------------------------------------------
//
//   name = kappa_sweep
//   data = synthetic:4096,50
//   data_seed = 1
//   loss = logistic_l2
//   case = <id> <lambda> <workers>          (repeatable)
//   partition = equal | fractions f1 f2 ...
//   algorithm = <label> <algo> [key=value ...]   (repeatable)
//   rounds = 30
//   seeds = 1 2 3
//   gap = true
//   fstar_tol = 1e-11
//   weighting = uniform | size_weighted
//   output = results.csv
//
// Algorithm keys: eta, m, m_factor, theta, w, momentum, schedule
// (constant|t_over_t_plus_3), aggregate (select|average), svrg_output
// (last|uniform), sarah_output (uniform|last), mu (worker:val,... with *:val
// for every worker and smallest:val for the smallest worker).

namespace detail {

inline double kv_double(std::string_view s, std::string_view key) {
  double v = 0.0;
  if (!parse_double(s, v)) throw ConfigError("bad number '" + std::string(s) + "' for " + std::string(key));
  return v;
}

inline std::uint64_t kv_uint(std::string_view s, std::string_view key) {
  std::uint64_t v = 0;
  if (!parse_uint(s, v)) throw ConfigError("bad integer '" + std::string(s) + "' for " + std::string(key));
  return v;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> words(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace detail

/// Parses `worker:val,...`; `*` broadcasts and `smallest` targets the
/// worker with the fewest samples.
inline MuAssignment parse_mu(std::string_view text) {
  MuAssignment mu;
  for (const std::string& item : detail::split(text, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("mu entries must look like worker:value");
    const std::string who = item.substr(0, colon);
    const double v = detail::kv_double(std::string_view(item).substr(colon + 1), "mu");
    if (who == "*") {
      mu.broadcast = v;
    } else if (who == "smallest") {
      mu.smallest_worker = v;
    } else {
      mu.per_worker[detail::kv_uint(who, "mu worker")] = v;
    }
  }
  return mu;
}

inline std::string format_mu(const MuAssignment& mu) {
  std::vector<std::string> parts;
  if (mu.broadcast) parts.push_back("*:" + detail::format_double(*mu.broadcast));
  for (const auto& [k, v] : mu.per_worker) parts.push_back(std::to_string(k) + ":" + detail::format_double(v));
  if (mu.smallest_worker) parts.push_back("smallest:" + detail::format_double(*mu.smallest_worker));
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

inline std::string to_kv(const ExperimentConfig& c) {
  using detail::format_double;
  std::ostringstream out;
  out << "name = " << c.name << '\n';
  out << "data = " << to_string(c.data) << '\n';
  out << "data_seed = " << c.data.seed << '\n';
  out << "loss = " << to_string(c.loss) << '\n';
  for (const auto& k : c.cases) {
    out << "case = " << k.id << ' ' << format_double(k.lambda) << ' ' << k.workers << '\n';
  }
  out << "partition = " << (c.partition == PartitionMode::equal ? "equal" : "fractions");
  for (double f : c.fractions) out << ' ' << format_double(f);
  out << '\n';
  for (const auto& a : c.algorithms) {
    const auto& o = a.overrides;
    out << "algorithm = " << a.label << ' ' << to_string(a.algorithm);
    if (o.eta) out << " eta=" << format_double(*o.eta);
    if (o.m) out << " m=" << *o.m;
    if (o.m_factor) out << " m_factor=" << format_double(*o.m_factor);
    if (o.theta) out << " theta=" << format_double(*o.theta);
    if (o.w) out << " w=" << format_double(*o.w);
    if (o.momentum) out << " momentum=" << format_double(*o.momentum);
    if (o.schedule) {
      out << " schedule=" << (*o.schedule == MomentumSchedule::constant ? "constant" : "t_over_t_plus_3");
    }
    if (o.aggregation) out << " aggregate=" << to_string(*o.aggregation);
    if (o.svrg_output) {
      out << " svrg_output=" << (*o.svrg_output == SvrgOutput::option_i_last ? "last" : "uniform");
    }
    if (o.sarah_output) {
      out << " sarah_output=" << (*o.sarah_output == SarahOutput::last_iterate ? "last" : "uniform");
    }
    if (!o.mu.empty()) out << " mu=" << format_mu(o.mu);
    out << '\n';
  }
  out << "rounds = " << c.rounds << '\n';
  out << "seeds =";
  for (auto s : c.seeds) out << ' ' << s;
  out << '\n';
  out << "gap = " << (c.compute_gap ? "true" : "false") << '\n';
  out << "fstar_tol = " << format_double(c.fstar_tol) << '\n';
  out << "weighting = " << (c.weighting == Weighting::uniform ? "uniform" : "size_weighted") << '\n';
  if (!c.output.empty()) out << "output = " << c.output << '\n';
  return out.str();
}

inline AlgorithmEntry parse_algorithm_entry(const std::vector<std::string>& w) {
  if (w.size() < 2) throw ConfigError("algorithm needs a label and an algorithm name");
  AlgorithmEntry e{w[0], parse_algorithm(w[1]), {}};
  auto& o = e.overrides;
  for (std::size_t i = 2; i < w.size(); ++i) {
    const auto eq = w[i].find('=');
    if (eq == std::string::npos) throw ConfigError("algorithm option must be key=value: " + w[i]);
    const std::string key = w[i].substr(0, eq);
    const std::string val = w[i].substr(eq + 1);
    if (key == "eta") o.eta = detail::kv_double(val, key);
    else if (key == "m") o.m = detail::kv_uint(val, key);
    else if (key == "m_factor") o.m_factor = detail::kv_double(val, key);
    else if (key == "theta") o.theta = detail::kv_double(val, key);
    else if (key == "w") o.w = detail::kv_double(val, key);
    else if (key == "momentum") o.momentum = detail::kv_double(val, key);
    else if (key == "schedule") {
      if (val == "constant") o.schedule = MomentumSchedule::constant;
      else if (val == "t_over_t_plus_3") o.schedule = MomentumSchedule::t_over_t_plus_3;
      else throw ConfigError("unknown schedule " + val);
    } else if (key == "aggregate") o.aggregation = parse_aggregation(val);
    else if (key == "svrg_output") {
      if (val == "last") o.svrg_output = SvrgOutput::option_i_last;
      else if (val == "uniform") o.svrg_output = SvrgOutput::option_ii_uniform;
      else throw ConfigError("unknown svrg_output " + val);
    } else if (key == "sarah_output") {
      if (val == "last") o.sarah_output = SarahOutput::last_iterate;
      else if (val == "uniform") o.sarah_output = SarahOutput::uniform_random;
      else throw ConfigError("unknown sarah_output " + val);
    } else if (key == "mu") o.mu = parse_mu(val);
    else throw ConfigError("unknown algorithm option " + key);
  }
  return e;
}

inline ExperimentConfig parse_kv(std::istream& in) {
  ExperimentConfig c;
  c.seeds.clear();
  std::string line;
  std::string data_text;
  std::optional<std::uint64_t> data_seed;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string val = detail::trim(std::string_view(t).substr(eq + 1));
    const auto w = detail::words(val);
    if (key == "name") c.name = val;
    else if (key == "data") data_text = val;
    else if (key == "data_seed") data_seed = detail::kv_uint(val, key);
    else if (key == "loss") c.loss = parse_loss_kind(val);
    else if (key == "case") {
      if (w.size() != 3) throw ConfigError("case needs: id lambda workers");
      c.cases.push_back({w[0], detail::kv_double(w[1], key), detail::kv_uint(w[2], key)});
    } else if (key == "partition") {
      if (w.empty()) throw ConfigError("partition needs a mode");
      if (w[0] == "equal") c.partition = PartitionMode::equal;
      else if (w[0] == "fractions") c.partition = PartitionMode::fractions;
      else throw ConfigError("unknown partition mode " + w[0]);
      c.fractions.clear();
      for (std::size_t i = 1; i < w.size(); ++i) c.fractions.push_back(detail::kv_double(w[i], key));
    } else if (key == "algorithm") c.algorithms.push_back(parse_algorithm_entry(w));
    else if (key == "rounds") c.rounds = detail::kv_uint(val, key);
    else if (key == "seeds") {
      for (const auto& s : w) c.seeds.push_back(detail::kv_uint(s, key));
    } else if (key == "gap") {
      if (val != "true" && val != "false") throw ConfigError("gap must be true or false");
      c.compute_gap = val == "true";
    } else if (key == "fstar_tol") c.fstar_tol = detail::kv_double(val, key);
    else if (key == "weighting") {
      if (val == "uniform") c.weighting = Weighting::uniform;
      else if (val == "size_weighted") c.weighting = Weighting::size_weighted;
      else throw ConfigError("unknown weighting " + val);
    } else if (key == "output") c.output = val;
    else throw ConfigError("unknown config key '" + key + "'");
  }
  if (data_text.empty()) throw ConfigError("config is missing 'data'");
  c.data = parse_data_source(data_text, data_seed.value_or(1));
  if (c.seeds.empty()) c.seeds.push_back(1);
  return c;
}

}  // namespace dvr
