#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <future>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dvr/data_io.hpp"
#include "dvr/error.hpp"
#include "dvr/linalg.hpp"
#include "dvr/local_solvers.hpp"
#include "dvr/model.hpp"
#include "dvr/rng.hpp"

namespace dvr {

enum class AggregationRule { uniform_random_select, average };
enum class Algorithm { d_svrg, d_sarah, d_mig, d_rsvrg, d_gd, d_agd };

// How the global objective weighs the workers: f = (1/n) sum_k f_k, or the
// size-weighted sum_k (N_k / N) f_k.
enum class Weighting { uniform, size_weighted };

enum class Execution { sequential, concurrent };
enum class MomentumSchedule { constant, t_over_t_plus_3 };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::d_svrg: return "d_svrg";
    case Algorithm::d_sarah: return "d_sarah";
    case Algorithm::d_mig: return "d_mig";
    case Algorithm::d_rsvrg: return "d_rsvrg";
    case Algorithm::d_gd: return "d_gd";
    case Algorithm::d_agd: return "d_agd";
  }
  return "unknown";
}

inline Algorithm parse_algorithm(std::string_view s) {
  for (Algorithm a : {Algorithm::d_svrg, Algorithm::d_sarah, Algorithm::d_mig, Algorithm::d_rsvrg,
                      Algorithm::d_gd, Algorithm::d_agd}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown algorithm '" + std::string(s) + "'");
}

inline std::string_view to_string(AggregationRule r) {
  return r == AggregationRule::average ? "average" : "select";
}

inline AggregationRule parse_aggregation(std::string_view s) {
  if (s == "select" || s == "uniform_random_select") return AggregationRule::uniform_random_select;
  if (s == "average") return AggregationRule::average;
  throw ConfigError("unknown aggregation rule '" + std::string(s) + "'");
}

inline bool is_stochastic(Algorithm a) noexcept {
  return a != Algorithm::d_gd && a != Algorithm::d_agd;
}

struct GdConfig {
  double eta = 0.0;
};

struct AgdConfig {
  double eta = 0.0;
  double momentum = 0.0;
  MomentumSchedule schedule = MomentumSchedule::constant;
};

using SolverConfig = std::variant<SvrgConfig, SarahConfig, MigConfig, GdConfig, AgdConfig>;

struct RunConfig {
  Algorithm algorithm = Algorithm::d_svrg;
  SolverConfig solver;
  // Per-worker mu for d_svrg/d_rsvrg; empty means every worker uses solver.mu.
  std::vector<double> worker_mu;
  AggregationRule aggregation = AggregationRule::uniform_random_select;
  std::size_t rounds = 1;
  std::uint64_t master_seed = 0;
  ParamVector initial;  // empty means the zero vector
  Weighting weighting = Weighting::uniform;
  Execution execution = Execution::concurrent;
  bool keep_snapshots = false;
};

/// Metrics of x~^t after outer round t (t = 0 is the initial point).
struct RoundRecord {
  std::size_t round = 0;
  std::uint64_t comm_rounds = 0;
  std::vector<std::uint64_t> grad_evals;  // cumulative, per worker
  double objective = 0.0;
  double grad_norm_sq = 0.0;
  bool diverged = false;
  ParamVector snapshot;  // only with RunConfig::keep_snapshots

  std::uint64_t max_grad_evals() const {
    return grad_evals.empty() ? 0 : *std::max_element(grad_evals.begin(), grad_evals.end());
  }
};

struct Trace {
  Algorithm algorithm = Algorithm::d_svrg;
  std::vector<RoundRecord> records;
  bool diverged = false;
  std::optional<std::size_t> divergence_round;
  std::string divergence_message;
  ParamVector final_point;
};

// ---------------------------------------------------------------------------
// Global objective
// ---------------------------------------------------------------------------

inline std::vector<double> worker_weights(const Partition& partition, Weighting weighting) {
  const std::size_t n = partition.worker_count();
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  if (weighting == Weighting::size_weighted) {
    const auto total = static_cast<double>(partition.total());
    for (std::size_t k = 0; k < n; ++k) {
      w[k] = static_cast<double>(partition.assignments[k].size()) / total;
    }
  }
  return w;
}

inline void check_partition(const Dataset& ds, const Partition& partition) {
  if (partition.worker_count() == 0) throw ConfigError("partition has no workers");
  if (partition.total() != ds.size()) throw ConfigError("partition does not match dataset size");
  for (const auto& set : partition.assignments) {
    if (set.empty()) throw ConfigError("partition contains an empty worker set");
    if (set.back() >= ds.size()) throw ConfigError("partition index out of range");
  }
}

/// Weighted combination of per-worker vectors, reduced in worker order.
inline ParamVector combine_workers(const std::vector<ParamVector>& parts,
                                   std::span<const double> weights) {
  ParamVector out(parts.front().size(), 0.0);
  for (std::size_t k = 0; k < parts.size(); ++k) axpy(weights[k], parts[k], out);
  return out;
}

/// grad f(x) = sum_k w_k grad f_k(x), the quantity the parameter server
/// assembles from the workers' local gradients.
inline ParamVector global_gradient(const LossSpec& spec, const Dataset& ds,
                                   const Partition& partition, std::span<const double> x,
                                   Weighting weighting = Weighting::uniform) {
  if (x.size() != ds.dim) throw DimensionError("parameter dimension does not match dataset");
  std::vector<ParamVector> parts;
  parts.reserve(partition.worker_count());
  for (const auto& set : partition.assignments) parts.push_back(batch_gradient(spec, x, ds, set));
  return combine_workers(parts, worker_weights(partition, weighting));
}

inline double global_objective(const LossSpec& spec, const Dataset& ds, const Partition& partition,
                               std::span<const double> x, Weighting weighting = Weighting::uniform) {
  const auto w = worker_weights(partition, weighting);
  double f = 0.0;
  for (std::size_t k = 0; k < partition.worker_count(); ++k) {
    f += w[k] * batch_loss(spec, x, ds, partition.assignments[k]);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Parameter server
// ---------------------------------------------------------------------------

/// Combines the workers' local outputs into the next anchor.
inline ParamVector aggregate(AggregationRule rule, const std::vector<ParamVector>& outputs,
                             Stream& ps_stream) {
  if (outputs.empty()) throw ConfigError("aggregate: no worker outputs");
  for (const auto& o : outputs) require_same_size(o, outputs.front());
  if (rule == AggregationRule::uniform_random_select) {
    return outputs[ps_stream.index(outputs.size())];
  }
  const std::vector<double> w(outputs.size(), 1.0 / static_cast<double>(outputs.size()));
  return combine_workers(outputs, w);
}

inline AggregationRule default_aggregation(Algorithm a) {
  return a == Algorithm::d_mig ? AggregationRule::average : AggregationRule::uniform_random_select;
}

/// Default parameters of each algorithm:
///   D-SVRG / D-SARAH: eta = 1/(2L); D-MiG: theta = 1/2, eta = 1/(3 theta L),
///   w = 1 + eta sigma; D-GD: eta = 1/L; D-AGD: eta = 1/L with momentum
///   (sqrt(kappa)-1)/(sqrt(kappa)+1); inner loop m = round(2N/n).
/// D-SARAH returns its last iterate when sigma = 0 (nonconvex losses).
inline SolverConfig default_parameters(Algorithm algorithm, const SmoothnessInfo& smooth,
                                       std::size_t sample_count, std::size_t workers) {
  if (!(smooth.L > 0.0)) throw ConfigError("smoothness constant L must be positive");
  if (workers == 0) throw ConfigError("worker count must be positive");
  const auto m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(2.0 * static_cast<double>(sample_count) /
                                               static_cast<double>(workers))));
  auto require_sigma = [&](std::string_view who) {
    if (!(smooth.sigma > 0.0)) {
      throw ConfigError(std::string(who) + " defaults need sigma > 0");
    }
  };
  switch (algorithm) {
    case Algorithm::d_svrg:
    case Algorithm::d_rsvrg:
      return SvrgConfig{1.0 / (2.0 * smooth.L), m, SvrgOutput::option_ii_uniform, 0.0};
    case Algorithm::d_sarah:
      return SarahConfig{1.0 / (2.0 * smooth.L), m,
                         smooth.sigma > 0.0 ? SarahOutput::uniform_random
                                            : SarahOutput::last_iterate};
    case Algorithm::d_mig: {
      require_sigma("d_mig");
      const double theta = 0.5;
      const double eta = 1.0 / (3.0 * theta * smooth.L);
      return MigConfig{eta, theta, 1.0 + eta * smooth.sigma, m};
    }
    case Algorithm::d_gd:
      return GdConfig{1.0 / smooth.L};
    case Algorithm::d_agd: {
      require_sigma("d_agd");
      const double rk = std::sqrt(smooth.L / smooth.sigma);
      return AgdConfig{1.0 / smooth.L, (rk - 1.0) / (rk + 1.0), MomentumSchedule::constant};
    }
  }
  throw ConfigError("unknown algorithm");
}

namespace detail {

inline void check_solver_matches(Algorithm a, const SolverConfig& s) {
  bool ok = false;
  switch (a) {
    case Algorithm::d_svrg:
    case Algorithm::d_rsvrg: ok = std::holds_alternative<SvrgConfig>(s); break;
    case Algorithm::d_sarah: ok = std::holds_alternative<SarahConfig>(s); break;
    case Algorithm::d_mig: ok = std::holds_alternative<MigConfig>(s); break;
    case Algorithm::d_gd: ok = std::holds_alternative<GdConfig>(s); break;
    case Algorithm::d_agd: ok = std::holds_alternative<AgdConfig>(s); break;
  }
  if (!ok) throw ConfigError("solver config does not match algorithm " + std::string(to_string(a)));
}

class Recorder {
 public:
  Recorder(const LossSpec& spec, const Dataset& ds, const Partition& partition,
           const RunConfig& cfg, Trace& trace)
      : spec_(spec), ds_(ds), partition_(partition), cfg_(cfg), trace_(trace),
        evals_(partition.worker_count(), 0) {}

  void add_batch_evals() {
    for (std::size_t k = 0; k < evals_.size(); ++k) evals_[k] += partition_.assignments[k].size();
  }
  void add_evals(std::size_t k, std::uint64_t n) { evals_[k] += n; }
  void add_comm(std::uint64_t n) { comm_ += n; }

  void record(std::size_t t, std::span<const double> x, std::span<const double> grad) {
    RoundRecord r;
    r.round = t;
    r.comm_rounds = comm_;
    r.grad_evals = evals_;
    r.objective = global_objective(spec_, ds_, partition_, x, cfg_.weighting);
    r.grad_norm_sq = squared_norm(grad);
    if (cfg_.keep_snapshots) r.snapshot.assign(x.begin(), x.end());
    trace_.records.push_back(std::move(r));
  }

  void record_divergence(std::size_t t, const std::string& message) {
    RoundRecord r;
    r.round = t;
    r.comm_rounds = comm_;
    r.grad_evals = evals_;
    r.objective = std::numeric_limits<double>::quiet_NaN();
    r.grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
    r.diverged = true;
    trace_.records.push_back(std::move(r));
    trace_.diverged = true;
    trace_.divergence_round = t;
    trace_.divergence_message = message;
  }

 private:
  const LossSpec& spec_;
  const Dataset& ds_;
  const Partition& partition_;
  const RunConfig& cfg_;
  Trace& trace_;
  std::vector<std::uint64_t> evals_;
  std::uint64_t comm_ = 0;
};

template <typename Fn>
void for_each_worker(std::size_t n, Execution mode, Fn&& fn) {
  if (mode == Execution::sequential || n == 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::future<void>> jobs;
  jobs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) jobs.push_back(std::async(std::launch::async, [&fn, k] { fn(k); }));
  for (auto& j : jobs) j.wait();
}

inline void run_deterministic(const LossSpec& spec, const Dataset& ds, const Partition& partition,
                              const RunConfig& cfg, Trace& trace) {
  Recorder rec(spec, ds, partition, cfg, trace);
  ParamVector x = cfg.initial.empty() ? ParamVector(ds.dim, 0.0) : cfg.initial;
  ParamVector grad = global_gradient(spec, ds, partition, x, cfg.weighting);
  rec.record(0, x, grad);

  const bool accelerated = cfg.algorithm == Algorithm::d_agd;
  const double eta = accelerated ? std::get<AgdConfig>(cfg.solver).eta
                                 : std::get<GdConfig>(cfg.solver).eta;
  if (!(eta > 0.0)) throw ConfigError("gradient step size must be > 0");
  ParamVector x_prev = x;
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    ParamVector step_grad;
    ParamVector base = x;
    if (accelerated && t > 0) {
      const auto& agd = std::get<AgdConfig>(cfg.solver);
      const double beta = agd.schedule == MomentumSchedule::constant
                              ? agd.momentum
                              : static_cast<double>(t) / static_cast<double>(t + 3);
      for (std::size_t j = 0; j < ds.dim; ++j) base[j] = x[j] + beta * (x[j] - x_prev[j]);
      step_grad = global_gradient(spec, ds, partition, base, cfg.weighting);
    } else {
      step_grad = grad;
    }
    rec.add_batch_evals();
    rec.add_comm(1);
    x_prev = x;
    axpy(-eta, step_grad, base);
    x = std::move(base);
    if (!all_finite(x)) {
      rec.record_divergence(t + 1, "non-finite iterate at round " + std::to_string(t));
      break;
    }
    grad = global_gradient(spec, ds, partition, x, cfg.weighting);
    rec.record(t + 1, x, grad);
  }
  trace.final_point = std::move(x);
}

inline void run_stochastic(const LossSpec& spec, const Dataset& ds, const Partition& partition,
                           const RunConfig& cfg, Trace& trace) {
  const std::size_t n = partition.worker_count();
  std::vector<double> mu(n, 0.0);
  if (const auto* svrg = std::get_if<SvrgConfig>(&cfg.solver)) {
    if (!cfg.worker_mu.empty() && cfg.worker_mu.size() != n) {
      throw ConfigError("worker_mu must have one entry per worker");
    }
    for (std::size_t k = 0; k < n; ++k) mu[k] = cfg.worker_mu.empty() ? svrg->mu : cfg.worker_mu[k];
  }
  std::visit([](const auto& c) {
    if constexpr (requires { validate(c); }) validate(c);
  }, cfg.solver);

  Recorder rec(spec, ds, partition, cfg, trace);
  ParamVector x = cfg.initial.empty() ? ParamVector(ds.dim, 0.0) : cfg.initial;
  // Initialization: one gradient exchange.
  ParamVector grad = global_gradient(spec, ds, partition, x, cfg.weighting);
  rec.add_batch_evals();
  rec.add_comm(1);
  rec.record(0, x, grad);

  std::vector<MigWorkerState> mig_states(n);
  std::vector<ParamVector> outputs(n);
  std::vector<std::uint64_t> used(n, 0);
  std::vector<std::exception_ptr> errors(n);

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    for_each_worker(n, cfg.execution, [&](std::size_t k) {
      try {
        RoundInput in{x, grad, partition.assignments[k], stream_seed(cfg.master_seed, t, k), t, k};
        switch (cfg.algorithm) {
          case Algorithm::d_svrg:
          case Algorithm::d_rsvrg: {
            SvrgConfig c = std::get<SvrgConfig>(cfg.solver);
            c.mu = mu[k];
            auto r = svrg_local_update(spec, ds, in, c);
            outputs[k] = std::move(r.output);
            used[k] = r.grad_evals;
            break;
          }
          case Algorithm::d_sarah: {
            auto r = sarah_local_update(spec, ds, in, std::get<SarahConfig>(cfg.solver));
            outputs[k] = std::move(r.output);
            used[k] = r.grad_evals;
            break;
          }
          case Algorithm::d_mig: {
            auto r = mig_local_update(spec, ds, in, std::get<MigConfig>(cfg.solver), mig_states[k]);
            outputs[k] = std::move(r.output);
            mig_states[k] = std::move(r.state);
            used[k] = r.grad_evals;
            break;
          }
          default: break;
        }
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });

    std::optional<std::string> divergence;
    for (std::size_t k = 0; k < n && !divergence; ++k) {
      if (!errors[k]) continue;
      try {
        std::rethrow_exception(errors[k]);
      } catch (const DivergenceError& e) {
        divergence = e.what();
      }
    }
    for (std::size_t k = 0; k < n; ++k) rec.add_evals(k, used[k]);
    if (divergence) {
      rec.record_divergence(t + 1, *divergence);
      break;
    }

    Stream ps(stream_seed(cfg.master_seed, t, kParameterServerStream));
    x = aggregate(cfg.aggregation, outputs, ps);
    if (!all_finite(x)) {
      rec.record_divergence(t + 1, "non-finite aggregate at round " + std::to_string(t));
      break;
    }
    grad = global_gradient(spec, ds, partition, x, cfg.weighting);
    rec.add_batch_evals();
    rec.add_comm(2);
    rec.record(t + 1, x, grad);
  }
  trace.final_point = std::move(x);
}

}  // namespace detail

/// Runs the parameter-server loop for `cfg.rounds` outer rounds.
///
/// Stochastic algorithms: one initial gradient exchange, then per round every
/// worker runs its local update (stream seeded by (master_seed, t, k)), the
/// server aggregates (own stream (master_seed, t, ps)), and a second exchange
/// assembles grad f at the new anchor. D-GD / D-AGD take one global gradient
/// step per round. A worker divergence ends the trace with a flagged record.
inline Trace run(const LossSpec& spec, const Dataset& ds, const Partition& partition,
                 const RunConfig& cfg) {
  check_partition(ds, partition);
  detail::check_solver_matches(cfg.algorithm, cfg.solver);
  if (!cfg.initial.empty() && cfg.initial.size() != ds.dim) {
    throw DimensionError("initial point dimension does not match dataset");
  }
  Trace trace;
  trace.algorithm = cfg.algorithm;
  if (is_stochastic(cfg.algorithm)) {
    detail::run_stochastic(spec, ds, partition, cfg, trace);
  } else {
    detail::run_deterministic(spec, ds, partition, cfg, trace);
  }
  return trace;
}

}  // namespace dvr
