#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dvr/error.hpp"
#include "dvr/linalg.hpp"
#include "dvr/model.hpp"
#include "dvr/rng.hpp"

namespace dvr {

enum class SvrgOutput { option_i_last, option_ii_uniform };
enum class SarahOutput { uniform_random, last_iterate };

struct SvrgConfig {
  double eta = 0.0;
  std::size_t m = 0;
  SvrgOutput output = SvrgOutput::option_ii_uniform;
  double mu = 0.0;  // pull toward the anchor; 0 gives plain SVRG
};

struct SarahConfig {
  double eta = 0.0;
  std::size_t m = 0;
  SarahOutput output = SarahOutput::uniform_random;
};

struct MigConfig {
  double eta = 0.0;
  double theta = 0.5;
  double w = 1.0;
  std::size_t m = 0;
};

/// Momentum iterate carried by a MiG worker from one round to the next.
struct MigWorkerState {
  ParamVector x_momentum;
  bool initialized = false;
};

/// Everything a worker receives from the parameter server for one round.
struct RoundInput {
  std::span<const double> anchor;
  std::span<const double> global_gradient;
  std::span<const std::size_t> worker_samples;
  std::uint64_t stream_seed = 0;
  std::size_t round = 0;
  std::size_t worker = 0;
};

struct LocalResult {
  ParamVector output;
  std::uint64_t grad_evals = 0;
};

struct MigResult {
  ParamVector output;
  MigWorkerState state;
  std::uint64_t grad_evals = 0;
};

/// Optional per-step hook: (s, y^s, v^s) in the order the kernel forms them.
using InnerObserver =
    std::function<void(std::size_t, std::span<const double>, std::span<const double>)>;

inline void validate(const SvrgConfig& cfg) {
  if (!(cfg.eta > 0.0) || !std::isfinite(cfg.eta)) throw ConfigError("svrg: eta must be > 0");
  if (cfg.m < 1) throw ConfigError("svrg: m must be >= 1");
  if (!(cfg.mu >= 0.0) || !std::isfinite(cfg.mu)) throw ConfigError("svrg: mu must be >= 0");
}

inline void validate(const SarahConfig& cfg) {
  if (!(cfg.eta > 0.0) || !std::isfinite(cfg.eta)) throw ConfigError("sarah: eta must be > 0");
  if (cfg.m < 1) throw ConfigError("sarah: m must be >= 1");
}

inline void validate(const MigConfig& cfg) {
  if (!(cfg.eta > 0.0) || !std::isfinite(cfg.eta)) throw ConfigError("mig: eta must be > 0");
  if (!(cfg.theta > 0.0 && cfg.theta <= 1.0)) throw ConfigError("mig: theta must be in (0, 1]");
  if (!(cfg.w >= 1.0) || !std::isfinite(cfg.w)) throw ConfigError("mig: w must be >= 1");
  if (cfg.m < 1) throw ConfigError("mig: m must be >= 1");
}

namespace detail {

inline void check_round_input(const Dataset& ds, const RoundInput& in) {
  if (in.worker_samples.empty()) throw DataError("worker sample set is empty");
  if (in.anchor.size() != ds.dim || in.global_gradient.size() != ds.dim) {
    throw DimensionError("round input dimension does not match dataset");
  }
}

// Index of the output iterate that a kernel will draw after `m` sample draws
// from `rng`, found on a copy so the real stream is consumed in order.
inline std::size_t peek_output_draw(const Stream& rng, std::size_t pool, std::size_t m,
                                    std::size_t choices) {
  Stream probe = rng;
  for (std::size_t s = 0; s < m; ++s) probe.index(pool);
  return probe.index(choices);
}

}  // namespace detail

/// One round of SVRG (optionally regularized) on a worker's local data.
///
/// Inner step s: v = grad_z(y) - grad_z(anchor) + g + mu (y - anchor),
/// y <- y - eta v, with z uniform (with replacement) over the worker's
/// samples. Option I returns y^m, option II a uniform draw from y^1..y^m taken
/// from the same stream after the m sample draws.
inline LocalResult svrg_local_update(const LossSpec& spec, const Dataset& ds,
                                     const RoundInput& in, const SvrgConfig& cfg,
                                     const InnerObserver& observe = {}) {
  validate(cfg);
  detail::check_round_input(ds, in);
  const std::size_t d = ds.dim;
  const std::size_t pool = in.worker_samples.size();
  Stream rng(in.stream_seed);

  const bool uniform = cfg.output == SvrgOutput::option_ii_uniform;
  const std::size_t keep = uniform ? detail::peek_output_draw(rng, pool, cfg.m, cfg.m) + 1 : cfg.m;

  ParamVector y(in.anchor.begin(), in.anchor.end());
  ParamVector gy(d), ga(d), v(d), chosen;
  for (std::size_t s = 0; s < cfg.m; ++s) {
    const Sample& z = ds.samples[in.worker_samples[rng.index(pool)]];
    sample_gradient_into(spec, y, z, gy);
    sample_gradient_into(spec, in.anchor, z, ga);
    for (std::size_t j = 0; j < d; ++j) {
      v[j] = (gy[j] - ga[j]) + in.global_gradient[j];
      if (cfg.mu != 0.0) v[j] += cfg.mu * (y[j] - in.anchor[j]);
    }
    if (observe) observe(s, y, v);
    axpy(-cfg.eta, v, y);
    if (!all_finite(y)) throw DivergenceError(in.round, in.worker, s);
    if (s + 1 == keep) chosen = y;
  }
  if (uniform) {
    rng.index(cfg.m);
    return {std::move(chosen), 2 * cfg.m};
  }
  return {std::move(y), 2 * cfg.m};
}

/// One round of SARAH on a worker's local data.
///
/// y^0 = anchor, v^0 = g; then y^{s+1} = y^s - eta v^s and
/// v^{s+1} = grad_z(y^{s+1}) - grad_z(y^s) + v^s with a fresh z per step.
/// `uniform_random` returns a uniform draw from y^0..y^{m-1} (taken after the
/// m sample draws); `last_iterate` returns y^m.
inline LocalResult sarah_local_update(const LossSpec& spec, const Dataset& ds,
                                      const RoundInput& in, const SarahConfig& cfg,
                                      const InnerObserver& observe = {}) {
  validate(cfg);
  detail::check_round_input(ds, in);
  const std::size_t d = ds.dim;
  const std::size_t pool = in.worker_samples.size();
  Stream rng(in.stream_seed);

  const bool uniform = cfg.output == SarahOutput::uniform_random;
  const std::size_t keep = uniform ? detail::peek_output_draw(rng, pool, cfg.m, cfg.m) : cfg.m;

  ParamVector y(in.anchor.begin(), in.anchor.end());
  ParamVector v(in.global_gradient.begin(), in.global_gradient.end());
  ParamVector y_prev(d), g_new(d), g_old(d), chosen;
  if (keep == 0) chosen = y;
  for (std::size_t s = 0; s < cfg.m; ++s) {
    if (observe) observe(s, y, v);
    y_prev = y;
    axpy(-cfg.eta, v, y);
    if (!all_finite(y)) throw DivergenceError(in.round, in.worker, s);
    if (s + 1 == keep) chosen = y;
    const Sample& z = ds.samples[in.worker_samples[rng.index(pool)]];
    sample_gradient_into(spec, y, z, g_new);
    sample_gradient_into(spec, y_prev, z, g_old);
    for (std::size_t j = 0; j < d; ++j) v[j] = (g_new[j] - g_old[j]) + v[j];
    if (!all_finite(v)) throw DivergenceError(in.round, in.worker, s);
  }
  if (uniform) {
    rng.index(cfg.m);
    return {std::move(chosen), 2 * cfg.m};
  }
  return {std::move(y), 2 * cfg.m};
}

/// Effective weights of the coupled iterates y^1..y^m in the MiG output, as
/// produced by the incremental normalized averaging used by the kernel.
/// Mathematically w^j / sum_i w^i.
inline std::vector<double> mig_output_weights(double w, std::size_t m) {
  std::vector<double> weights(m, 0.0);
  double total = 0.0;  // sum_{i<=j} w^{i-j}
  for (std::size_t j = 0; j < m; ++j) {
    total = total / w + 1.0;
    const double share = 1.0 / total;
    for (std::size_t i = 0; i < j; ++i) weights[i] *= (1.0 - share);
    weights[j] = share;
  }
  return weights;
}

/// One round of MiG on a worker's local data.
///
/// x^0 is the anchor in the first round and the carried momentum iterate
/// afterwards. Inner step s: y^s = (1-theta) anchor + theta x^s,
/// v = grad_z(y^s) - grad_z(anchor) + g, x^{s+1} = x^s - eta v. The output is
/// the w-geometric average of y^{j+1}, j = 0..m-1, kept as a running mean so
/// w^m never has to be formed.
inline MigResult mig_local_update(const LossSpec& spec, const Dataset& ds, const RoundInput& in,
                                  const MigConfig& cfg, const MigWorkerState& state,
                                  const InnerObserver& observe = {}) {
  validate(cfg);
  detail::check_round_input(ds, in);
  const std::size_t d = ds.dim;
  if (state.initialized && state.x_momentum.size() != d) {
    throw DimensionError("MiG worker state dimension does not match dataset");
  }
  const std::size_t pool = in.worker_samples.size();
  Stream rng(in.stream_seed);

  ParamVector x = state.initialized ? state.x_momentum
                                    : ParamVector(in.anchor.begin(), in.anchor.end());
  ParamVector y(d), gy(d), ga(d), v(d), avg(d, 0.0);
  double total = 0.0;
  const double theta = cfg.theta;
  for (std::size_t s = 0; s < cfg.m; ++s) {
    for (std::size_t j = 0; j < d; ++j) y[j] = (1.0 - theta) * in.anchor[j] + theta * x[j];
    const Sample& z = ds.samples[in.worker_samples[rng.index(pool)]];
    sample_gradient_into(spec, y, z, gy);
    sample_gradient_into(spec, in.anchor, z, ga);
    for (std::size_t j = 0; j < d; ++j) v[j] = (gy[j] - ga[j]) + in.global_gradient[j];
    if (observe) observe(s, y, v);
    axpy(-cfg.eta, v, x);
    if (!all_finite(x)) throw DivergenceError(in.round, in.worker, s);

    total = total / cfg.w + 1.0;
    const double share = 1.0 / total;
    for (std::size_t j = 0; j < d; ++j) {
      const double coupled = (1.0 - theta) * in.anchor[j] + theta * x[j];
      avg[j] += (coupled - avg[j]) * share;
    }
  }
  MigResult result;
  result.output = std::move(avg);
  result.state = MigWorkerState{std::move(x), true};
  result.grad_evals = 2 * cfg.m;
  return result;
}

/// Local batch gradient of f_k at x; costs |M_k| sample gradients.
inline LocalResult full_local_gradient(const LossSpec& spec, const Dataset& ds,
                                       std::span<const std::size_t> worker_samples,
                                       std::span<const double> x) {
  return {batch_gradient(spec, x, ds, worker_samples), worker_samples.size()};
}

}  // namespace dvr
