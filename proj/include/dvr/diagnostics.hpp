#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dvr/data_io.hpp"
#include "dvr/error.hpp"
#include "dvr/linalg.hpp"
#include "dvr/local_solvers.hpp"
#include "dvr/model.hpp"
#include "dvr/orchestrator.hpp"
#include "dvr/rng.hpp"

namespace dvr {

// ---------------------------------------------------------------------------
// Reference optimum
// ---------------------------------------------------------------------------

struct ReferenceSolution {
  ParamVector x_star;
  double f_star = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  std::string method;
};

struct ReferenceOptions {
  Weighting weighting = Weighting::uniform;
  std::size_t max_iterations = 1'000'000;
  ParamVector warm_start;  // empty means the zero vector
};

/// Minimizer of f = sum_k w_k f_k by Nesterov-accelerated full-gradient
/// descent with step 1/L and gradient-based adaptive restart, run until
/// |grad f| <= tol. Throws ConvergenceError at the iteration cap.
inline ReferenceSolution reference_optimum(const LossSpec& spec, const Dataset& ds,
                                           const Partition& partition, double tol,
                                           const ReferenceOptions& opts = {}) {
  if (!(tol > 0.0)) throw ConfigError("reference_optimum: tol must be > 0");
  const SmoothnessInfo smooth = smoothness_constants(spec, ds);
  if (!(smooth.sigma > 0.0)) throw ConfigError("reference_optimum needs a strongly convex loss");
  check_partition(ds, partition);

  const double step = 1.0 / smooth.L;
  ParamVector x = opts.warm_start.empty() ? ParamVector(ds.dim, 0.0) : opts.warm_start;
  if (x.size() != ds.dim) throw DimensionError("warm start dimension does not match dataset");
  ParamVector y = x;
  ParamVector x_next(ds.dim);
  ParamVector g = global_gradient(spec, ds, partition, x, opts.weighting);
  double gnorm = norm(g);
  std::size_t iter = 0;
  double momentum_t = 1.0;
  ParamVector gy = g;

  while (gnorm > tol) {
    if (iter >= opts.max_iterations) {
      throw ConvergenceError("reference_optimum: iteration cap reached with |grad| = " +
                                 std::to_string(gnorm),
                             gnorm);
    }
    ++iter;
    for (std::size_t j = 0; j < ds.dim; ++j) x_next[j] = y[j] - step * gy[j];
    // Restart when the momentum direction opposes descent.
    double restart_test = 0.0;
    for (std::size_t j = 0; j < ds.dim; ++j) restart_test += gy[j] * (x_next[j] - x[j]);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum_t * momentum_t));
    const double beta = (momentum_t - 1.0) / t_next;
    if (restart_test > 0.0) {
      momentum_t = 1.0;
      y = x;
    } else {
      for (std::size_t j = 0; j < ds.dim; ++j) y[j] = x_next[j] + beta * (x_next[j] - x[j]);
      x = x_next;
      momentum_t = t_next;
    }
    if (!all_finite(y)) throw ConvergenceError("reference_optimum diverged", gnorm);
    g = global_gradient(spec, ds, partition, x, opts.weighting);
    gnorm = norm(g);
    gy = (y == x) ? g : global_gradient(spec, ds, partition, y, opts.weighting);
  }
  ReferenceSolution sol;
  sol.f_star = global_objective(spec, ds, partition, x, opts.weighting);
  sol.x_star = std::move(x);
  sol.grad_norm = gnorm;
  sol.iterations = iter;
  sol.method = "accelerated_gradient_restart";
  return sol;
}

// ---------------------------------------------------------------------------
// Distributed smoothness
// ---------------------------------------------------------------------------

enum class SmoothnessMode { restricted, full };

/// Sampled lower bound on the deviation smoothness c_k of f - f_k.
struct SmoothnessEstimate {
  std::vector<double> c;
  SmoothnessMode mode = SmoothnessMode::full;
  std::size_t probes = 0;

  double max() const { return c.empty() ? 0.0 : *std::max_element(c.begin(), c.end()); }
};

struct ProbeOptions {
  Weighting weighting = Weighting::uniform;
  // Extra probe points (e.g. iterates of a recorded run) appended to the
  // sampled ones.
  std::vector<ParamVector> trajectory;
};

namespace detail {

// grad(f - f_k)(y) for every worker k.
inline std::vector<ParamVector> deviation_gradients(const LossSpec& spec, const Dataset& ds,
                                                    const Partition& partition,
                                                    std::span<const double> y,
                                                    Weighting weighting) {
  std::vector<ParamVector> local;
  local.reserve(partition.worker_count());
  for (const auto& set : partition.assignments) local.push_back(batch_gradient(spec, y, ds, set));
  const ParamVector global = combine_workers(local, worker_weights(partition, weighting));
  for (auto& gk : local) {
    for (std::size_t j = 0; j < gk.size(); ++j) gk[j] = global[j] - gk[j];
  }
  return local;
}

// Probe i is a pure function of (seed, i): even probes sit at a scale drawn
// log-uniformly from [1e-3, 1] * (|center| + 1), odd probes at unit distance.
inline ParamVector probe_offset(std::uint64_t seed, std::size_t i, std::size_t dim,
                                double center_norm) {
  Stream rng(hash_combine(mix64(seed), i));
  ParamVector u(dim);
  double nrm = 0.0;
  do {
    for (double& v : u) v = rng.normal();
    nrm = norm(u);
  } while (nrm == 0.0);
  double radius = 1.0;
  if (i % 2 == 0) radius = std::pow(10.0, -3.0 * rng.uniform()) * (center_norm + 1.0);
  for (double& v : u) v *= radius / nrm;
  return u;
}

}  // namespace detail

/// Estimates c_k by maximizing
///   |grad(f-f_k)(a) - grad(f-f_k)(b)| / |a - b|
/// over probes. Restricted mode fixes a = x_ref; full mode pairs b = a + offset
/// with a itself a probe around x_ref. The result never exceeds the true c_k.
inline SmoothnessEstimate estimate_c(const LossSpec& spec, const Dataset& ds,
                                     const Partition& partition, SmoothnessMode mode,
                                     std::span<const double> x_ref, std::size_t probes,
                                     std::uint64_t seed, const ProbeOptions& opts = {}) {
  check_partition(ds, partition);
  if (x_ref.size() != ds.dim) throw DimensionError("x_ref dimension does not match dataset");
  const std::size_t n = partition.worker_count();
  SmoothnessEstimate est;
  est.mode = mode;
  est.c.assign(n, 0.0);
  const double ref_norm = norm(x_ref);
  std::size_t used = 0;

  auto consider = [&](std::span<const double> a, const std::vector<ParamVector>& da,
                      std::span<const double> b) {
    const double dist = distance(a, b);
    if (!(dist > 0.0)) return;
    const auto db = detail::deviation_gradients(spec, ds, partition, b, opts.weighting);
    for (std::size_t k = 0; k < n; ++k) {
      est.c[k] = std::max(est.c[k], distance(da[k], db[k]) / dist);
    }
    ++used;
  };

  const auto d_ref = detail::deviation_gradients(spec, ds, partition, x_ref, opts.weighting);
  for (std::size_t i = 0; i < probes; ++i) {
    ParamVector b(x_ref.begin(), x_ref.end());
    axpy(1.0, detail::probe_offset(seed, 2 * i, ds.dim, ref_norm), b);
    if (mode == SmoothnessMode::restricted) {
      consider(x_ref, d_ref, b);
    } else {
      ParamVector a = b;
      axpy(1.0, detail::probe_offset(seed, 2 * i + 1, ds.dim, ref_norm), b);
      consider(a, detail::deviation_gradients(spec, ds, partition, a, opts.weighting), b);
    }
  }
  for (const auto& point : opts.trajectory) {
    if (point.size() != ds.dim) throw DimensionError("trajectory point dimension mismatch");
    consider(x_ref, d_ref, point);
  }
  if (used == 0) throw DataError("estimate_c: every probe was degenerate");
  est.probes = used;
  return est;
}

// ---------------------------------------------------------------------------
// Identity checks
// ---------------------------------------------------------------------------

struct IdentityCheck {
  std::string name;
  bool passed = false;
  bool skipped = false;
  double worst_residual = 0.0;
  double tolerance = 0.0;
  std::size_t evaluations = 0;
};

struct IdentityReport {
  std::vector<IdentityCheck> checks;
  SmoothnessEstimate c_full;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const IdentityCheck& c) { return c.passed || c.skipped; });
  }
};

struct IdentityOptions {
  std::size_t points = 20;           // random points for the SVRG estimator mean
  std::size_t sarah_steps = 10;      // trajectory length for the SARAH identity
  std::size_t bregman_pairs = 100;   // random pairs for the Bregman bound
  std::size_t probes = 200;          // probes for the c_k estimate
  double exact_tolerance = 1e-12;
  double slack = 0.10;               // relative slack on the estimated c_k
  double point_scale = 1.0;          // typical norm of random points
};

namespace detail {

inline ParamVector random_point(Stream& rng, std::size_t dim, double scale) {
  ParamVector x(dim);
  for (double& v : x) v = rng.normal() * scale / std::sqrt(static_cast<double>(dim));
  return x;
}

// (1/|M_k|) sum_z [grad_z(a) - grad_z(b)], enumerated sample by sample.
inline ParamVector enumerated_mean_difference(const LossSpec& spec, const Dataset& ds,
                                              std::span<const std::size_t> set,
                                              std::span<const double> a,
                                              std::span<const double> b) {
  ParamVector sum(ds.dim, 0.0), ga(ds.dim), gb(ds.dim);
  for (std::size_t i : set) {
    sample_gradient_into(spec, a, ds.samples[i], ga);
    sample_gradient_into(spec, b, ds.samples[i], gb);
    for (std::size_t j = 0; j < ds.dim; ++j) sum[j] += ga[j] - gb[j];
  }
  for (double& v : sum) v /= static_cast<double>(set.size());
  return sum;
}

}  // namespace detail

/// SVRG estimator mean: for random anchor and point y,
///   E_z[grad_z(y) - grad_z(anchor) + g] = grad f_k(y) - grad f_k(anchor) + g.
inline IdentityCheck check_svrg_estimator_mean(const LossSpec& spec, const Dataset& ds,
                                               const Partition& partition, std::uint64_t seed,
                                               const IdentityOptions& opts = {}) {
  IdentityCheck check{"svrg_estimator_mean", false, false, 0.0, opts.exact_tolerance, 0};
  Stream rng(hash_combine(mix64(seed), 0xa1));
  for (std::size_t p = 0; p < opts.points; ++p) {
    const ParamVector anchor = detail::random_point(rng, ds.dim, opts.point_scale);
    const ParamVector y = detail::random_point(rng, ds.dim, opts.point_scale);
    const ParamVector g = global_gradient(spec, ds, partition, anchor);
    for (const auto& set : partition.assignments) {
      ParamVector lhs = detail::enumerated_mean_difference(spec, ds, set, y, anchor);
      axpy(1.0, g, lhs);
      ParamVector rhs = difference(batch_gradient(spec, y, ds, set),
                                   batch_gradient(spec, anchor, ds, set));
      axpy(1.0, g, rhs);
      check.worst_residual = std::max(check.worst_residual, max_abs_difference(lhs, rhs));
      ++check.evaluations;
    }
  }
  check.passed = check.worst_residual <= check.tolerance;
  return check;
}

/// SARAH conditional expectation along a recorded trajectory:
///   E_z[v^{s+1} - v^s | y^{s+1}, y^s] = grad f_k(y^{s+1}) - grad f_k(y^s).
inline IdentityCheck check_sarah_conditional_expectation(const LossSpec& spec, const Dataset& ds,
                                                         const Partition& partition,
                                                         std::uint64_t seed,
                                                         const IdentityOptions& opts = {}) {
  IdentityCheck check{"sarah_conditional_expectation", false, false, 0.0, opts.exact_tolerance, 0};
  Stream rng(hash_combine(mix64(seed), 0xb2));
  const ParamVector anchor = detail::random_point(rng, ds.dim, opts.point_scale);
  const ParamVector g = global_gradient(spec, ds, partition, anchor);
  const SmoothnessInfo smooth = smoothness_constants(spec, ds);
  const SarahConfig cfg{1.0 / (2.0 * smooth.L), opts.sarah_steps, SarahOutput::last_iterate};
  for (std::size_t k = 0; k < partition.worker_count(); ++k) {
    const auto& set = partition.assignments[k];
    std::vector<ParamVector> ys;
    RoundInput in{anchor, g, set, hash_combine(seed, k), 0, k};
    sarah_local_update(spec, ds, in, cfg,
                       [&](std::size_t, std::span<const double> y, std::span<const double>) {
                         ys.emplace_back(y.begin(), y.end());
                       });
    for (std::size_t s = 0; s + 1 < ys.size(); ++s) {
      const ParamVector lhs = detail::enumerated_mean_difference(spec, ds, set, ys[s + 1], ys[s]);
      const ParamVector rhs = difference(batch_gradient(spec, ys[s + 1], ds, set),
                                         batch_gradient(spec, ys[s], ds, set));
      check.worst_residual = std::max(check.worst_residual, max_abs_difference(lhs, rhs));
      ++check.evaluations;
    }
  }
  check.passed = check.worst_residual <= check.tolerance;
  return check;
}

/// Bregman bound under distributed smoothness, per worker k:
///   E_z |grad_z(x1) - grad_z(x2)|^2 <= 2 L D_f(x1, x2) + c_k L |x1 - x2|^2
/// with c_k the sampled estimate inflated by the slack. The ratio lhs/rhs is
/// reported as the residual (passes when <= 1).
inline IdentityCheck check_bregman_bound(const LossSpec& spec, const Dataset& ds,
                                         const Partition& partition, const SmoothnessEstimate& c,
                                         std::uint64_t seed, const IdentityOptions& opts = {}) {
  IdentityCheck check{"bregman_bound", false, false, 0.0, 1.0, 0};
  const SmoothnessInfo smooth = smoothness_constants(spec, ds);
  if (spec.kind == LossKind::logistic_nonconvex) {
    check.skipped = true;
    return check;
  }
  Stream rng(hash_combine(mix64(seed), 0xc3));
  ParamVector ga(ds.dim), gb(ds.dim);
  for (std::size_t p = 0; p < opts.bregman_pairs; ++p) {
    const ParamVector x1 = detail::random_point(rng, ds.dim, opts.point_scale);
    const ParamVector x2 = detail::random_point(rng, ds.dim, opts.point_scale);
    const ParamVector g2 = global_gradient(spec, ds, partition, x2);
    const double bregman = global_objective(spec, ds, partition, x1) -
                           global_objective(spec, ds, partition, x2) -
                           dot(g2, difference(x1, x2));
    const double dist_sq = squared_distance(x1, x2);
    for (std::size_t k = 0; k < partition.worker_count(); ++k) {
      const auto& set = partition.assignments[k];
      double lhs = 0.0;
      for (std::size_t i : set) {
        sample_gradient_into(spec, x1, ds.samples[i], ga);
        sample_gradient_into(spec, x2, ds.samples[i], gb);
        lhs += squared_distance(ga, gb);
      }
      lhs /= static_cast<double>(set.size());
      const double rhs = 2.0 * smooth.L * bregman + (1.0 + opts.slack) * c.c[k] * smooth.L * dist_sq;
      // Tiny absolute floor absorbs rounding in the Bregman divergence.
      const double ratio = lhs / std::max(rhs + 1e-14, 1e-300);
      check.worst_residual = std::max(check.worst_residual, ratio);
      ++check.evaluations;
    }
  }
  check.passed = check.worst_residual <= 1.0;
  return check;
}

/// Runs all three checks; the Bregman bound uses a full-mode c_k estimate
/// around the origin.
inline IdentityReport verify_identities(const LossSpec& spec, const Dataset& ds,
                                        const Partition& partition, std::uint64_t seed,
                                        const IdentityOptions& opts = {}) {
  check_partition(ds, partition);
  IdentityReport report;
  report.checks.push_back(check_svrg_estimator_mean(spec, ds, partition, seed, opts));
  report.checks.push_back(check_sarah_conditional_expectation(spec, ds, partition, seed, opts));
  const ParamVector origin(ds.dim, 0.0);
  report.c_full = estimate_c(spec, ds, partition, SmoothnessMode::full, origin, opts.probes, seed);
  report.checks.push_back(check_bregman_bound(spec, ds, partition, report.c_full, seed, opts));
  return report;
}

}  // namespace dvr
