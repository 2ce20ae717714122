#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvr/error.hpp"
#include "dvr/linalg.hpp"

namespace dvr {

struct Feature {
  std::uint32_t index = 0;  // zero-based
  double value = 0.0;

  friend bool operator==(const Feature&, const Feature&) = default;
};

/// One data point z = (a, b). Features are sparse and sorted by index.
///
/// For the quadratic loss the features hold the sample's target vector and
/// `curvature` scales the sample's Hessian; logistic losses ignore
/// `curvature`.
struct Sample {
  std::vector<Feature> features;
  double label = 1.0;
  double curvature = 1.0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t dim = 0;
  std::string name;

  std::size_t size() const noexcept { return samples.size(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class LossKind { logistic_l2, logistic_nonconvex, quadratic };

inline std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::logistic_l2: return "logistic_l2";
    case LossKind::logistic_nonconvex: return "logistic_ncvx";
    case LossKind::quadratic: return "quadratic";
  }
  return "unknown";
}

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "logistic_l2") return LossKind::logistic_l2;
  if (s == "logistic_ncvx" || s == "logistic_nonconvex") return LossKind::logistic_nonconvex;
  if (s == "quadratic") return LossKind::quadratic;
  throw ConfigError("unknown loss kind '" + std::string(s) + "'");
}

inline bool is_logistic(LossKind kind) noexcept { return kind != LossKind::quadratic; }

/// Sample loss in force for an experiment.
///   logistic_l2:        log(1 + exp(-b a'x)) + (lambda/2) |x|^2
///   logistic_nonconvex: log(1 + exp(-b a'x)) + lambda sum_j x_j^2 / (1 + x_j^2)
///   quadratic:          (h/2) |x - a|^2, h = sample curvature
struct LossSpec {
  LossKind kind = LossKind::logistic_l2;
  double lambda = 0.0;

  LossSpec() = default;
  LossSpec(LossKind k, double l) : kind(k), lambda(l) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw ConfigError("lambda must be finite and nonnegative");
    }
  }
};

struct SmoothnessInfo {
  double L = 0.0;
  double sigma = 0.0;

  std::optional<double> kappa() const {
    if (sigma > 0.0) return L / sigma;
    return std::nullopt;
  }
};

namespace detail {

inline void check_features(const Sample& z, std::size_t dim) {
  if (!z.features.empty() && z.features.back().index >= dim) {
    throw DimensionError("feature index " + std::to_string(z.features.back().index) +
                         " out of range for dimension " + std::to_string(dim));
  }
}

inline double sparse_dot(const Sample& z, std::span<const double> x) {
  double s = 0.0;
  for (const Feature& f : z.features) s += f.value * x[f.index];
  return s;
}

// log(1 + exp(-t)) without overflow.
inline double log1p_exp_neg(double t) {
  if (t >= 0.0) return std::log1p(std::exp(-t));
  return -t + std::log1p(std::exp(t));
}

// 1 / (1 + exp(t)), i.e. sigmoid(-t).
inline double sigmoid_neg(double t) {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

}  // namespace detail

inline double sample_loss(const LossSpec& spec, std::span<const double> x, const Sample& z) {
  detail::check_features(z, x.size());
  switch (spec.kind) {
    case LossKind::logistic_l2: {
      const double margin = z.label * detail::sparse_dot(z, x);
      return detail::log1p_exp_neg(margin) + 0.5 * spec.lambda * squared_norm(x);
    }
    case LossKind::logistic_nonconvex: {
      const double margin = z.label * detail::sparse_dot(z, x);
      double reg = 0.0;
      for (double v : x) {
        const double sq = v * v;
        reg += sq / (1.0 + sq);
      }
      return detail::log1p_exp_neg(margin) + spec.lambda * reg;
    }
    case LossKind::quadratic: {
      double s = 0.0;
      auto it = z.features.begin();
      for (std::size_t j = 0; j < x.size(); ++j) {
        double target = 0.0;
        if (it != z.features.end() && it->index == j) target = (it++)->value;
        const double d = x[j] - target;
        s += d * d;
      }
      return 0.5 * z.curvature * s;
    }
  }
  return 0.0;
}

/// Writes the gradient of the sample loss at x into `out` (overwritten).
inline void sample_gradient_into(const LossSpec& spec, std::span<const double> x,
                                 const Sample& z, std::span<double> out) {
  if (out.size() != x.size()) throw DimensionError("gradient buffer size mismatch");
  detail::check_features(z, x.size());
  switch (spec.kind) {
    case LossKind::logistic_l2: {
      for (std::size_t j = 0; j < x.size(); ++j) out[j] = spec.lambda * x[j];
      const double coef = -z.label * detail::sigmoid_neg(z.label * detail::sparse_dot(z, x));
      for (const Feature& f : z.features) out[f.index] += coef * f.value;
      return;
    }
    case LossKind::logistic_nonconvex: {
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double q = 1.0 + x[j] * x[j];
        out[j] = spec.lambda * 2.0 * x[j] / (q * q);
      }
      const double coef = -z.label * detail::sigmoid_neg(z.label * detail::sparse_dot(z, x));
      for (const Feature& f : z.features) out[f.index] += coef * f.value;
      return;
    }
    case LossKind::quadratic: {
      for (std::size_t j = 0; j < x.size(); ++j) out[j] = z.curvature * x[j];
      for (const Feature& f : z.features) out[f.index] -= z.curvature * f.value;
      return;
    }
  }
}

inline ParamVector sample_gradient(const LossSpec& spec, std::span<const double> x,
                                   const Sample& z) {
  ParamVector g(x.size());
  sample_gradient_into(spec, x, z, g);
  return g;
}

namespace detail {

inline std::vector<std::size_t> sorted_indices(std::span<const std::size_t> indices) {
  std::vector<std::size_t> sorted(indices.begin(), indices.end());
  if (!std::is_sorted(sorted.begin(), sorted.end())) std::sort(sorted.begin(), sorted.end());
  return sorted;
}

}  // namespace detail

/// Mean of sample gradients, summed in the order given.
inline ParamVector batch_gradient(const LossSpec& spec, std::span<const double> x,
                                  std::span<const Sample> samples) {
  if (samples.empty()) throw DataError("batch_gradient: empty sample set");
  ParamVector sum(x.size(), 0.0);
  ParamVector g(x.size());
  for (const Sample& z : samples) {
    sample_gradient_into(spec, x, z, g);
    axpy(1.0, g, sum);
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (double& v : sum) v *= inv;
  return sum;
}

/// Mean of sample gradients over `indices` into `dataset`, summed in
/// ascending index order regardless of the order given.
inline ParamVector batch_gradient(const LossSpec& spec, std::span<const double> x,
                                  const Dataset& dataset, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("batch_gradient: empty sample set");
  if (x.size() != dataset.dim) throw DimensionError("parameter dimension does not match dataset");
  const auto order = detail::sorted_indices(indices);
  ParamVector sum(x.size(), 0.0);
  ParamVector g(x.size());
  for (std::size_t i : order) {
    sample_gradient_into(spec, x, dataset.samples.at(i), g);
    axpy(1.0, g, sum);
  }
  const double inv = 1.0 / static_cast<double>(order.size());
  for (double& v : sum) v *= inv;
  return sum;
}

inline double batch_loss(const LossSpec& spec, std::span<const double> x, const Dataset& dataset,
                         std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("batch_loss: empty sample set");
  if (x.size() != dataset.dim) throw DimensionError("parameter dimension does not match dataset");
  const auto order = detail::sorted_indices(indices);
  double sum = 0.0;
  for (std::size_t i : order) sum += sample_loss(spec, x, dataset.samples.at(i));
  return sum / static_cast<double>(order.size());
}

inline double max_row_norm_sq(const Dataset& dataset) {
  double m = 0.0;
  for (const Sample& z : dataset.samples) {
    double s = 0.0;
    for (const Feature& f : z.features) s += f.value * f.value;
    m = std::max(m, s);
  }
  return m;
}

/// Smoothness and strong-convexity constants of the sample losses.
///
/// Logistic kinds rely on max_i |a_i|^2 <= 1, so an un-normalized dataset is
/// rejected. The quadratic constants are exact: L is the largest sample
/// curvature and sigma the mean curvature over the pooled dataset.
inline SmoothnessInfo smoothness_constants(const LossSpec& spec, const Dataset& dataset) {
  if (dataset.samples.empty()) throw DataError("smoothness_constants: empty dataset");
  switch (spec.kind) {
    case LossKind::logistic_l2:
    case LossKind::logistic_nonconvex: {
      if (max_row_norm_sq(dataset) > 1.0 + 1e-9) {
        throw DataError("logistic smoothness requires max row norm^2 <= 1; normalize first");
      }
      if (spec.kind == LossKind::logistic_l2) return {0.25 + spec.lambda, spec.lambda};
      return {0.25 + 2.0 * spec.lambda, 0.0};
    }
    case LossKind::quadratic: {
      double hmax = 0.0;
      double hsum = 0.0;
      for (const Sample& z : dataset.samples) {
        if (!(z.curvature > 0.0)) throw DataError("quadratic sample curvature must be positive");
        hmax = std::max(hmax, z.curvature);
        hsum += z.curvature;
      }
      return {hmax, hsum / static_cast<double>(dataset.samples.size())};
    }
  }
  return {};
}

}  // namespace dvr
