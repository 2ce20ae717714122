#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dvr/error.hpp"
#include "dvr/model.hpp"
#include "dvr/rng.hpp"

namespace dvr {

// ---------------------------------------------------------------------------
// libsvm text format
// ---------------------------------------------------------------------------

namespace detail {

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

inline bool parse_uint(std::string_view s, std::uint64_t& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Reads `label idx:val idx:val ...` lines with 1-based indices. Blank lines
/// and lines starting with '#' are skipped. 0/1 labels are remapped to -1/+1.
inline Dataset parse_libsvm(std::istream& in, std::string name = {}) {
  Dataset ds;
  ds.name = std::move(name);
  std::string line;
  std::size_t line_no = 0;
  std::size_t max_index = 0;
  bool saw_zero_label = false;
  bool saw_minus_label = false;

  auto fail = [&](const std::string& msg) {
    throw DataError("libsvm line " + std::to_string(line_no) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream tokens(line);
    std::string tok;
    if (!(tokens >> tok) || tok.front() == '#') continue;

    Sample z;
    if (!detail::parse_double(tok, z.label)) fail("non-numeric label '" + tok + "'");
    if (z.label == 0.0) {
      saw_zero_label = true;
    } else if (z.label == -1.0) {
      saw_minus_label = true;
    } else if (z.label != 1.0) {
      fail("label must be one of -1, 0, +1, got '" + tok + "'");
    }

    while (tokens >> tok) {
      if (tok.front() == '#') break;
      const auto colon = tok.find(':');
      if (colon == std::string::npos) fail("expected index:value, got '" + tok + "'");
      std::uint64_t idx = 0;
      double val = 0.0;
      if (!detail::parse_uint(std::string_view(tok).substr(0, colon), idx) || idx == 0) {
        fail("bad feature index in '" + tok + "'");
      }
      if (!detail::parse_double(std::string_view(tok).substr(colon + 1), val) ||
          !std::isfinite(val)) {
        fail("non-numeric feature value in '" + tok + "'");
      }
      if (idx > UINT32_MAX) fail("feature index too large");
      z.features.push_back({static_cast<std::uint32_t>(idx - 1), val});
      max_index = std::max<std::size_t>(max_index, idx);
    }
    std::sort(z.features.begin(), z.features.end(),
              [](const Feature& a, const Feature& b) { return a.index < b.index; });
    for (std::size_t i = 1; i < z.features.size(); ++i) {
      if (z.features[i].index == z.features[i - 1].index) fail("duplicate feature index");
    }
    ds.samples.push_back(std::move(z));
  }

  if (ds.samples.empty()) throw DataError("libsvm input contains no samples");
  if (max_index == 0) throw DataError("libsvm input contains no features");
  if (saw_zero_label) {
    if (saw_minus_label) throw DataError("libsvm labels mix 0 and -1 conventions");
    for (Sample& z : ds.samples) {
      if (z.label == 0.0) z.label = -1.0;
    }
  }
  ds.dim = max_index;
  return ds;
}

inline Dataset load_libsvm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  return parse_libsvm(in, path);
}

inline void write_libsvm(const Dataset& ds, std::ostream& out) {
  for (const Sample& z : ds.samples) {
    out << (z.label > 0 ? "+1" : "-1");
    for (const Feature& f : z.features) {
      out << ' ' << (f.index + 1) << ':' << detail::format_double(f.value);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Scales every feature vector by 1 / max_i |a_i| so that max_i |a_i|^2 = 1.
inline Dataset normalize_features(Dataset ds) {
  const double max_sq = max_row_norm_sq(ds);
  if (!(max_sq > 0.0)) throw DataError("cannot normalize: all feature vectors are zero");
  const double scale = 1.0 / std::sqrt(max_sq);
  if (scale == 1.0) return ds;
  for (Sample& z : ds.samples) {
    for (Feature& f : z.features) f.value *= scale;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Partitions
// ---------------------------------------------------------------------------

/// Disjoint cover of the sample indices 0..N-1 by n nonempty worker sets.
/// Each set is kept in ascending order.
struct Partition {
  std::vector<std::vector<std::size_t>> assignments;

  std::size_t worker_count() const noexcept { return assignments.size(); }

  std::size_t total() const noexcept {
    std::size_t n = 0;
    for (const auto& a : assignments) n += a.size();
    return n;
  }

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s;
    for (const auto& a : assignments) s.push_back(a.size());
    return s;
  }

  std::size_t smallest_worker() const {
    std::size_t best = 0;
    for (std::size_t k = 1; k < assignments.size(); ++k) {
      if (assignments[k].size() < assignments[best].size()) best = k;
    }
    return best;
  }

  friend bool operator==(const Partition&, const Partition&) = default;
};

/// Validates and normalizes (sorts) a hand-built partition of N samples.
inline Partition make_partition(std::vector<std::vector<std::size_t>> sets, std::size_t sample_count) {
  if (sets.empty()) throw ConfigError("partition needs at least one worker");
  std::vector<char> seen(sample_count, 0);
  std::size_t covered = 0;
  for (auto& set : sets) {
    if (set.empty()) throw ConfigError("partition contains an empty worker set");
    std::sort(set.begin(), set.end());
    for (std::size_t i : set) {
      if (i >= sample_count) throw ConfigError("partition index out of range");
      if (seen[i]) throw ConfigError("partition sets overlap at index " + std::to_string(i));
      seen[i] = 1;
      ++covered;
    }
  }
  if (covered != sample_count) throw ConfigError("partition does not cover every sample");
  return Partition{std::move(sets)};
}

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Stream rng(hash_combine(mix64(seed), 0x7061727469ULL));
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  return idx;
}

inline Partition split_contiguous(const std::vector<std::size_t>& order,
                                  const std::vector<std::size_t>& sizes) {
  std::vector<std::vector<std::size_t>> sets;
  std::size_t pos = 0;
  for (std::size_t s : sizes) {
    sets.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                      order.begin() + static_cast<std::ptrdiff_t>(pos + s));
    pos += s;
  }
  return make_partition(std::move(sets), order.size());
}

}  // namespace detail

/// Seeded shuffle, then contiguous split into n sets whose sizes differ by at
/// most one (the first N mod n sets get the extra sample).
inline Partition partition_equal(std::size_t sample_count, std::size_t workers, std::uint64_t seed) {
  if (workers == 0 || workers > sample_count) {
    throw ConfigError("partition_equal needs 1 <= workers <= N");
  }
  std::vector<std::size_t> sizes(workers, sample_count / workers);
  for (std::size_t k = 0; k < sample_count % workers; ++k) ++sizes[k];
  return detail::split_contiguous(detail::shuffled_indices(sample_count, seed), sizes);
}

inline Partition partition_equal(const Dataset& ds, std::size_t workers, std::uint64_t seed) {
  return partition_equal(ds.size(), workers, seed);
}

/// Worker set sizes for the given fractions by largest-remainder rounding.
/// Ties in the remainder go to the lower worker index.
inline std::vector<std::size_t> fraction_sizes(std::size_t sample_count,
                                               std::span<const double> fractions) {
  if (fractions.empty()) throw ConfigError("fractions must be nonempty");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("fractions must sum to 1");

  const auto n = static_cast<double>(sample_count);
  std::vector<std::size_t> sizes(fractions.size());
  std::vector<double> remainder(fractions.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    const double exact = fractions[k] * n;
    sizes[k] = static_cast<std::size_t>(std::floor(exact));
    remainder[k] = exact - std::floor(exact);
    assigned += sizes[k];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < sample_count; ++i, ++assigned) {
    ++sizes[order[i % order.size()]];
  }
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] == 0) {
      throw ConfigError("fraction " + detail::format_double(fractions[k]) +
                        " rounds to zero samples");
    }
  }
  return sizes;
}

inline Partition partition_fractions(std::size_t sample_count, std::span<const double> fractions,
                                     std::uint64_t seed) {
  const auto sizes = fraction_sizes(sample_count, fractions);
  return detail::split_contiguous(detail::shuffled_indices(sample_count, seed), sizes);
}

inline Partition partition_fractions(const Dataset& ds, std::span<const double> fractions,
                                     std::uint64_t seed) {
  return partition_fractions(ds.size(), fractions, seed);
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

inline constexpr double kSyntheticFlipProbability = 0.05;

struct SyntheticData {
  Dataset dataset;
  ParamVector planted;  // planted linear model (logistic) or empty
};

/// Seeded synthetic dataset.
///
/// Logistic kinds: Gaussian features (spherically symmetric), labels
/// sign(a'w) of a Gaussian planted model w with 5% label flips, then
/// normalized to max row norm 1. Quadratic: Gaussian targets with unit
/// curvature.
inline SyntheticData synthesize_with_model(LossKind kind, std::size_t sample_count,
                                           std::size_t dim, std::uint64_t seed) {
  if (sample_count == 0 || dim == 0) throw ConfigError("synthesize needs N, d >= 1");
  if (dim > UINT32_MAX) throw ConfigError("dimension too large");
  Stream rng(hash_combine(mix64(seed), 0x73796e7468ULL));
  SyntheticData out;
  Dataset& ds = out.dataset;
  ds.dim = dim;
  ds.name = "synthetic:" + std::to_string(sample_count) + "," + std::to_string(dim);
  ds.samples.resize(sample_count);

  if (kind == LossKind::quadratic) {
    for (Sample& z : ds.samples) {
      z.label = 1.0;
      for (std::size_t j = 0; j < dim; ++j) {
        z.features.push_back({static_cast<std::uint32_t>(j), rng.normal()});
      }
    }
    return out;
  }

  out.planted.resize(dim);
  for (double& w : out.planted) w = rng.normal();
  for (Sample& z : ds.samples) {
    double margin = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = rng.normal();
      z.features.push_back({static_cast<std::uint32_t>(j), v});
      margin += v * out.planted[j];
    }
    z.label = margin >= 0.0 ? 1.0 : -1.0;
    if (rng.uniform() < kSyntheticFlipProbability) z.label = -z.label;
  }
  ds = normalize_features(std::move(ds));
  return out;
}

inline Dataset synthesize(LossKind kind, std::size_t sample_count, std::size_t dim,
                          std::uint64_t seed) {
  return synthesize_with_model(kind, sample_count, dim, seed).dataset;
}

}  // namespace dvr
