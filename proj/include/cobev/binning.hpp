#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cobev/error.hpp"

namespace cobev {

/// Uniform depth discretization over [d0, d_max].
struct DepthBinSpec {
  std::size_t n_bins = 256;
  double d0 = 2.0;
  double d_max = 104.4;

  double delta() const { return (d_max - d0) / double(n_bins); }

  void validate() const {
    if (n_bins < 1) raise(errc::domain_error, "depth bins: n_bins must be >= 1");
    if (!(d_max > d0) || !(d0 >= 0.0))
      raise(errc::domain_error, "depth bins: require d_max > d0 >= 0");
  }
};

/// Power-law height discretization: edge_j = h0 + (j/n)^alpha (h_max - h0).
struct HeightBinSpec {
  std::size_t n_bins = 64;
  double h0 = -1.5;
  double h_max = 3.0;
  double alpha = 1.5;

  void validate() const {
    if (n_bins < 1) raise(errc::domain_error, "height bins: n_bins must be >= 1");
    if (!(h_max > h0)) raise(errc::domain_error, "height bins: require h_max > h0");
    if (!(alpha > 0.0)) raise(errc::domain_error, "height bins: require alpha > 0");
  }
};

inline std::vector<double> depth_bin_edges(const DepthBinSpec& spec) {
  spec.validate();
  std::vector<double> edges(spec.n_bins + 1);
  const double delta = spec.delta();
  for (std::size_t i = 0; i <= spec.n_bins; ++i) edges[i] = spec.d0 + double(i) * delta;
  return edges;
}

inline std::vector<double> height_bin_edges(const HeightBinSpec& spec) {
  spec.validate();
  std::vector<double> edges(spec.n_bins + 1);
  const double range = spec.h_max - spec.h0;
  for (std::size_t j = 0; j <= spec.n_bins; ++j)
    edges[j] = spec.h0 + std::pow(double(j) / double(spec.n_bins), spec.alpha) * range;
  edges.front() = spec.h0;
  edges.back() = spec.h_max;
  return edges;
}

enum class BinMode { strict, clamp };

struct BinHit {
  std::size_t index = 0;
  bool clamped = false;
};

/// Left-closed/right-open lookup: returns j with edges[j] <= value < edges[j+1].
inline BinHit value_to_bin(double value, std::span<const double> edges, BinMode mode) {
  const std::size_t n = edges.size() - 1;
  if (value < edges.front()) {
    if (mode == BinMode::strict)
      raise(errc::out_of_range, "value_to_bin: " + std::to_string(value) + " below range");
    return {0, true};
  }
  if (value >= edges.back()) {
    if (mode == BinMode::strict)
      raise(errc::out_of_range, "value_to_bin: " + std::to_string(value) + " at/above range");
    return {n - 1, true};
  }
  const auto it = std::upper_bound(edges.begin(), edges.end(), value);
  return {static_cast<std::size_t>(it - edges.begin()) - 1, false};
}

inline double bin_center(std::size_t index, std::span<const double> edges) {
  if (index + 1 >= edges.size())
    raise(errc::index_out_of_range, "bin_center: index " + std::to_string(index));
  return 0.5 * (edges[index] + edges[index + 1]);
}

}  // namespace cobev
