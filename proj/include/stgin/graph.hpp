#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "stgin/tensor.hpp"

namespace stgin {

/// Weighted sensor graph built from a Gaussian kernel over pairwise distances.
/// The diagonal is fixed to 1 and thresholded weights are dropped to 0.
class SensorGraph {
 public:
  SensorGraph() = default;
  /// Takes an adjacency directly (e.g. read from CSV). Validates the weight
  /// range and the unit diagonal.
  explicit SensorGraph(Tensor2D adjacency, double bandwidth = 0.0, double threshold = 0.0);

  std::size_t size() const noexcept { return adjacency_.rows(); }
  const Tensor2D& adjacency() const noexcept { return adjacency_; }
  double bandwidth() const noexcept { return bandwidth_; }
  double threshold() const noexcept { return threshold_; }

  /// Sorted j != i with A_ij > 0.
  const std::vector<std::size_t>& neighbors(std::size_t i) const;

  /// 1 where j ∈ N(i) ∪ {i}, else 0. The attention support.
  Tensor2D attention_mask() const;

  /// D^{-1/2} A D^{-1/2} with D the row sums of A (self loops included).
  Tensor2D normalized_adjacency() const;

  /// Same nodes with rows/columns reordered: new node k is old node perm[k].
  SensorGraph permuted(const std::vector<std::size_t>& perm) const;

 private:
  Tensor2D adjacency_;
  std::vector<std::vector<std::size_t>> neighbors_;
  double bandwidth_ = 0.0;
  double threshold_ = 0.0;
};

/// A_ij = exp(-dist_ij² / bandwidth²), zeroed below `threshold`, diagonal 1.
SensorGraph build_gaussian_adjacency(const Tensor2D& dist, double bandwidth,
                                     double threshold = 0.1);

/// Standard deviation of the off-diagonal distances; the default bandwidth.
double default_bandwidth(const Tensor2D& dist);

/// Hop distances between n nodes evenly placed on a ring with unit spacing.
Tensor2D ring_distances(std::size_t n);

std::vector<std::size_t> neighbor_set(const SensorGraph& graph, std::size_t i);

}  // namespace stgin
