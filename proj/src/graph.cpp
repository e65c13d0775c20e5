#include "stgin/graph.hpp"

#include <algorithm>
#include <cmath>

#include "stgin/error.hpp"

namespace stgin {

SensorGraph::SensorGraph(Tensor2D adjacency, double bandwidth, double threshold)
    : adjacency_(std::move(adjacency)), bandwidth_(bandwidth), threshold_(threshold) {
  const std::size_t n = adjacency_.rows();
  if (adjacency_.cols() != n) {
    throw Error(ErrorKind::shape, "graph: adjacency must be square, got " + adjacency_.shape_string());
  }
  neighbors_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (adjacency_(i, i) != 1.0) {
      throw Error(ErrorKind::invalid_argument, "graph: diagonal entry " + std::to_string(i) + " is not 1");
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double w = adjacency_(i, j);
      if (!(w >= 0.0 && w <= 1.0)) {
        throw Error(ErrorKind::invalid_argument, "graph: weight (" + std::to_string(i) + "," +
                                                     std::to_string(j) + ") outside [0,1]");
      }
      if (j != i && w > 0.0) neighbors_[i].push_back(j);
    }
  }
}

const std::vector<std::size_t>& SensorGraph::neighbors(std::size_t i) const {
  if (i >= neighbors_.size()) {
    throw Error(ErrorKind::invalid_argument, "graph: node " + std::to_string(i) +
                                                 " out of range for " + std::to_string(size()) + " nodes");
  }
  return neighbors_[i];
}

Tensor2D SensorGraph::attention_mask() const {
  const std::size_t n = size();
  Tensor2D m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    m(i, i) = 1.0;
    for (std::size_t j : neighbors_[i]) m(i, j) = 1.0;
  }
  return m;
}

Tensor2D SensorGraph::normalized_adjacency() const {
  const std::size_t n = size();
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += adjacency_(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  Tensor2D out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = inv_sqrt_deg[i] * adjacency_(i, j) * inv_sqrt_deg[j];
  return out;
}

SensorGraph SensorGraph::permuted(const std::vector<std::size_t>& perm) const {
  const std::size_t n = size();
  if (perm.size() != n) throw Error(ErrorKind::shape, "graph: permutation length mismatch");
  Tensor2D a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = adjacency_(perm[i], perm[j]);
  return SensorGraph(std::move(a), bandwidth_, threshold_);
}

SensorGraph build_gaussian_adjacency(const Tensor2D& dist, double bandwidth, double threshold) {
  if (dist.rows() != dist.cols()) {
    throw Error(ErrorKind::shape, "build_gaussian_adjacency: distance matrix " +
                                      dist.shape_string() + " is not square");
  }
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw Error(ErrorKind::invalid_argument, "build_gaussian_adjacency: bandwidth must be > 0");
  }
  if (!(threshold >= 0.0 && threshold < 1.0)) {
    throw Error(ErrorKind::invalid_argument, "build_gaussian_adjacency: threshold must be in [0,1)");
  }
  const std::size_t n = dist.rows();
  Tensor2D a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dist(i, j);
      if (!std::isfinite(d)) throw Error(ErrorKind::invalid_argument, "build_gaussian_adjacency: non-finite distance");
      if (d < 0.0) throw Error(ErrorKind::invalid_argument, "build_gaussian_adjacency: negative distance");
      const double w = std::exp(-(d * d) / (bandwidth * bandwidth));
      a(i, j) = w >= threshold ? w : 0.0;
    }
    a(i, i) = 1.0;
  }
  return SensorGraph(std::move(a), bandwidth, threshold);
}

double default_bandwidth(const Tensor2D& dist) {
  const std::size_t n = dist.rows();
  if (n < 2) throw Error(ErrorKind::invalid_argument, "default_bandwidth: need at least 2 nodes");
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      sum += dist(i, j);
      sq += dist(i, j) * dist(i, j);
      ++count;
    }
  const double mean = sum / static_cast<double>(count);
  const double var = sq / static_cast<double>(count) - mean * mean;
  const double sd = std::sqrt(std::max(var, 0.0));
  // Equidistant nodes (e.g. two sensors) have zero spread.
  return sd > 1e-12 * mean ? sd : mean;
}

Tensor2D ring_distances(std::size_t n) {
  Tensor2D d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t hop = i > j ? i - j : j - i;
      d(i, j) = static_cast<double>(std::min(hop, n - hop));
    }
  return d;
}

std::vector<std::size_t> neighbor_set(const SensorGraph& graph, std::size_t i) {
  return graph.neighbors(i);
}

}  // namespace stgin
