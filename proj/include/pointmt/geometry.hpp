#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "pointmt/tensor.hpp"

namespace pointmt {

template <typename T>
struct PointCloud {
  Tensor<T> coords;                   // N x 3
  std::optional<Tensor<T>> features;  // N x C
  std::optional<std::size_t> label;

  std::size_t size() const { return coords.rows(); }
};

/// Row i lists the k neighbors of query i, nearest first, ties broken by
/// smaller source index. A query that is itself a source point finds itself
/// at distance zero.
struct NeighborhoodIndex {
  std::size_t queries = 0;
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // queries x k

  std::size_t operator()(std::size_t i, std::size_t j) const { return indices[i * k + j]; }
  const std::size_t* row(std::size_t i) const { return indices.data() + i * k; }
};

/// Zero centroid, farthest point at norm 1. An all-equal cloud maps to zeros.
template <typename T>
PointCloud<T> normalize_cloud(const PointCloud<T>& cloud);

/// Exact brute-force kNN of `query_coords` against `coords`.
template <typename T>
NeighborhoodIndex knn(const Tensor<T>& coords, const Tensor<T>& query_coords, std::size_t k);

/// Greedy max-min subset of size m. The seed is the point farthest from the
/// centroid; every tie goes to the lexicographically smallest coordinates,
/// then the smaller index.
template <typename T>
std::vector<std::size_t> farthest_point_sample(const Tensor<T>& coords, std::size_t m);

/// out(i, j, :) = features[nbr(i, j)] - features[i]
template <typename T>
Tensor<T> gather_relative(const Tensor<T>& features, const NeighborhoodIndex& nbr);

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows);

}  // namespace pointmt
