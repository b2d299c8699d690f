#include "pointmt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace pointmt {

namespace {

template <typename T>
void require_coords(const Tensor<T>& coords, const char* what) {
  if (coords.rank() != 2 || coords.cols() != 3) {
    throw ShapeError(std::string(what) + ": expected N x 3 coordinates, got " +
                     shape_string(coords.shape()));
  }
}

template <typename T>
T squared_distance(const T* a, const T* b) {
  const T dx = a[0] - b[0];
  const T dy = a[1] - b[1];
  const T dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Strict ordering used for every FPS tie: larger distance wins, then the
// lexicographically smaller point, then the smaller index.
template <typename T>
bool better_pick(T dist_a, const T* pa, std::size_t ia, T dist_b, const T* pb, std::size_t ib) {
  if (dist_a != dist_b) return dist_a > dist_b;
  for (int d = 0; d < 3; ++d) {
    if (pa[d] != pb[d]) return pa[d] < pb[d];
  }
  return ia < ib;
}

}  // namespace

template <typename T>
PointCloud<T> normalize_cloud(const PointCloud<T>& cloud) {
  require_coords(cloud.coords, "normalize_cloud");
  const std::size_t n = cloud.size();
  if (n == 0) throw ArgumentError("normalize_cloud: empty cloud");
  double centroid[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) centroid[d] += cloud.coords(i, d);
  }
  for (double& c : centroid) c /= static_cast<double>(n);

  PointCloud<T> out = cloud;
  double max_norm = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0;
    for (int d = 0; d < 3; ++d) {
      const double v = cloud.coords(i, d) - centroid[d];
      sq += v * v;
    }
    max_norm = std::max(max_norm, std::sqrt(sq));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) {
      const double v = cloud.coords(i, d) - centroid[d];
      out.coords(i, d) = max_norm > 0 ? static_cast<T>(v / max_norm) : T(0);
    }
  }
  return out;
}

template <typename T>
NeighborhoodIndex knn(const Tensor<T>& coords, const Tensor<T>& query_coords, std::size_t k) {
  require_coords(coords, "knn");
  require_coords(query_coords, "knn");
  const std::size_t n = coords.rows();
  if (k == 0) throw ArgumentError("knn: k must be >= 1");
  if (k > n) {
    throw ArgumentError("knn: k = " + std::to_string(k) + " exceeds source count " +
                        std::to_string(n));
  }
  // Queries coincide with the sources: each query must see itself first even
  // when duplicated points exist.
  const bool self_query = &coords == &query_coords || coords == query_coords;

  NeighborhoodIndex out;
  out.queries = query_coords.rows();
  out.k = k;
  out.indices.resize(out.queries * k);
  std::vector<T> dist(n);
  std::vector<std::size_t> order(n);
  for (std::size_t q = 0; q < out.queries; ++q) {
    const T* qp = query_coords.data().data() + q * 3;
    for (std::size_t i = 0; i < n; ++i) dist[i] = squared_distance(qp, coords.data().data() + i * 3);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto closer = [&](std::size_t a, std::size_t b) {
      if (self_query) {
        if (a == q || b == q) return a == q && b != q;
      }
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      closer);
    std::copy_n(order.begin(), k, out.indices.begin() + static_cast<std::ptrdiff_t>(q * k));
  }
  return out;
}

template <typename T>
std::vector<std::size_t> farthest_point_sample(const Tensor<T>& coords, std::size_t m) {
  require_coords(coords, "farthest_point_sample");
  const std::size_t n = coords.rows();
  if (m == 0 || m > n) {
    throw ArgumentError("farthest_point_sample: m = " + std::to_string(m) + " not in [1, " +
                        std::to_string(n) + "]");
  }
  const T* pts = coords.data().data();
  T centroid[3] = {0, 0, 0};
  {
    double acc[3] = {0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      for (int d = 0; d < 3; ++d) acc[d] += pts[i * 3 + d];
    }
    for (int d = 0; d < 3; ++d) centroid[d] = static_cast<T>(acc[d] / static_cast<double>(n));
  }

  std::vector<T> min_dist(n);
  std::size_t seed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    min_dist[i] = squared_distance(pts + i * 3, centroid);
    if (i > 0 && better_pick(min_dist[i], pts + i * 3, i, min_dist[seed], pts + seed * 3, seed)) {
      seed = i;
    }
  }

  std::vector<std::size_t> picked;
  picked.reserve(m);
  std::vector<bool> taken(n, false);
  std::size_t current = seed;
  for (std::size_t step = 0; step < m; ++step) {
    picked.push_back(current);
    taken[current] = true;
    if (step + 1 == m) break;
    std::size_t next = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const T d = squared_distance(pts + i * 3, pts + current * 3);
      if (step == 0 || d < min_dist[i]) min_dist[i] = d;
      if (next == n || better_pick(min_dist[i], pts + i * 3, i, min_dist[next], pts + next * 3, next)) {
        next = i;
      }
    }
    current = next;
  }
  return picked;
}

template <typename T>
Tensor<T> gather_relative(const Tensor<T>& features, const NeighborhoodIndex& nbr) {
  require_rank(features.shape(), 2, "gather_relative");
  const std::size_t n = features.rows();
  const std::size_t c = features.cols();
  if (nbr.queries != n) {
    throw ShapeError("gather_relative: neighborhood has " + std::to_string(nbr.queries) +
                     " rows for " + std::to_string(n) + " points");
  }
  Tensor<T> out({n, nbr.k, c});
  for (std::size_t i = 0; i < n; ++i) {
    const auto center = features.row(i);
    for (std::size_t j = 0; j < nbr.k; ++j) {
      const std::size_t src = nbr(i, j);
      if (src >= n) throw InvariantError("gather_relative: neighbor index out of range");
      const auto other = features.row(src);
      for (std::size_t ch = 0; ch < c; ++ch) out(i, j, ch) = other[ch] - center[ch];
    }
  }
  return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
  require_rank(x.shape(), 2, "gather_rows");
  Tensor<T> out({rows.size(), x.cols()});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= x.rows()) throw InvariantError("gather_rows: row index out of range");
    std::copy_n(x.row(rows[r]).begin(), x.cols(), out.row(r).begin());
  }
  return out;
}

#define POINTMT_INSTANTIATE(T)                                                                 \
  template PointCloud<T> normalize_cloud<T>(const PointCloud<T>&);                             \
  template NeighborhoodIndex knn<T>(const Tensor<T>&, const Tensor<T>&, std::size_t);          \
  template std::vector<std::size_t> farthest_point_sample<T>(const Tensor<T>&, std::size_t);   \
  template Tensor<T> gather_relative<T>(const Tensor<T>&, const NeighborhoodIndex&);           \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, const std::vector<std::size_t>&);

POINTMT_INSTANTIATE(float)
POINTMT_INSTANTIATE(double)

#undef POINTMT_INSTANTIATE

}  // namespace pointmt
