#include "gserec/rq/kmeans.hpp"

#include <numeric>
#include <stdexcept>
#include <vector>

#include "gserec/rq/residual.hpp"

namespace gserec::rq {

Matrix kmeans(const Matrix& points, int k, util::Rng& rng, int iterations) {
  if (k < 1 || points.rows() < k) throw std::invalid_argument("kmeans: need at least k points");
  std::vector<int> order(static_cast<std::size_t>(points.rows()));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  Matrix centroids(k, points.cols());
  for (int c = 0; c < k; ++c) centroids.row(c) = points.row(order[static_cast<std::size_t>(c)]);

  std::vector<int> assign(static_cast<std::size_t>(points.rows()), -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const int c = nearest_code(centroids, points.row(i));
      if (c != assign[static_cast<std::size_t>(i)]) {
        assign[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(k, points.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
    }
  }
  return centroids;
}

}  // namespace gserec::rq
