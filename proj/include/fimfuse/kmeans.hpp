#pragma once

#include <cstdint>
#include <vector>

#include "fimfuse/model.hpp"

namespace fimfuse::interpret {

struct KMeansResult {
  std::vector<int> assignments;
  RowMatrix<double> centroids;  // k x dim
  double inertia = 0.0;
  /// Inertia after every assignment step, starting with the k-means++ seeds.
  std::vector<double> inertia_history;
  int iterations = 0;
  bool converged = false;
};

/// Lloyd's algorithm on Euclidean distance with k-means++ seeding.
///
/// Points are rows of `points`. Iteration stops when assignments stop
/// changing or after max_iter update steps. A cluster that empties out claims
/// the point farthest from its own centroid (taken only from clusters with
/// more than one member); if every point sits on its centroid the cluster
/// stays empty. Distance ties go to the lower cluster index. Deterministic for
/// a given seed.
KMeansResult kmeans(const RowMatrix<double>& points, int k, std::uint64_t seed, int max_iter = 300);

}  // namespace fimfuse::interpret
