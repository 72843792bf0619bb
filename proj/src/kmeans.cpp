#include "fimfuse/kmeans.hpp"

#include <limits>

#include "fimfuse/errors.hpp"
#include "fimfuse/rng.hpp"

namespace fimfuse::interpret {

namespace {

double squared_distance(const RowMatrix<double>& a, Eigen::Index i, const RowMatrix<double>& b,
                        Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

// Returns total inertia; fills assignment and per-point squared distance.
double assign(const RowMatrix<double>& points, const RowMatrix<double>& centroids,
              std::vector<int>& assignment, std::vector<double>& dist) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = squared_distance(points, i, centroids, c);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    assignment[static_cast<std::size_t>(i)] = best;
    dist[static_cast<std::size_t>(i)] = best_d;
    inertia += best_d;
  }
  return inertia;
}

RowMatrix<double> seed_plus_plus(const RowMatrix<double>& points, int k, Rng& rng) {
  const auto n = static_cast<std::size_t>(points.rows());
  RowMatrix<double> centers(k, points.cols());
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.below(n);
  centers.row(0) = points.row(static_cast<Eigen::Index>(first));
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points, static_cast<Eigen::Index>(i), centers, 0);

  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > target) break;
      }
    } else {
      // Every point coincides with a center: take the first unused index.
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = true;
    centers.row(c) = points.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(points, static_cast<Eigen::Index>(i), centers, c));
  }
  return centers;
}

}  // namespace

KMeansResult kmeans(const RowMatrix<double>& points, int k, std::uint64_t seed, int max_iter) {
  if (k < 1) throw ConfigError("kmeans: k must be at least 1");
  if (points.rows() < k)
    throw ConfigError("kmeans: " + std::to_string(points.rows()) + " vectors for k=" +
                      std::to_string(k) + " clusters");
  if (max_iter < 0) throw ConfigError("kmeans: max_iter must be non-negative");
  if (!points.allFinite()) throw ConfigError("kmeans: non-finite input");

  const auto n = static_cast<std::size_t>(points.rows());
  Rng rng(seed);
  KMeansResult result;
  result.centroids = seed_plus_plus(points, k, rng);
  result.assignments.assign(n, 0);
  std::vector<double> dist(n);
  result.inertia = assign(points, result.centroids, result.assignments, dist);
  result.inertia_history.push_back(result.inertia);

  std::vector<int> previous;
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k));
  for (int iter = 0; iter < max_iter; ++iter) {
    // Update step. Clusters that stay empty keep their previous centroid.
    const RowMatrix<double> old_centroids = result.centroids;
    result.centroids.setZero();
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(result.assignments[i]);
      result.centroids.row(static_cast<Eigen::Index>(c)) += points.row(static_cast<Eigen::Index>(i));
      ++sizes[c];
    }
    for (int c = 0; c < k; ++c)
      if (sizes[static_cast<std::size_t>(c)] > 0)
        result.centroids.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);
      else
        result.centroids.row(c) = old_centroids.row(c);
    for (std::size_t i = 0; i < n; ++i)
      dist[i] = squared_distance(points, static_cast<Eigen::Index>(i), result.centroids,
                                 result.assignments[i]);

    // Empty-cluster repair.
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      std::size_t far = n;
      double far_d = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (sizes[static_cast<std::size_t>(result.assignments[i])] > 1 && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      if (far == n) continue;
      --sizes[static_cast<std::size_t>(result.assignments[far])];
      result.assignments[far] = c;
      sizes[static_cast<std::size_t>(c)] = 1;
      dist[far] = 0.0;
      result.centroids.row(c) = points.row(static_cast<Eigen::Index>(far));
    }

    // Assignment step.
    previous = result.assignments;
    const double inertia = assign(points, result.centroids, result.assignments, dist);
    if (inertia > result.inertia * (1.0 + 1e-12) + 1e-12)
      throw ContractViolation("kmeans: inertia increased from " + std::to_string(result.inertia) +
                              " to " + std::to_string(inertia));
    result.inertia = inertia;
    result.inertia_history.push_back(inertia);
    result.iterations = iter + 1;
    if (previous == result.assignments) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace fimfuse::interpret
