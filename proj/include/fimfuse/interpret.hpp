#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fimfuse/embedstore.hpp"
#include "fimfuse/kmeans.hpp"
#include "fimfuse/model.hpp"

namespace fimfuse::interpret {

/// Gradient of the non-hateful loss with respect to the interaction matrix,
/// evaluated at R = 0. Entry (a, b) pairs image unit a with text unit b.
struct GradientMatrix {
  RowMatrix<double> values;
  std::uint32_t model_crc = 0;
};

/// Cross-fusion models only (ModeError otherwise). Runs the classifier in eval
/// mode from an all-zero n*n input, backpropagates the primary-task loss with
/// target class 0 (auxiliary heads do not contribute) and reshapes the input
/// gradient row-major.
template <class Real>
GradientMatrix gradient_matrix(const ModelParams<Real>& params, std::uint32_t model_crc = 0);

struct BinaryMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> bits;  // row-major
  /// All entries equal; nothing could be selected.
  bool degenerate = false;

  std::size_t popcount() const;
  std::uint8_t at(int r, int c) const { return bits[static_cast<std::size_t>(r) * cols + c]; }
};

/// Marks the most-negative and most-positive bands of a matrix by signed
/// value. With N entries sorted ascending, the lower band is the bottom
/// ceil(lower_pct * N / 100) ranks and the upper band the top
/// ceil((100 - upper_pct) * N / 100) ranks (nearest rank, no interpolation).
/// Entries tied with a band's boundary value are included.
BinaryMatrix binarize_signed_percentile(const RowMatrix<double>& values, double lower_pct,
                                        double upper_pct);

struct TriggerVector {
  std::string id;
  std::vector<std::uint8_t> bits;  // length n*n, row-major interaction order

  std::size_t popcount() const;
};

inline constexpr double kGradientLowerPct = 20.0;
inline constexpr double kGradientUpperPct = 80.0;
inline constexpr double kInteractionLowerPct = 10.0;
inline constexpr double kInteractionUpperPct = 90.0;

/// AND of the binarized gradient matrix with the record's own binarized
/// interaction matrix (eval-mode projections).
template <class Real>
TriggerVector trigger_vector(const embedstore::EmbeddingRecord& record,
                             const ModelParams<Real>& params, const BinaryMatrix& gradient_bits,
                             double lower_pct = kInteractionLowerPct,
                             double upper_pct = kInteractionUpperPct);

struct TopCell {
  int row = 0;
  int col = 0;
  double frequency = 0.0;  // share of members with the cell active
};

struct ClusterInfo {
  int cluster_id = 0;
  std::vector<std::string> member_ids;
  /// Fewer than 3 or more than 10 members.
  bool ambiguous = false;
  double mean_popcount = 0.0;
  std::vector<TopCell> top_cells;
};

struct ClusterReport {
  int k = 0;
  std::uint64_t seed = 0;
  std::uint32_t model_crc = 0;
  std::vector<ClusterInfo> clusters;

  nlohmann::json to_json() const;
};

inline constexpr std::size_t kMinUsefulCluster = 3;
inline constexpr std::size_t kMaxUsefulCluster = 10;
inline constexpr std::size_t kTopCells = 10;

/// Groups trigger vectors by assignment. Top cells are the 10 most frequent
/// active cells per cluster (ties by lower cell index; never-active cells
/// are left out).
ClusterReport cluster_report(std::span<const int> assignments,
                             std::span<const TriggerVector> triggers, int n, int k,
                             std::uint64_t seed, std::uint32_t model_crc);

struct PipelineOptions {
  int k = 15;
  std::uint64_t seed = 0;
  int max_iter = 300;
  embedstore::Split split = embedstore::Split::Train;
  int threads = 1;
};

struct PipelineResult {
  GradientMatrix gradient;
  BinaryMatrix gradient_bits;
  std::vector<TriggerVector> triggers;
  KMeansResult clustering;
  ClusterReport report;
};

/// Gradient matrix, trigger vectors for every hateful record of the chosen
/// split, k-means, and the cluster report.
template <class Real>
PipelineResult run_pipeline(const embedstore::Dataset& dataset, const ModelParams<Real>& params,
                            std::uint32_t model_crc, const PipelineOptions& options);

}  // namespace fimfuse::interpret
