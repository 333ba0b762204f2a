#pragma once

// P x M mini-batch sampling without resampling, and leave-one-out
// prototype centroids for the centroid triplet loss.

#include <cstdint>
#include <span>
#include <vector>

#include "ctl/io.hpp"
#include "ctl/matrix.hpp"

namespace ctl {

struct BatchSpec {
  std::size_t classes_per_batch = 4;   // P
  std::size_t samples_per_class = 4;   // M
  std::uint64_t seed = 0;
};

struct BatchClass {
  std::uint32_t class_id = 0;
  std::vector<std::uint64_t> ids;        // ascending, distinct
  std::vector<std::size_t> positions;    // dataset positions, same order as ids
};

/// Classes in sampling order; rows of a batch embedding matrix follow
/// class-major order (all of classes[0], then classes[1], ...).
struct Batch {
  std::vector<BatchClass> classes;

  std::size_t size() const;
  /// Dataset positions in row order.
  std::vector<std::size_t> positions() const;
  std::vector<std::uint64_t> ids() const;
  /// Class id per row.
  std::vector<std::uint32_t> labels() const;
  /// First row of each class plus a trailing total.
  std::vector<std::size_t> offsets() const;
};

/// One epoch of batches drawn from `split`. Eligible classes (>= 2 samples)
/// are shuffled with `spec.seed`, packed P at a time, and each contributes
/// min(M, |S_k|) distinct samples. A short tail of r < P classes is padded
/// with P - r classes from the start of the shuffled order, so every
/// eligible class appears at least once per epoch.
/// Throws std::invalid_argument for a bad spec and DataError when fewer
/// than P classes are eligible.
std::vector<Batch> sample_batches(const Dataset& ds, const BatchSpec& spec,
                                  Split split = Split::train);

/// Mean of every member except `query_index` (leave-one-out centroid).
std::vector<double> build_prototype(std::span<const std::span<const double>> members,
                                    std::size_t query_index);
std::vector<double> build_prototype(const std::vector<std::vector<double>>& members,
                                    std::size_t query_index);

struct NegativeCentroid {
  std::uint32_t class_id = 0;
  std::vector<double> centroid;
  std::vector<std::size_t> rows;  // batch rows averaged into the centroid
};

struct QueryPrototypePair {
  std::uint64_t query_id = 0;
  std::size_t query_row = 0;
  std::uint32_t class_id = 0;
  std::vector<double> positive;            // prototype of the query's class
  std::vector<std::size_t> positive_rows;  // rows averaged into `positive`
  std::vector<NegativeCentroid> negatives;
};

/// One pair per batch member. `embeddings` rows follow Batch row order.
std::vector<QueryPrototypePair> enumerate_query_prototype_pairs(const Batch& batch,
                                                                const Matrix& embeddings);

}  // namespace ctl
