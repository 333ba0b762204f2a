#pragma once

// Exhaustive cosine-similarity retrieval over either every gallery record
// (instance mode) or one mean vector per class (centroid mode), with
// optional cross-view filtering: targets captured by the query's view
// are not eligible.
//
// Index file format (little-endian):
//     "CTLI" | version u16 | mode u8 (0 instance, 1 centroid) | pad u8 |
//     D u32 | section_count u32
//     section : excluded_view i32 (-1: none) | count u64 | entries
//     entry   : target_id u64 | class u32 | view u16 | pad u16 | members u32 |
//               D f32 (unit-normalized vector)
// Instance files hold one section. Centroid files hold the full-gallery
// section followed by one leave-view-out section per gallery view.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ctl/io.hpp"

namespace ctl {

/// A query had nothing to score against (every target was filtered out,
/// or the index is empty). Distinct from a ranking that merely contains
/// no relevant target.
class NoEligibleTargets : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat storage shared by both index kinds.
struct IndexTable {
  std::size_t dim = 0;
  std::vector<std::uint64_t> target_ids;
  std::vector<std::uint32_t> class_ids;
  std::vector<std::uint16_t> view_ids;
  std::vector<std::uint32_t> members;
  std::vector<float> vectors;  // size() * dim, rows unit-normalized

  std::size_t size() const { return target_ids.size(); }
  std::span<const float> vector(std::size_t i) const { return {vectors.data() + i * dim, dim}; }
  bool operator==(const IndexTable&) const = default;
};

class InstanceIndex {
 public:
  InstanceIndex() = default;
  explicit InstanceIndex(IndexTable table) : table_(std::move(table)) {}

  const IndexTable& table() const { return table_; }
  std::size_t size() const { return table_.size(); }
  std::size_t dim() const { return table_.dim; }

 private:
  IndexTable table_;
};

/// Gallery records kept by a centroid index so leave-view-out variants can
/// be built on demand.
struct GallerySnapshot {
  std::size_t dim = 0;
  std::vector<std::uint32_t> class_ids;  // ascending record id order
  std::vector<std::uint16_t> view_ids;
  std::vector<Vector> vectors;
};

class CentroidIndex {
 public:
  CentroidIndex() = default;

  /// Table rows are classes; target_id == class id. `raw_centroids` holds
  /// the unnormalized means in row order.
  CentroidIndex(IndexTable table, std::vector<Vector> raw_centroids,
                std::optional<std::uint16_t> excluded_view,
                std::shared_ptr<const GallerySnapshot> gallery);

  const IndexTable& table() const { return table_; }
  std::size_t size() const { return table_.size(); }
  std::size_t dim() const { return table_.dim; }
  std::optional<std::uint16_t> excluded_view() const { return excluded_view_; }

  /// Unnormalized centroid of a class, if indexed.
  const Vector* centroid(std::uint32_t class_id) const;
  std::optional<std::size_t> row_of(std::uint32_t class_id) const;

  /// Variant built without gallery samples of `view` (possibly empty).
  /// Built once, cached, safe under concurrent first access. Throws
  /// std::logic_error when the index was loaded without the variant and
  /// has no gallery snapshot to build it from.
  const CentroidIndex& excluding_view(std::uint16_t view) const;

  /// Preloads a variant (used when reading index files).
  void add_variant(std::uint16_t view, CentroidIndex variant);
  std::vector<std::uint16_t> cached_views() const;
  /// Views with a cached variant or present in the gallery snapshot.
  std::vector<std::uint16_t> known_views() const;

 private:
  struct VariantCache {
    std::mutex mutex;
    std::map<std::uint16_t, std::unique_ptr<const CentroidIndex>> variants;
  };

  IndexTable table_;
  std::vector<Vector> raw_;
  std::map<std::uint32_t, std::size_t> rows_;
  std::optional<std::uint16_t> excluded_view_;
  std::shared_ptr<const GallerySnapshot> gallery_;
  std::shared_ptr<VariantCache> cache_ = std::make_shared<VariantCache>();
};

/// One entry per gallery record. Throws ZeroNormError naming the record
/// for a zero vector and NoEligibleTargets for an empty gallery.
InstanceIndex build_instance_index(const Dataset& ds);

/// Mean of each class's gallery vectors (ascending id order), then
/// unit-normalized for scoring. With `exclude_view`, samples of that view
/// are left out and classes with no remaining sample are absent.
CentroidIndex build_centroid_index(const Dataset& ds,
                                   std::optional<std::uint16_t> exclude_view = std::nullopt);

struct RankedTarget {
  std::uint64_t target_id = 0;
  std::uint32_t class_id = 0;
  double score = 0.0;
  bool relevant = false;
  bool operator==(const RankedTarget&) const = default;
};

struct RankingResult {
  std::uint64_t query_id = 0;
  std::uint32_t query_class = 0;
  std::vector<RankedTarget> entries;  // score non-increasing, ties by ascending target id
  bool operator==(const RankingResult&) const = default;
};

/// How cross-view matching interacts with centroids.
enum class CentroidViewPolicy {
  leave_view_out,  // centroids rebuilt without the query's view
  full_gallery,    // centroids always use every gallery sample
};

RankingResult query_topk(const InstanceIndex& index, const EmbeddingRecord& query,
                         std::size_t k, bool cross_view);

RankingResult query_topk(const CentroidIndex& index, const EmbeddingRecord& query,
                         std::size_t k, bool cross_view,
                         CentroidViewPolicy policy = CentroidViewPolicy::leave_view_out);

/// Full ranking over all eligible targets.
RankingResult rank_all(const InstanceIndex& index, const EmbeddingRecord& query, bool cross_view);
RankingResult rank_all(const CentroidIndex& index, const EmbeddingRecord& query, bool cross_view,
                       CentroidViewPolicy policy = CentroidViewPolicy::leave_view_out);

/// Text dump, one line per (query, rank): query_id rank target_id score relevant
/// (tab separated, rank 1-based, score with 9 significant digits).
std::string format_rankings(const std::vector<RankingResult>& rankings);

using AnyIndex = std::variant<InstanceIndex, CentroidIndex>;

/// Centroid indexes are written with every leave-view-out variant for the
/// views present in the gallery when `with_view_variants` is set.
std::vector<std::uint8_t> encode_index(const AnyIndex& index, bool with_view_variants);
AnyIndex decode_index(std::span<const std::uint8_t> bytes);
void save_index(const AnyIndex& index, const std::filesystem::path& path, bool with_view_variants);
AnyIndex load_index(const std::filesystem::path& path);

}  // namespace ctl
