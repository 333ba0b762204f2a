#pragma once

// Embedding datasets: in-memory model, the two on-disk formats, and the
// synthetic generator used in place of real image datasets.
//
// Text format: one record per line, tab separated
//     id  class_id  view_id  split  v_0 ... v_{D-1}
// split is one of query|gallery|train. Lines starting with '#' and blank
// lines are ignored. Floats are written with 9 significant digits.
//
// Binary format (all integers and floats little-endian):
//     header  : "CTLE" | version u16 | D u32 | count u64          (18 bytes)
//     record  : id u64 | class u32 | view u16 | split u8 | pad u8 (16 bytes)
//               followed by D float32 values
// split codes: 0 = query, 1 = gallery, 2 = train.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ctl/core.hpp"

namespace ctl {

/// Malformed or inconsistent input data (bad file, bad record, bad config).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split : std::uint8_t { query = 0, gallery = 1, train = 2 };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct EmbeddingRecord {
  std::uint64_t id = 0;
  std::uint32_t class_id = 0;
  std::uint16_t view_id = 0;
  Split split = Split::gallery;
  Vector vector;

  bool operator==(const EmbeddingRecord&) const = default;
};

/// Immutable collection of records with per-split class indexes.
/// Member lists in the indexes are sorted by ascending record id, which is
/// the canonical summation order for every centroid in the toolkit.
class Dataset {
 public:
  Dataset() = default;

  /// Validates ids (unique), dimensions (all equal to dim) and finiteness.
  /// Throws DataError on violation.
  Dataset(std::size_t dim, std::vector<EmbeddingRecord> records);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }

  /// Position of the record with this id, if present.
  std::optional<std::size_t> find(std::uint64_t id) const;

  /// class_id -> positions (into records()) sorted by ascending id.
  const std::map<std::uint32_t, std::vector<std::size_t>>& class_index(Split s) const {
    return index_[static_cast<std::size_t>(s)];
  }
  /// Positions of all records in the split, ascending id.
  const std::vector<std::size_t>& split_members(Split s) const {
    return by_split_[static_cast<std::size_t>(s)];
  }
  std::size_t count(Split s) const { return split_members(s).size(); }

  bool operator==(const Dataset& o) const {
    return dim_ == o.dim_ && records_ == o.records_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<EmbeddingRecord> records_;
  std::map<std::uint64_t, std::size_t> by_id_;
  std::map<std::uint32_t, std::vector<std::size_t>> index_[3];
  std::vector<std::size_t> by_split_[3];
};

enum class FileFormat { text, binary };

inline constexpr char kDatasetMagic[4] = {'C', 'T', 'L', 'E'};
inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 4 + 2 + 4 + 8;
inline constexpr std::size_t kRecordHeaderBytes = 8 + 4 + 2 + 1 + 1;

/// Exact size of a binary dataset file holding `count` records of dim D.
constexpr std::uint64_t binary_file_bytes(std::uint64_t dim, std::uint64_t count) {
  return kDatasetHeaderBytes + count * (kRecordHeaderBytes + 4 * dim);
}

/// Bytes spent on vector payload only (4 * D per record).
constexpr std::uint64_t vector_payload_bytes(std::uint64_t dim, std::uint64_t count) {
  return 4 * dim * count;
}

Dataset load_dataset(const std::filesystem::path& path, FileFormat format);
void save_dataset(const Dataset& ds, const std::filesystem::path& path, FileFormat format);

/// Binary if the file starts with the CTLE magic, text otherwise.
FileFormat detect_format(const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Format from extension: ".bin"/".ctle" -> binary, everything else text.
FileFormat format_for_path(const std::filesystem::path& path);

Dataset parse_text_dataset(std::string_view text);
std::string format_text_dataset(const Dataset& ds);
std::vector<std::uint8_t> encode_binary_dataset(const Dataset& ds);
Dataset decode_binary_dataset(std::span<const std::uint8_t> bytes);

struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t samples_per_class = 4;
  std::size_t dim = 16;
  double noise_sigma = 0.1;
  std::size_t num_views = 1;
  std::uint64_t seed = 0;
  /// Leading samples of each class tagged query; the rest gallery.
  std::size_t queries_per_class = 1;
  /// Extra classes whose samples are all tagged train (class ids follow
  /// the evaluation classes).
  std::size_t train_classes = 0;
};

/// Class centers uniform on the unit sphere, samples = center + N(0, sigma^2 I),
/// views assigned round-robin. Deterministic given the seed.
Dataset generate_synthetic(const SyntheticSpec& spec);

Dataset generate_synthetic(std::size_t num_classes, std::size_t samples_per_class,
                           std::size_t dim, double noise_sigma, std::size_t num_views,
                           std::uint64_t seed);

}  // namespace ctl
