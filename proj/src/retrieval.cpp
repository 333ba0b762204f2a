#include "ctl/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include "ctl/binary.hpp"

namespace ctl {

namespace {

void append_normalized(IndexTable& t, std::span<const float> v, const std::string& what) {
  const double n = l2_norm(v);
  if (n == 0.0) throw ZeroNormError(what + " has a zero-norm vector");
  for (float x : v) t.vectors.push_back(static_cast<float>(static_cast<double>(x) / n));
}

CentroidIndex centroids_from(std::shared_ptr<const GallerySnapshot> g,
                             std::optional<std::uint16_t> exclude_view) {
  std::map<std::uint32_t, std::vector<std::span<const float>>> members;
  for (std::size_t i = 0; i < g->class_ids.size(); ++i) {
    if (exclude_view && g->view_ids[i] == *exclude_view) continue;
    members[g->class_ids[i]].push_back(g->vectors[i]);
  }
  IndexTable t;
  t.dim = g->dim;
  std::vector<Vector> raw;
  for (const auto& [cls, vs] : members) {
    Vector c = mean_vectors(std::span<const std::span<const float>>(vs));
    append_normalized(t, c, "centroid of class " + std::to_string(cls));
    t.target_ids.push_back(cls);
    t.class_ids.push_back(cls);
    t.view_ids.push_back(0);
    t.members.push_back(static_cast<std::uint32_t>(vs.size()));
    raw.push_back(std::move(c));
  }
  return CentroidIndex(std::move(t), std::move(raw), exclude_view, std::move(g));
}

std::vector<double> normalized_query(const EmbeddingRecord& q, std::size_t dim) {
  if (q.vector.size() != dim) throw DimensionMismatch(q.vector.size(), dim);
  const double n = l2_norm(q.vector);
  if (n == 0.0) {
    throw ZeroNormError("query " + std::to_string(q.id) + " has a zero-norm vector");
  }
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<double>(q.vector[i]) / n;
  return out;
}

RankingResult rank_table(const IndexTable& t, const EmbeddingRecord& query, std::size_t k,
                         bool exclude_same_view) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  const auto q = normalized_query(query, t.dim);

  RankingResult out;
  out.query_id = query.id;
  out.query_class = query.class_id;
  out.entries.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (exclude_same_view && t.view_ids[i] == query.view_id) continue;
    const float* v = t.vectors.data() + i * t.dim;
    double s = 0.0;
    for (std::size_t j = 0; j < t.dim; ++j) s += q[j] * static_cast<double>(v[j]);
    out.entries.push_back({t.target_ids[i], t.class_ids[i], s, t.class_ids[i] == query.class_id});
  }
  if (out.entries.empty()) {
    throw NoEligibleTargets("query " + std::to_string(query.id) + " has no eligible targets");
  }
  auto better = [](const RankedTarget& a, const RankedTarget& b) {
    return a.score != b.score ? a.score > b.score : a.target_id < b.target_id;
  };
  if (k < out.entries.size()) {
    std::partial_sort(out.entries.begin(), out.entries.begin() + static_cast<std::ptrdiff_t>(k),
                      out.entries.end(), better);
    out.entries.resize(k);
  } else {
    std::sort(out.entries.begin(), out.entries.end(), better);
  }
  return out;
}

}  // namespace

// ------------------------------------------------------------ indexes

CentroidIndex::CentroidIndex(IndexTable table, std::vector<Vector> raw_centroids,
                             std::optional<std::uint16_t> excluded_view,
                             std::shared_ptr<const GallerySnapshot> gallery)
    : table_(std::move(table)),
      raw_(std::move(raw_centroids)),
      excluded_view_(excluded_view),
      gallery_(std::move(gallery)) {
  for (std::size_t i = 0; i < table_.size(); ++i) rows_.emplace(table_.class_ids[i], i);
}

const Vector* CentroidIndex::centroid(std::uint32_t class_id) const {
  auto row = row_of(class_id);
  if (!row || *row >= raw_.size()) return nullptr;
  return &raw_[*row];
}

std::optional<std::size_t> CentroidIndex::row_of(std::uint32_t class_id) const {
  auto it = rows_.find(class_id);
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

const CentroidIndex& CentroidIndex::excluding_view(std::uint16_t view) const {
  std::lock_guard lock(cache_->mutex);
  auto& slot = cache_->variants[view];
  if (!slot) {
    if (!gallery_) {
      cache_->variants.erase(view);
      throw std::logic_error("centroid index has no variant for view " + std::to_string(view) +
                             " and no gallery to build it from");
    }
    slot = std::make_unique<const CentroidIndex>(centroids_from(gallery_, view));
  }
  return *slot;
}

void CentroidIndex::add_variant(std::uint16_t view, CentroidIndex variant) {
  std::lock_guard lock(cache_->mutex);
  cache_->variants[view] = std::make_unique<const CentroidIndex>(std::move(variant));
}

std::vector<std::uint16_t> CentroidIndex::cached_views() const {
  std::lock_guard lock(cache_->mutex);
  std::vector<std::uint16_t> out;
  for (const auto& [v, idx] : cache_->variants) out.push_back(v);
  return out;
}

std::vector<std::uint16_t> CentroidIndex::known_views() const {
  std::set<std::uint16_t> all;
  for (auto v : cached_views()) all.insert(v);
  if (gallery_) all.insert(gallery_->view_ids.begin(), gallery_->view_ids.end());
  return {all.begin(), all.end()};
}

InstanceIndex build_instance_index(const Dataset& ds) {
  const auto& gallery = ds.split_members(Split::gallery);
  if (gallery.empty()) throw NoEligibleTargets("dataset has an empty gallery");
  IndexTable t;
  t.dim = ds.dim();
  t.vectors.reserve(gallery.size() * ds.dim());
  for (std::size_t pos : gallery) {
    const auto& r = ds[pos];
    append_normalized(t, r.vector, "gallery record " + std::to_string(r.id));
    t.target_ids.push_back(r.id);
    t.class_ids.push_back(r.class_id);
    t.view_ids.push_back(r.view_id);
    t.members.push_back(1);
  }
  return InstanceIndex(std::move(t));
}

CentroidIndex build_centroid_index(const Dataset& ds, std::optional<std::uint16_t> exclude_view) {
  const auto& gallery = ds.split_members(Split::gallery);
  if (gallery.empty()) throw NoEligibleTargets("dataset has an empty gallery");
  auto snap = std::make_shared<GallerySnapshot>();
  snap->dim = ds.dim();
  for (std::size_t pos : gallery) {
    const auto& r = ds[pos];
    snap->class_ids.push_back(r.class_id);
    snap->view_ids.push_back(r.view_id);
    snap->vectors.push_back(r.vector);
  }
  return centroids_from(std::move(snap), exclude_view);
}

// ------------------------------------------------------------ queries

RankingResult query_topk(const InstanceIndex& index, const EmbeddingRecord& query,
                         std::size_t k, bool cross_view) {
  return rank_table(index.table(), query, k, cross_view);
}

RankingResult query_topk(const CentroidIndex& index, const EmbeddingRecord& query,
                         std::size_t k, bool cross_view, CentroidViewPolicy policy) {
  if (cross_view && policy == CentroidViewPolicy::leave_view_out) {
    return rank_table(index.excluding_view(query.view_id).table(), query, k, false);
  }
  return rank_table(index.table(), query, k, false);
}

RankingResult rank_all(const InstanceIndex& index, const EmbeddingRecord& query, bool cross_view) {
  return query_topk(index, query, std::max<std::size_t>(index.size(), 1), cross_view);
}

RankingResult rank_all(const CentroidIndex& index, const EmbeddingRecord& query, bool cross_view,
                       CentroidViewPolicy policy) {
  return query_topk(index, query, std::max<std::size_t>(index.size(), 1), cross_view, policy);
}

std::string format_rankings(const std::vector<RankingResult>& rankings) {
  std::string out;
  char buf[128];
  for (const auto& r : rankings) {
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
      const auto& e = r.entries[i];
      std::snprintf(buf, sizeof(buf), "%llu\t%zu\t%llu\t%.9g\t%d\n",
                    static_cast<unsigned long long>(r.query_id), i + 1,
                    static_cast<unsigned long long>(e.target_id), e.score, e.relevant ? 1 : 0);
      out += buf;
    }
  }
  return out;
}

// --------------------------------------------------------- index files

namespace {

constexpr char kIndexMagic[4] = {'C', 'T', 'L', 'I'};
constexpr std::uint16_t kIndexVersion = 1;

void write_section(ByteWriter& w, const IndexTable& t, std::int32_t excluded) {
  w.i32(excluded);
  w.u64(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    w.u64(t.target_ids[i]);
    w.u32(t.class_ids[i]);
    w.u16(t.view_ids[i]);
    w.u16(0);
    w.u32(t.members[i]);
    for (float v : t.vector(i)) w.f32(v);
  }
}

IndexTable read_section(ByteReader& r, std::size_t dim, std::int32_t& excluded) {
  excluded = r.i32();
  const std::uint64_t count = r.u64();
  if (count > r.remaining() / (20 + 4 * dim)) throw DataError("index section larger than file");
  IndexTable t;
  t.dim = dim;
  t.vectors.reserve(count * dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    t.target_ids.push_back(r.u64());
    t.class_ids.push_back(r.u32());
    t.view_ids.push_back(r.u16());
    r.u16();
    t.members.push_back(r.u32());
    for (std::size_t j = 0; j < dim; ++j) t.vectors.push_back(r.f32());
  }
  return t;
}

CentroidIndex centroid_from_table(IndexTable t, std::optional<std::uint16_t> excluded) {
  // raw means are not stored; the normalized rows stand in for them
  std::vector<Vector> raw;
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto v = t.vector(i);
    raw.emplace_back(v.begin(), v.end());
  }
  return CentroidIndex(std::move(t), std::move(raw), excluded, nullptr);
}

}  // namespace

std::vector<std::uint8_t> encode_index(const AnyIndex& index, bool with_view_variants) {
  ByteWriter w;
  w.bytes(kIndexMagic, 4);
  w.u16(kIndexVersion);
  if (const auto* inst = std::get_if<InstanceIndex>(&index)) {
    w.u8(0);
    w.u8(0);
    w.u32(static_cast<std::uint32_t>(inst->dim()));
    w.u32(1);
    write_section(w, inst->table(), -1);
    return w.take();
  }
  const auto& cen = std::get<CentroidIndex>(index);
  std::vector<std::uint16_t> views;
  if (with_view_variants) {
    views = cen.known_views();
  }
  w.u8(1);
  w.u8(0);
  w.u32(static_cast<std::uint32_t>(cen.dim()));
  w.u32(static_cast<std::uint32_t>(1 + views.size()));
  write_section(w, cen.table(), cen.excluded_view() ? *cen.excluded_view() : -1);
  for (std::uint16_t v : views) {
    const IndexTable* t = nullptr;
    IndexTable empty;
    empty.dim = cen.dim();
    try {
      t = &cen.excluding_view(v).table();
    } catch (const NoEligibleTargets&) {
      t = &empty;
    }
    write_section(w, *t, v);
  }
  return w.take();
}

AnyIndex decode_index(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kIndexMagic, 4) != 0) throw DataError("not a CTLI index file");
  const auto version = r.u16();
  if (version != kIndexVersion) throw DataError("unsupported index version " + std::to_string(version));
  const auto mode = r.u8();
  r.u8();
  const std::size_t dim = r.u32();
  const std::uint32_t sections = r.u32();
  if (sections == 0) throw DataError("index file has no sections");
  std::int32_t excluded = -1;
  auto base = read_section(r, dim, excluded);
  if (mode == 0) {
    if (sections != 1) throw DataError("instance index must have one section");
    if (r.remaining() != 0) throw DataError("trailing bytes in index file");
    return InstanceIndex(std::move(base));
  }
  if (mode != 1) throw DataError("bad index mode " + std::to_string(mode));
  auto to_view = [](std::int32_t v) -> std::optional<std::uint16_t> {
    if (v < 0) return std::nullopt;
    return static_cast<std::uint16_t>(v);
  };
  CentroidIndex idx = centroid_from_table(std::move(base), to_view(excluded));
  for (std::uint32_t s = 1; s < sections; ++s) {
    auto t = read_section(r, dim, excluded);
    if (excluded < 0) throw DataError("centroid variant section without a view");
    idx.add_variant(static_cast<std::uint16_t>(excluded),
                    centroid_from_table(std::move(t), to_view(excluded)));
  }
  if (r.remaining() != 0) throw DataError("trailing bytes in index file");
  return idx;
}

void save_index(const AnyIndex& index, const std::filesystem::path& path, bool with_view_variants) {
  const auto bytes = encode_index(index, with_view_variants);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

AnyIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return decode_index(bytes);
}

}  // namespace ctl
