#include "ctl/batching.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace ctl {

std::size_t Batch::size() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.ids.size();
  return n;
}

std::vector<std::size_t> Batch::positions() const {
  std::vector<std::size_t> out;
  for (const auto& c : classes) out.insert(out.end(), c.positions.begin(), c.positions.end());
  return out;
}

std::vector<std::uint64_t> Batch::ids() const {
  std::vector<std::uint64_t> out;
  for (const auto& c : classes) out.insert(out.end(), c.ids.begin(), c.ids.end());
  return out;
}

std::vector<std::uint32_t> Batch::labels() const {
  std::vector<std::uint32_t> out;
  for (const auto& c : classes) out.insert(out.end(), c.ids.size(), c.class_id);
  return out;
}

std::vector<std::size_t> Batch::offsets() const {
  std::vector<std::size_t> out{0};
  for (const auto& c : classes) out.push_back(out.back() + c.ids.size());
  return out;
}

std::vector<Batch> sample_batches(const Dataset& ds, const BatchSpec& spec, Split split) {
  const std::size_t P = spec.classes_per_batch;
  const std::size_t M = spec.samples_per_class;
  if (P < 2) throw std::invalid_argument("batch needs at least 2 classes (P >= 2)");
  if (M < 2) throw std::invalid_argument("batch needs at least 2 samples per class (M >= 2)");

  const auto& index = ds.class_index(split);
  std::vector<std::uint32_t> eligible;
  for (const auto& [cls, members] : index) {
    if (members.size() >= 2) eligible.push_back(cls);
  }
  if (eligible.size() < P) {
    throw DataError("only " + std::to_string(eligible.size()) + " classes with >= 2 " +
                    std::string(to_string(split)) + " samples; batch needs " +
                    std::to_string(P));
  }

  std::mt19937_64 rng(spec.seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);

  std::vector<std::vector<std::uint32_t>> groups;
  for (std::size_t i = 0; i + P <= eligible.size(); i += P) {
    groups.emplace_back(eligible.begin() + static_cast<std::ptrdiff_t>(i),
                        eligible.begin() + static_cast<std::ptrdiff_t>(i + P));
  }
  const std::size_t tail = eligible.size() % P;
  if (tail != 0) {
    std::vector<std::uint32_t> last(eligible.end() - static_cast<std::ptrdiff_t>(tail),
                                    eligible.end());
    for (std::size_t i = 0; last.size() < P; ++i) last.push_back(eligible[i]);
    groups.push_back(std::move(last));
  }

  std::vector<Batch> batches;
  batches.reserve(groups.size());
  for (const auto& group : groups) {
    Batch b;
    for (std::uint32_t cls : group) {
      std::vector<std::size_t> members = index.at(cls);
      std::shuffle(members.begin(), members.end(), rng);
      members.resize(std::min(M, members.size()));
      // restore canonical order so centroids sum by ascending id
      std::sort(members.begin(), members.end(),
                [&](std::size_t a, std::size_t b) { return ds[a].id < ds[b].id; });
      BatchClass bc;
      bc.class_id = cls;
      bc.positions = members;
      for (std::size_t pos : members) bc.ids.push_back(ds[pos].id);
      b.classes.push_back(std::move(bc));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<double> build_prototype(std::span<const std::span<const double>> members,
                                    std::size_t query_index) {
  if (members.size() < 2) {
    throw std::invalid_argument("prototype needs at least 2 class members");
  }
  if (query_index >= members.size()) throw std::out_of_range("query index out of range");
  std::vector<std::span<const double>> rest;
  rest.reserve(members.size() - 1);
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i != query_index) rest.push_back(members[i]);
  }
  return mean_vectors(std::span<const std::span<const double>>(rest));
}

std::vector<double> build_prototype(const std::vector<std::vector<double>>& members,
                                    std::size_t query_index) {
  std::vector<std::span<const double>> views(members.begin(), members.end());
  return build_prototype(std::span<const std::span<const double>>(views), query_index);
}

std::vector<QueryPrototypePair> enumerate_query_prototype_pairs(const Batch& batch,
                                                                const Matrix& embeddings) {
  const auto offsets = batch.offsets();
  if (embeddings.rows() != offsets.back()) {
    throw DimensionMismatch(embeddings.rows(), offsets.back());
  }
  const std::size_t num_classes = batch.classes.size();

  std::vector<std::vector<std::span<const double>>> members(num_classes);
  std::vector<std::vector<double>> full_means(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t r = offsets[k]; r < offsets[k + 1]; ++r) {
      members[k].push_back(embeddings.row(r));
    }
    full_means[k] = mean_vectors(std::span<const std::span<const double>>(members[k]));
  }

  std::vector<QueryPrototypePair> pairs;
  pairs.reserve(offsets.back());
  for (std::size_t k = 0; k < num_classes; ++k) {
    const auto& cls = batch.classes[k];
    for (std::size_t q = 0; q < cls.ids.size(); ++q) {
      QueryPrototypePair p;
      p.query_id = cls.ids[q];
      p.query_row = offsets[k] + q;
      p.class_id = cls.class_id;
      p.positive = build_prototype(std::span<const std::span<const double>>(members[k]), q);
      for (std::size_t r = offsets[k]; r < offsets[k + 1]; ++r) {
        if (r != p.query_row) p.positive_rows.push_back(r);
      }
      for (std::size_t j = 0; j < num_classes; ++j) {
        if (j == k) continue;
        NegativeCentroid n;
        n.class_id = batch.classes[j].class_id;
        n.centroid = full_means[j];
        for (std::size_t r = offsets[j]; r < offsets[j + 1]; ++r) n.rows.push_back(r);
        p.negatives.push_back(std::move(n));
      }
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

}  // namespace ctl
