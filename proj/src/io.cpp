#include "ctl/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "ctl/binary.hpp"

namespace ctl {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::query:
      return "query";
    case Split::gallery:
      return "gallery";
    case Split::train:
      return "train";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "query") return Split::query;
  if (s == "gallery") return Split::gallery;
  if (s == "train") return Split::train;
  throw DataError("unknown split '" + std::string(s) + "'");
}

Dataset::Dataset(std::size_t dim, std::vector<EmbeddingRecord> records)
    : dim_(dim), records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.vector.size() != dim_) {
      throw DataError("record " + std::to_string(r.id) + " has dimension " +
                      std::to_string(r.vector.size()) + ", expected " +
                      std::to_string(dim_));
    }
    if (!all_finite(r.vector)) {
      throw DataError("record " + std::to_string(r.id) + " has non-finite values");
    }
    if (static_cast<std::uint8_t>(r.split) > 2) {
      throw DataError("record " + std::to_string(r.id) + " has an invalid split");
    }
    if (!by_id_.emplace(r.id, i).second) {
      throw DataError("duplicate record id " + std::to_string(r.id));
    }
  }
  // by_id_ iterates in ascending id order, so every member list below is
  // already canonically sorted.
  for (const auto& [id, pos] : by_id_) {
    const auto& r = records_[pos];
    const auto s = static_cast<std::size_t>(r.split);
    index_[s][r.class_id].push_back(pos);
    by_split_[s].push_back(pos);
  }
}

std::optional<std::size_t> Dataset::find(std::uint64_t id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------- text

namespace {

template <typename Int>
Int parse_int(std::string_view field, std::size_t line_no, const char* what) {
  Int value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw DataError("line " + std::to_string(line_no) + ": bad " + what + " '" +
                    std::string(field) + "'");
  }
  return value;
}

float parse_float(std::string_view field, std::size_t line_no) {
  float value = 0.0f;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw DataError("line " + std::to_string(line_no) + ": bad value '" +
                    std::string(field) + "'");
  }
  return value;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= line.size()) {
    auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) tab = line.size();
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

}  // namespace

Dataset parse_text_dataset(std::string_view text) {
  std::vector<EmbeddingRecord> records;
  std::optional<std::size_t> dim;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    auto fields = split_fields(line);
    if (fields.size() < 4) {
      throw DataError("line " + std::to_string(line_no) + ": expected at least 4 fields");
    }
    EmbeddingRecord r;
    r.id = parse_int<std::uint64_t>(fields[0], line_no, "id");
    r.class_id = parse_int<std::uint32_t>(fields[1], line_no, "class id");
    r.view_id = parse_int<std::uint16_t>(fields[2], line_no, "view id");
    try {
      r.split = parse_split(fields[3]);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::size_t d = fields.size() - 4;
    if (!dim) dim = d;
    if (d != *dim) {
      throw DataError("line " + std::to_string(line_no) + ": dimension " +
                      std::to_string(d) + " inconsistent with " + std::to_string(*dim));
    }
    r.vector.reserve(d);
    for (std::size_t i = 4; i < fields.size(); ++i) {
      r.vector.push_back(parse_float(fields[i], line_no));
    }
    records.push_back(std::move(r));
  }
  return Dataset(dim.value_or(0), std::move(records));
}

std::string format_text_dataset(const Dataset& ds) {
  std::string out;
  out += "# ctlkit embeddings dim=" + std::to_string(ds.dim()) + "\n";
  char buf[32];
  for (const auto& r : ds.records()) {
    out += std::to_string(r.id);
    out += '\t';
    out += std::to_string(r.class_id);
    out += '\t';
    out += std::to_string(r.view_id);
    out += '\t';
    out += to_string(r.split);
    for (float v : r.vector) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
      out += '\t';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

// -------------------------------------------------------------- binary

std::vector<std::uint8_t> encode_binary_dataset(const Dataset& ds) {
  ByteWriter w;
  w.bytes(kDatasetMagic, 4);
  w.u16(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.dim()));
  w.u64(ds.size());
  for (const auto& r : ds.records()) {
    w.u64(r.id);
    w.u32(r.class_id);
    w.u16(r.view_id);
    w.u8(static_cast<std::uint8_t>(r.split));
    w.u8(0);
    for (float v : r.vector) w.f32(v);
  }
  return w.take();
}

Dataset decode_binary_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kDatasetMagic, 4) != 0) throw DataError("not a CTLE file (bad magic)");
  const auto version = r.u16();
  if (version != kDatasetVersion) {
    throw DataError("unsupported CTLE version " + std::to_string(version));
  }
  const std::size_t dim = r.u32();
  const std::uint64_t count = r.u64();
  if (r.remaining() != count * (kRecordHeaderBytes + 4 * static_cast<std::uint64_t>(dim))) {
    throw DataError("CTLE payload size does not match header (dim " + std::to_string(dim) +
                    ", count " + std::to_string(count) + ")");
  }
  std::vector<EmbeddingRecord> records(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto& rec = records[i];
    rec.id = r.u64();
    rec.class_id = r.u32();
    rec.view_id = r.u16();
    const auto split = r.u8();
    if (split > 2) throw DataError("record " + std::to_string(i) + ": bad split code");
    rec.split = static_cast<Split>(split);
    r.u8();
    rec.vector.resize(dim);
    for (auto& v : rec.vector) v = r.f32();
  }
  return Dataset(dim, std::move(records));
}

// ---------------------------------------------------------------- files

FileFormat detect_format(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, kDatasetMagic, 4) == 0) return FileFormat::binary;
  return FileFormat::text;
}

FileFormat format_for_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".bin" || ext == ".ctle") ? FileFormat::binary : FileFormat::text;
}

Dataset load_dataset(const std::filesystem::path& path, FileFormat format) {
  const std::string content = read_file(path);
  try {
    if (format == FileFormat::text) return parse_text_dataset(content);
    const auto* p = reinterpret_cast<const std::uint8_t*>(content.data());
    return decode_binary_dataset({p, content.size()});
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  return load_dataset(path, detect_format(path));
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path, FileFormat format) {
  if (format == FileFormat::text) {
    write_file(path, format_text_dataset(ds));
  } else {
    const auto bytes = encode_binary_dataset(ds);
    write_file(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
  }
}

// ------------------------------------------------------------ synthetic

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 1 || spec.samples_per_class < 1 || spec.dim < 1 ||
      spec.num_views < 1) {
    throw std::invalid_argument("synthetic dataset counts must all be >= 1");
  }
  if (!(spec.noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  if (spec.num_views > 65536) throw std::invalid_argument("at most 65536 views");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t total_classes = spec.num_classes + spec.train_classes;
  const std::size_t queries = std::min(spec.queries_per_class, spec.samples_per_class);

  std::vector<EmbeddingRecord> records;
  records.reserve(total_classes * spec.samples_per_class);
  std::vector<double> center(spec.dim);
  std::uint64_t next_id = 0;
  for (std::size_t k = 0; k < total_classes; ++k) {
    double norm = 0.0;
    while (norm == 0.0) {
      for (auto& c : center) c = gauss(rng);
      norm = std::sqrt(detail::dot<double>(center, center));
    }
    for (auto& c : center) c /= norm;

    const bool train_class = k >= spec.num_classes;
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      EmbeddingRecord r;
      r.id = next_id++;
      r.class_id = static_cast<std::uint32_t>(k);
      r.view_id = static_cast<std::uint16_t>(s % spec.num_views);
      r.split = train_class ? Split::train : (s < queries ? Split::query : Split::gallery);
      r.vector.resize(spec.dim);
      for (std::size_t i = 0; i < spec.dim; ++i) {
        const double noise = spec.noise_sigma > 0.0 ? spec.noise_sigma * gauss(rng) : 0.0;
        r.vector[i] = static_cast<float>(center[i] + noise);
      }
      records.push_back(std::move(r));
    }
  }
  return Dataset(spec.dim, std::move(records));
}

Dataset generate_synthetic(std::size_t num_classes, std::size_t samples_per_class,
                           std::size_t dim, double noise_sigma, std::size_t num_views,
                           std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_classes = num_classes;
  spec.samples_per_class = samples_per_class;
  spec.dim = dim;
  spec.noise_sigma = noise_sigma;
  spec.num_views = num_views;
  spec.seed = seed;
  return generate_synthetic(spec);
}

}  // namespace ctl
