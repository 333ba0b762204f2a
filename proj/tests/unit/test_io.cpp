#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include "ctl/io.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace ctl;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "ctlkit_unit";
  fs::create_directories(dir);
  return dir / name;
}

Dataset random_dataset(std::uint64_t seed, std::size_t n, std::size_t dim) {
  std::mt19937_64 rng(seed);
  std::vector<EmbeddingRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingRecord r;
    r.id = rng() >> 20;
    r.class_id = static_cast<std::uint32_t>(rng() % 1000);
    r.view_id = static_cast<std::uint16_t>(rng() % 7);
    r.split = static_cast<Split>(rng() % 3);
    r.vector = ctl::testing::random_floats(rng, dim, -1e3, 1e3);
    recs.push_back(std::move(r));
  }
  return Dataset(dim, std::move(recs));
}

}  // namespace

TEST_CASE("text format parses a small fixture") {
  const char* text =
      "# fixture\n"
      "0\t0\t0\tquery\t1\t0\t0\t0\n"
      "1\t0\t1\tgallery\t0.5\t0.5\t0\t0\n"
      "\n"
      "2\t1\t1\tgallery\t0\t0\t1\t-2.5e-3\n";
  const auto ds = parse_text_dataset(text);
  CHECK(ds.dim() == 4);
  CHECK(ds.size() == 3);
  CHECK(ds.count(Split::query) == 1);
  CHECK(ds.count(Split::gallery) == 2);
  CHECK(ds.class_index(Split::gallery).at(0).size() == 1);
  CHECK(ds[2].vector[3] == -2.5e-3f);
}

TEST_CASE("text format errors carry line numbers") {
  SUBCASE("inconsistent dimension") {
    const char* text = "0\t0\t0\tgallery\t1\t2\t3\t4\n1\t0\t0\tgallery\t1\t2\t3\t4\t5\n";
    CHECK_THROWS_WITH_AS(parse_text_dataset(text), doctest::Contains("line 2"), DataError);
  }
  SUBCASE("duplicate id") {
    const char* text = "7\t0\t0\tgallery\t1\n7\t1\t0\tgallery\t2\n";
    CHECK_THROWS_WITH_AS(parse_text_dataset(text), doctest::Contains("duplicate"), DataError);
  }
  SUBCASE("bad split") {
    const char* text = "# c\n0\t0\t0\tvalidation\t1\n";
    CHECK_THROWS_WITH_AS(parse_text_dataset(text), doctest::Contains("line 2"), DataError);
  }
  SUBCASE("bad float") {
    CHECK_THROWS_AS(parse_text_dataset("0\t0\t0\tgallery\t1.0x\n"), DataError);
    CHECK_THROWS_AS(parse_text_dataset("0\t0\t0\tgallery\tnan\n"), DataError);
  }
  SUBCASE("too few fields") {
    CHECK_THROWS_AS(parse_text_dataset("0\t0\tgallery\n"), DataError);
  }
}

TEST_CASE("dataset invariants are validated") {
  std::vector<EmbeddingRecord> recs(2);
  recs[0].id = 1;
  recs[0].vector = {1, 2};
  recs[1].id = 2;
  recs[1].vector = {1, 2, 3};
  CHECK_THROWS_AS(Dataset(2, recs), DataError);
  recs[1].vector = {1, std::numeric_limits<float>::infinity()};
  CHECK_THROWS_AS(Dataset(2, recs), DataError);
}

TEST_CASE("class index members are in ascending id order") {
  std::vector<EmbeddingRecord> recs;
  for (std::uint64_t id : {9, 3, 5, 1}) {
    recs.push_back({id, 4, 0, Split::gallery, {static_cast<float>(id)}});
  }
  Dataset ds(1, recs);
  std::vector<std::uint64_t> ids;
  for (auto pos : ds.class_index(Split::gallery).at(4)) ids.push_back(ds[pos].id);
  CHECK(ids == std::vector<std::uint64_t>{1, 3, 5, 9});
}

TEST_CASE("binary and text round trips") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ds = random_dataset(seed, 40, 13);
    const auto bin = temp_path("rt.bin");
    save_dataset(ds, bin, FileFormat::binary);
    CHECK(load_dataset(bin, FileFormat::binary) == ds);
    CHECK(fs::file_size(bin) == binary_file_bytes(13, 40));
    CHECK(detect_format(bin) == FileFormat::binary);

    const auto txt = temp_path("rt.txt");
    save_dataset(ds, txt, FileFormat::text);
    // 9 significant digits round-trip float32 exactly
    CHECK(load_dataset(txt, FileFormat::text) == ds);
    CHECK(detect_format(txt) == FileFormat::text);
  }
}

TEST_CASE("binary layout is little-endian and bit exact") {
  Dataset ds(2, {{0x0102030405060708ull, 0x0A0B0C0Du, 0x0E0F, Split::train, {1.0f, -2.0f}}});
  const auto bytes = encode_binary_dataset(ds);
  REQUIRE(bytes.size() == binary_file_bytes(2, 1));
  const std::vector<std::uint8_t> expected = {
      'C', 'T', 'L', 'E', 1, 0,            // magic, version
      2, 0, 0, 0,                          // D
      1, 0, 0, 0, 0, 0, 0, 0,              // count
      8, 7, 6, 5, 4, 3, 2, 1,              // id
      0x0D, 0x0C, 0x0B, 0x0A,              // class
      0x0F, 0x0E,                          // view
      2, 0,                                // split, pad
      0x00, 0x00, 0x80, 0x3F,              // 1.0f
      0x00, 0x00, 0x00, 0xC0,              // -2.0f
  };
  CHECK(bytes == expected);
  CHECK(decode_binary_dataset(bytes) == ds);
}

TEST_CASE("binary decoding rejects damaged files") {
  const auto good = encode_binary_dataset(random_dataset(1, 3, 4));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_binary_dataset(bad_magic), DataError);
  auto truncated = good;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_binary_dataset(truncated), DataError);
  auto bad_split = good;
  bad_split[kDatasetHeaderBytes + 14] = 9;
  CHECK_THROWS_AS(decode_binary_dataset(bad_split), DataError);
}

TEST_CASE("empty dataset writes a header-only file") {
  const auto p = temp_path("empty.bin");
  save_dataset(Dataset(8, {}), p, FileFormat::binary);
  CHECK(fs::file_size(p) == kDatasetHeaderBytes);
  const auto back = load_dataset(p);
  CHECK(back.dim() == 8);
  CHECK(back.empty());
}

TEST_CASE("storage accounting matches the published embedding sizes") {
  // 16k records of 2048 floats: ~131 MB of vectors, the same order as the
  // 120-175 MB instance-mode embedding files reported for the image datasets
  const auto payload = vector_payload_bytes(2048, 16000);
  CHECK(payload == 131072000ull);
  CHECK(payload / 1e6 > 120.0);
  CHECK(payload / 1e6 < 175.0);
  CHECK(binary_file_bytes(2048, 16000) == 18 + 16000ull * (16 + 8192));
}

TEST_CASE("missing file is a data error") {
  CHECK_THROWS_AS(load_dataset("/nonexistent/ctlkit.bin"), DataError);
}

TEST_CASE("generate_synthetic") {
  SUBCASE("counts") {
    const auto ds = generate_synthetic(5, 4, 8, 0.1, 2, 1);
    CHECK(ds.size() == 20);
    CHECK(ds.count(Split::query) == 5);
    CHECK(ds.count(Split::gallery) == 15);
    std::map<std::uint32_t, std::size_t> per_class;
    for (const auto& r : ds.records()) ++per_class[r.class_id];
    CHECK(per_class.size() == 5);
    for (const auto& [c, n] : per_class) CHECK(n == 4);
    // views round-robin within each class
    CHECK(ds[0].view_id == 0);
    CHECK(ds[1].view_id == 1);
    CHECK(ds[2].view_id == 0);
  }
  SUBCASE("zero noise puts every sample on its unit-norm center") {
    const auto ds = generate_synthetic(6, 3, 5, 0.0, 1, 2);
    for (const auto& [cls, members] : ds.class_index(Split::gallery)) {
      const auto& q = ds[ds.class_index(Split::query).at(cls).front()].vector;
      CHECK(std::abs(l2_norm(q) - 1.0) < 1e-6);
      for (auto pos : members) CHECK(ds[pos].vector == q);
    }
  }
  SUBCASE("deterministic in the seed") {
    CHECK(generate_synthetic(4, 5, 6, 0.2, 3, 99) == generate_synthetic(4, 5, 6, 0.2, 3, 99));
    CHECK(!(generate_synthetic(4, 5, 6, 0.2, 3, 99) == generate_synthetic(4, 5, 6, 0.2, 3, 98)));
  }
  SUBCASE("train classes follow the evaluation classes") {
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.train_classes = 2;
    spec.samples_per_class = 4;
    const auto ds = generate_synthetic(spec);
    CHECK(ds.count(Split::train) == 8);
    CHECK(ds.class_index(Split::train).begin()->first == 3);
  }
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(generate_synthetic(0, 4, 8, 0.1, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_synthetic(2, 4, 8, -0.1, 1, 1), std::invalid_argument);
  }
}
