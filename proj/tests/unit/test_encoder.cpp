#include <cmath>
#include <filesystem>
#include <random>

#include "ctl/encoder.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace ctl;
using namespace ctl::testing;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden = {4};
  cfg.embedding_dim = 2;
  return cfg;
}

double weighted_sum(const Matrix& g, const Matrix& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.flat().size(); ++i) s += g.flat()[i] * y.flat()[i];
  return s;
}

double min_abs_preactivation(const MlpEncoder& enc) {
  double m = 1e300;
  for (const auto& z : enc.hidden_preactivations())
    for (double v : z.flat()) m = std::min(m, std::abs(v));
  return m;
}

// Random non-trivial BN parameters so gamma/beta gradients are exercised.
void perturb_batch_norm(MlpEncoder& enc, std::mt19937_64& rng) {
  auto params = enc.parameters();
  std::uniform_real_distribution<double> u(0.5, 1.5), s(-0.5, 0.5);
  for (auto& g : params[params.size() - 2]) g = u(rng);
  for (auto& b : params.back()) b = s(rng);
}

}  // namespace

TEST_CASE("eval-mode forward is deterministic and pure") {
  auto enc = MlpEncoder::initialize(tiny_config(), 1);
  std::mt19937_64 rng(2);
  const auto x = random_matrix(rng, 5, 3);
  const auto a = enc.forward_eval(x);
  const auto b = enc.forward_eval(x);
  CHECK(a.raw == b.raw);
  CHECK(a.normalized == b.normalized);
  const auto c = enc.forward(x, Mode::eval);
  CHECK(c.normalized == a.normalized);
  // a train step moves running statistics, so eval output changes with them
  enc.forward(random_matrix(rng, 4, 3, 2.0, 5.0), Mode::train);
  CHECK(!(enc.forward_eval(x).normalized == a.normalized));
}

TEST_CASE("train-mode batch norm standardizes each feature") {
  EncoderConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden = {10};
  cfg.embedding_dim = 5;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto enc = MlpEncoder::initialize(cfg, seed);
    std::mt19937_64 rng(seed + 100);
    const auto out = enc.forward(random_matrix(rng, 16, 6), Mode::train);
    for (std::size_t j = 0; j < 5; ++j) {
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < 16; ++i) mean += out.normalized(i, j);
      mean /= 16;
      for (std::size_t i = 0; i < 16; ++i) var += (out.normalized(i, j) - mean) * (out.normalized(i, j) - mean);
      var /= 16;
      CHECK(std::abs(mean) < 1e-4);
      // eps = 1e-5 pulls the biased variance slightly below 1
      double raw_var = 0.0, raw_mean = 0.0;
      for (std::size_t i = 0; i < 16; ++i) raw_mean += out.raw(i, j);
      raw_mean /= 16;
      for (std::size_t i = 0; i < 16; ++i) raw_var += (out.raw(i, j) - raw_mean) * (out.raw(i, j) - raw_mean);
      raw_var /= 16;
      if (raw_var > 0.1) CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }
}

TEST_CASE("train mode rejects a batch of one") {
  auto enc = MlpEncoder::initialize(tiny_config(), 3);
  CHECK_THROWS_AS(enc.forward(Matrix(1, 3), Mode::train), std::invalid_argument);
  CHECK_NOTHROW(enc.forward(Matrix(1, 3), Mode::eval));
}

TEST_CASE("identity linear layer passes inputs through") {
  Matrix w(3, 3);
  for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
  MlpEncoder enc({LinearLayer{w, {0, 0, 0}}},
                 BatchNormLayer{{1, 1, 1}, {0, 0, 0}, {0, 0, 0}, {1, 1, 1}});
  std::mt19937_64 rng(4);
  const auto x = random_matrix(rng, 4, 3);
  CHECK(enc.forward_eval(x).raw == x);
  CHECK(enc.forward(x, Mode::train).raw == x);
}

TEST_CASE("backward needs a matching forward") {
  auto enc = MlpEncoder::initialize(tiny_config(), 5);
  CHECK_THROWS_AS(enc.backward(Matrix(4, 2), Matrix(4, 2)), std::logic_error);
  enc.forward(Matrix(4, 3, 0.5), Mode::train);
  CHECK_THROWS_AS(enc.backward(Matrix(3, 2), Matrix(3, 2)), std::logic_error);
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  auto enc = MlpEncoder::initialize(tiny_config(), 6);
  std::mt19937_64 rng(6);
  enc.forward(random_matrix(rng, 4, 3), Mode::train);
  auto g = enc.backward(Matrix(4, 2), Matrix(4, 2));
  for (auto block : g.blocks())
    for (double v : block) CHECK(v == 0.0);
  for (double v : g.inputs.flat()) CHECK(v == 0.0);
}

TEST_CASE("backward matches central differences") {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 20; ++seed) {
    REQUIRE(seed < 200);
    auto enc = MlpEncoder::initialize(tiny_config(), seed);
    std::mt19937_64 rng(seed * 7 + 1);
    perturb_batch_norm(enc, rng);
    auto x = random_matrix(rng, 4, 3);
    const auto g_raw = random_matrix(rng, 4, 2);
    const auto g_norm = random_matrix(rng, 4, 2);

    enc.forward(x, Mode::train);
    // ReLU kinks within reach of the step make the difference quotient meaningless
    if (min_abs_preactivation(enc) < 2e-2) continue;
    auto grads = enc.backward(g_raw, g_norm);

    auto f = [&] {
      const auto out = enc.forward(x, Mode::train);
      return weighted_sum(g_raw, out.raw) + weighted_sum(g_norm, out.normalized);
    };
    auto params = enc.parameters();
    auto blocks = grads.blocks();
    REQUIRE(params.size() == blocks.size());
    for (std::size_t b = 0; b < params.size(); ++b) {
      const auto fd = central_difference(params[b], f, 1e-4);
      CHECK_MESSAGE(relative_error(blocks[b], fd) < 1e-3, "seed " << seed << " block " << b);
    }
    const auto fd_in = central_difference(x.flat(), f, 1e-4);
    CHECK(relative_error(grads.inputs.flat(), fd_in) < 1e-3);
    ++checked;
  }
}

TEST_CASE("frozen batch norm backward is the affine gradient") {
  std::mt19937_64 rng(10);
  Matrix w(3, 3);
  for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
  BatchNormLayer bn{{1.5, 0.5, 2.0}, {0.1, -0.2, 0.3}, {0.2, -1.0, 0.5}, {0.25, 4.0, 1.0}};
  MlpEncoder enc({LinearLayer{w, {0, 0, 0}}}, bn);
  const auto x = random_matrix(rng, 5, 3);
  const auto g_raw = random_matrix(rng, 5, 3);
  const auto g_norm = random_matrix(rng, 5, 3);
  const auto out = enc.forward(x, Mode::eval);
  const auto g = enc.backward(g_raw, g_norm);
  for (std::size_t j = 0; j < 3; ++j) {
    const double inv = 1.0 / std::sqrt(bn.running_var[j] + bn.eps);
    double dgamma = 0.0, dbeta = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(out.normalized(i, j) ==
            doctest::Approx(bn.gamma[j] * (x(i, j) - bn.running_mean[j]) * inv + bn.beta[j]).epsilon(1e-12));
      dgamma += g_norm(i, j) * (x(i, j) - bn.running_mean[j]) * inv;
      dbeta += g_norm(i, j);
      CHECK(g.inputs(i, j) == doctest::Approx(g_raw(i, j) + g_norm(i, j) * bn.gamma[j] * inv).epsilon(1e-12));
    }
    CHECK(g.gamma[j] == doctest::Approx(dgamma).epsilon(1e-12));
    CHECK(g.beta[j] == doctest::Approx(dbeta).epsilon(1e-12));
  }
}

TEST_CASE("running statistics follow the momentum rule") {
  Matrix w(1, 1);
  w(0, 0) = 1.0;
  MlpEncoder enc({LinearLayer{w, {0}}}, BatchNormLayer{{1}, {0}, {0}, {1}});
  Matrix x(4, 1);
  x(0, 0) = 1, x(1, 0) = 2, x(2, 0) = 3, x(3, 0) = 6;
  enc.forward(x, Mode::train);
  // mean 3, unbiased variance 14/3
  CHECK(enc.batch_norm().running_mean[0] == doctest::Approx(0.3));
  CHECK(enc.batch_norm().running_var[0] == doctest::Approx(0.9 + 0.1 * 14.0 / 3.0));
  CHECK(enc.batch_norm().running_var[0] > 0.0);
}

TEST_CASE("checkpoint round trip") {
  EncoderConfig cfg;
  cfg.input_dim = 7;
  cfg.hidden = {5, 6};
  cfg.embedding_dim = 4;
  auto enc = MlpEncoder::initialize(cfg, 11);
  std::mt19937_64 rng(11);
  enc.forward(random_matrix(rng, 8, 7), Mode::train);
  const auto bytes = encode_checkpoint(enc);
  const auto back = decode_checkpoint(bytes);
  // stored as float32, so the decoded copy is the canonical one
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(decode_checkpoint(encode_checkpoint(back)) == back);
  CHECK(back.input_dim() == 7);
  CHECK(back.embedding_dim() == 4);
  const auto x = random_matrix(rng, 3, 7);
  const auto a = enc.forward_eval(x).normalized, b = back.forward_eval(x).normalized;
  CHECK(relative_error(a.flat(), b.flat()) < 1e-6);

  const auto path = std::filesystem::temp_directory_path() / "ctlkit_unit_ckpt.ctlw";
  save_checkpoint(back, path);
  CHECK(load_checkpoint(path) == back);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), DataError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(truncated), DataError);
  auto version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(decode_checkpoint(version), DataError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.ctlw"), DataError);
}

TEST_CASE("embed_dataset keeps metadata and writes normalized vectors") {
  const auto ds = generate_synthetic(3, 3, 4, 0.1, 2, 5);
  EncoderConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden = {8};
  cfg.embedding_dim = 6;
  const auto enc = MlpEncoder::initialize(cfg, 1);
  const auto out = embed_dataset(ds, enc);
  REQUIRE(out.size() == ds.size());
  CHECK(out.dim() == 6);
  const auto ref = enc.forward_eval(to_matrix(ds)).normalized;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(out[i].id == ds[i].id);
    CHECK(out[i].class_id == ds[i].class_id);
    CHECK(out[i].view_id == ds[i].view_id);
    CHECK(out[i].split == ds[i].split);
    for (std::size_t j = 0; j < 6; ++j) CHECK(out[i].vector[j] == static_cast<float>(ref(i, j)));
  }
  const auto same = embed_dataset(ds, IdentityEmbedding{});
  CHECK(same == ds);
}
