#include <algorithm>

#include "ctl/trainer.hpp"
#include "doctest.h"

using namespace ctl;

namespace {

Dataset train_set(std::size_t classes, std::size_t per_class, double sigma, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.train_classes = classes;
  spec.samples_per_class = per_class;
  spec.dim = 16;
  spec.noise_sigma = sigma;
  spec.num_views = 2;
  spec.seed = seed;
  return generate_synthetic(spec);
}

TrainConfig small_config(std::size_t epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.hidden = {32};
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("lr_at_epoch") {
  TrainConfig cfg;
  CHECK(lr_at_epoch(cfg, 0) == 1e-4);
  CHECK(lr_at_epoch(cfg, 39) == 1e-4);
  CHECK(lr_at_epoch(cfg, 40) == 1e-5);
  CHECK(lr_at_epoch(cfg, 69) == 1e-5);
  CHECK(lr_at_epoch(cfg, 70) == 1e-6);
  CHECK(lr_at_epoch(cfg, 119) == 1e-6);
  cfg.decay_factor = 0.3;
  CHECK(lr_at_epoch(cfg, 75) == doctest::Approx(1e-4 * 0.09));
}

TEST_CASE("TrainConfig defaults and validation") {
  TrainConfig cfg;
  CHECK(cfg.base_lr == 1e-4);
  CHECK(cfg.lr_decay_epochs == std::vector<std::size_t>{40, 70});
  CHECK(cfg.epochs == 120);
  CHECK(cfg.center_lr == 0.5);
  CHECK(cfg.optimizer == OptimizerKind::adam);
  CHECK(cfg.weights.center == 5e-4);
  CHECK_NOTHROW(cfg.validate());
  cfg.lr_decay_epochs = {70, 40};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.center_lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("config text round trip and errors") {
  TrainConfig cfg;
  cfg.base_lr = 3e-4;
  cfg.lr_decay_epochs = {5, 9, 12};
  cfg.optimizer = OptimizerKind::sgd;
  cfg.hidden = {8, 4};
  cfg.weights.ctl = 0.0;
  cfg.ctl_negatives = CentroidNegatives::hardest;
  cfg.seed = 77;
  const auto text = format_train_config(cfg);
  CHECK(format_train_config(parse_train_config(text)) == text);

  const auto parsed = parse_train_config("# comment\nepochs = 7\n\nbase_lr=0.001\n");
  CHECK(parsed.epochs == 7);
  CHECK(parsed.base_lr == 0.001);
  CHECK(parsed.center_lr == 0.5);

  CHECK_THROWS_AS(parse_train_config("learning_rate=0.1\n"), DataError);
  CHECK_THROWS_AS(parse_train_config("epochs=many\n"), DataError);
  CHECK_THROWS_AS(parse_train_config("optimizer=rmsprop\n"), DataError);
  CHECK_THROWS_AS(parse_train_config("epochs\n"), DataError);
  CHECK_THROWS_AS(load_train_config("/nonexistent/cfg.txt"), DataError);
}

TEST_CASE("zero epochs returns the initial encoder") {
  const auto ds = train_set(6, 4, 0.1, 1);
  auto cfg = small_config(0);
  const auto r = train(ds, cfg);
  CHECK(r.log.empty());
  CHECK(r.encoder.input_dim() == 16);
  CHECK(r.encoder.embedding_dim() == 16);
  CHECK(r.encoder == train(ds, cfg).encoder);
  CHECK(r.class_ids.size() == 6);
}

TEST_CASE("training is deterministic in the seed") {
  const auto ds = train_set(8, 4, 0.2, 2);
  const auto a = train(ds, small_config(3));
  const auto b = train(ds, small_config(3));
  CHECK(format_loss_log(a.log) == format_loss_log(b.log));
  CHECK(a.encoder == b.encoder);
  auto other = small_config(3);
  other.seed = 4;
  CHECK(format_loss_log(train(ds, other).log) != format_loss_log(a.log));
}

TEST_CASE("loss log records every component") {
  const auto ds = train_set(8, 4, 0.2, 2);
  const auto r = train(ds, small_config(2));
  REQUIRE(r.log.size() == 2);
  CHECK(r.log[0].epoch == 1);
  CHECK(r.log[0].lr == 1e-4);
  for (const auto& e : r.log) {
    const double total = e.triplet + e.ctl + 5e-4 * e.center + e.classification;
    CHECK(e.total == doctest::Approx(total).epsilon(1e-9));
    CHECK(e.classification > 0.0);
  }
  const auto csv = format_loss_log(r.log);
  CHECK(csv.rfind("epoch,lr,triplet,ctl,center,classification,total\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("loss decreases on a 20-class synthetic set") {
  const auto ds = train_set(20, 8, 0.1, 5);
  auto cfg = small_config(30);
  const auto r = train(ds, cfg);
  REQUIRE(r.log.size() == 30);
  CHECK(r.log.back().total < r.log.front().total);
}

TEST_CASE("well-separated data loses at least half its loss") {
  for (double sigma : {0.05, 0.1}) {
    const auto ds = train_set(20, 8, sigma, 6);
    auto cfg = small_config(40);
    cfg.base_lr = 1e-3;
    cfg.lr_decay_epochs = {30};
    const auto r = train(ds, cfg);
    CAPTURE(sigma);
    CAPTURE(r.log.front().total);
    CAPTURE(r.log.back().total);
    CHECK(r.log.back().total <= 0.5 * r.log.front().total);
  }
}

TEST_CASE("trainer uses the gallery when there is no train split") {
  const auto ds = generate_synthetic(6, 5, 8, 0.1, 2, 9);
  auto cfg = small_config(1);
  const auto r = train(ds, cfg);
  CHECK(r.log.size() == 1);
  CHECK(r.class_ids.size() == 6);
}

TEST_CASE("sampler errors propagate") {
  const auto ds = train_set(3, 4, 0.1, 1);
  auto cfg = small_config(1);
  CHECK_THROWS_AS(train(ds, cfg), DataError);  // P = 4 > 3 classes
}
