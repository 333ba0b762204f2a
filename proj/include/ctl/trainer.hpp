#pragma once

// Training loop: P x M sampler -> encoder -> four losses -> optimizer.
// Encoder and classifier parameters use the main optimizer (Adam by
// default) with a multistep schedule; class centers get their own SGD
// step with the center-loss update rule.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ctl/batching.hpp"
#include "ctl/encoder.hpp"
#include "ctl/losses.hpp"

namespace ctl {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  double base_lr = 1e-4;
  std::vector<std::size_t> lr_decay_epochs = {40, 70};
  double decay_factor = 0.1;
  std::size_t epochs = 120;
  double center_lr = 0.5;
  Margins margins;
  LossWeights weights;
  BatchSpec batch;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  TripletMining mining = TripletMining::batch_hard;
  CentroidNegatives ctl_negatives = CentroidNegatives::average;
  std::vector<std::size_t> hidden = {64};
  /// 0 means "same as the input dimension".
  std::size_t embedding_dim = 0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when rates are non-positive or decay
  /// epochs are not strictly increasing.
  void validate() const;
};

/// key=value text, '#' comments. Keys mirror the TrainConfig fields
/// (lists are comma separated). Unknown keys or bad values throw DataError.
TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string format_train_config(const TrainConfig& cfg);

/// base_lr * decay_factor^(number of decay epochs <= epoch)
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double triplet = 0.0;
  double ctl = 0.0;
  double center = 0.0;
  double classification = 0.0;
  double total = 0.0;
};

struct TrainResult {
  MlpEncoder encoder;
  ClassCenters centers;
  ClassifierHead head;
  std::vector<std::uint32_t> class_ids;  // dense label -> dataset class id
  std::vector<EpochLog> log;
};

/// Trains on the train split, or on the gallery split when the dataset has
/// no train records. Deterministic given cfg.seed.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

/// Loss log as "epoch,lr,triplet,ctl,center,classification,total" lines.
std::string format_loss_log(const std::vector<EpochLog>& log);

}  // namespace ctl
