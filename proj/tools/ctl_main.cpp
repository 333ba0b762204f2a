// ctl: command-line front end for ctlkit.
//
// Exit codes: 0 success, 1 usage, 2 data/format error, 3 runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ctl/bench.hpp"
#include "ctl/encoder.hpp"
#include "ctl/io.hpp"
#include "ctl/metrics.hpp"
#include "ctl/retrieval.hpp"
#include "ctl/trainer.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

ctl::EvalMode mode_from(const std::string& s) { return ctl::parse_eval_mode(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctlkit: centroid triplet loss training and centroid-based retrieval"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ctlkit 0.1.0");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic embedding dataset");
  ctl::SyntheticSpec spec;
  std::string synth_out;
  synth->add_option("--classes", spec.num_classes, "number of classes")->required()->check(CLI::PositiveNumber);
  synth->add_option("--per-class", spec.samples_per_class, "samples per class")->required()->check(CLI::PositiveNumber);
  synth->add_option("--dim", spec.dim, "vector dimension")->required()->check(CLI::PositiveNumber);
  synth->add_option("--sigma", spec.noise_sigma, "Gaussian noise sigma")->required()->check(CLI::NonNegativeNumber);
  synth->add_option("--views", spec.num_views, "number of views (cameras)")->required()->check(CLI::PositiveNumber);
  synth->add_option("--seed", spec.seed, "random seed")->required();
  synth->add_option("-o,--output", synth_out, "output file (.bin = binary, else text)")->required();

  // train
  auto* train = app.add_subcommand("train", "train an encoder");
  std::string train_data, train_config, train_out, train_log;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--data", train_data, "dataset file")->required();
  train->add_option("--config", train_config, "key=value training config")->required();
  train->add_option("-o,--output", train_out, "checkpoint file")->required();
  train->add_option("--seed", train_seed, "override the config seed");
  train->add_option("--log", train_log, "loss log CSV (default: stdout)");

  // embed
  auto* embed = app.add_subcommand("embed", "run the encoder over a dataset (eval mode)");
  std::string embed_data, embed_ckpt, embed_out;
  embed->add_option("--data", embed_data, "dataset file")->required();
  embed->add_option("--checkpoint", embed_ckpt, "encoder checkpoint")->required();
  embed->add_option("-o,--output", embed_out, "output dataset (.bin = binary, else text)")->required();

  // index
  auto* index = app.add_subcommand("index", "build a retrieval index over the gallery");
  std::string index_data, index_mode, index_out;
  bool index_cross = false;
  index->add_option("--data", index_data, "dataset file")->required();
  index->add_option("--mode", index_mode, "instance|centroid")
      ->required()
      ->check(CLI::IsMember({"instance", "centroid"}));
  index->add_flag("--cross-view", index_cross, "store leave-view-out centroid variants");
  index->add_option("-o,--output", index_out, "index file")->required();

  // query
  auto* query = app.add_subcommand("query", "rank gallery targets for every query record");
  std::string query_index, query_data, query_out;
  std::size_t query_k = 10;
  bool query_cross = false;
  query->add_option("--index", query_index, "index file")->required();
  query->add_option("--data", query_data, "dataset with query records")->required();
  query->add_option("--topk", query_k, "results per query")->required()->check(CLI::PositiveNumber);
  query->add_flag("--cross-view", query_cross, "exclude targets from the query's view");
  query->add_option("-o,--output", query_out, "ranking dump")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "mAP and Acc@K over the query split");
  std::string eval_data, eval_mode, eval_out;
  bool eval_cross = false;
  evaluate->add_option("--data", eval_data, "dataset file")->required();
  evaluate->add_option("--mode", eval_mode, "instance|centroid")
      ->required()
      ->check(CLI::IsMember({"instance", "centroid"}));
  evaluate->add_flag("--cross-view", eval_cross, "cross-view matching");
  evaluate->add_option("-o,--output", eval_out, "key=value report")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "time instance vs centroid retrieval");
  std::string bench_data, bench_out;
  std::size_t bench_repeats = 3, bench_threads = 1;
  bench->add_option("--data", bench_data, "dataset file")->required();
  bench->add_option("--repeats", bench_repeats, "timed repeats (>= 3)")->required()->check(CLI::Range(3, 1000000));
  bench->add_option("--threads", bench_threads, "query scoring threads")->check(CLI::PositiveNumber);
  bench->add_option("-o,--output", bench_out, "CSV report")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ctl: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*synth) {
      const auto ds = ctl::generate_synthetic(spec);
      ctl::save_dataset(ds, synth_out, ctl::format_for_path(synth_out));
      std::cout << "wrote " << ds.size() << " records (dim " << ds.dim() << ") to " << synth_out << "\n";
    } else if (*train) {
      auto cfg = ctl::load_train_config(train_config);
      if (train_seed) cfg.seed = *train_seed;
      const auto ds = ctl::load_dataset(train_data);
      const auto result = ctl::train(ds, cfg);
      ctl::save_checkpoint(result.encoder, train_out);
      const auto log = ctl::format_loss_log(result.log);
      if (train_log.empty()) {
        std::cout << log;
      } else {
        write_text(train_log, log);
      }
    } else if (*embed) {
      const auto ds = ctl::load_dataset(embed_data);
      const auto enc = ctl::load_checkpoint(embed_ckpt);
      if (enc.input_dim() != ds.dim()) {
        throw ctl::DataError("checkpoint expects dim " + std::to_string(enc.input_dim()) +
                             ", dataset has " + std::to_string(ds.dim()));
      }
      const auto out = ctl::embed_dataset(ds, enc);
      ctl::save_dataset(out, embed_out, ctl::format_for_path(embed_out));
    } else if (*index) {
      const auto ds = ctl::load_dataset(index_data);
      if (mode_from(index_mode) == ctl::EvalMode::instance) {
        ctl::save_index(ctl::build_instance_index(ds), index_out, false);
      } else {
        ctl::save_index(ctl::build_centroid_index(ds), index_out, index_cross);
      }
    } else if (*query) {
      const auto idx = ctl::load_index(query_index);
      const auto ds = ctl::load_dataset(query_data);
      std::vector<ctl::RankingResult> rankings;
      for (std::size_t pos : ds.split_members(ctl::Split::query)) {
        const auto& q = ds[pos];
        try {
          if (const auto* inst = std::get_if<ctl::InstanceIndex>(&idx)) {
            rankings.push_back(ctl::query_topk(*inst, q, query_k, query_cross));
          } else {
            rankings.push_back(
                ctl::query_topk(std::get<ctl::CentroidIndex>(idx), q, query_k, query_cross));
          }
        } catch (const ctl::NoEligibleTargets& e) {
          std::cerr << "ctl: skipping " << e.what() << "\n";
        } catch (const std::logic_error& e) {
          throw ctl::DataError(std::string(e.what()) + " (rebuild the index with --cross-view)");
        }
      }
      write_text(query_out, ctl::format_rankings(rankings));
    } else if (*evaluate) {
      const auto ds = ctl::load_dataset(eval_data);
      const auto report = ctl::evaluate(ds, mode_from(eval_mode), eval_cross);
      write_text(eval_out, ctl::format_report_kv(report));
      std::cout << ctl::format_report_table(report);
    } else if (*bench) {
      const auto ds = ctl::load_dataset(bench_data);
      ctl::BenchOptions opts;
      opts.repeats = bench_repeats;
      opts.threads = bench_threads;
      const auto report = ctl::bench_retrieval(
          ds, {ctl::EvalMode::instance, ctl::EvalMode::centroid}, opts,
          fs::path(bench_data).stem().string());
      const auto csv = ctl::format_bench_csv(report);
      write_text(bench_out, csv);
      std::cout << csv;
    }
  } catch (const ctl::DataError& e) {
    std::cerr << "ctl: " << e.what() << "\n";
    return kData;
  } catch (const ctl::DimensionMismatch& e) {
    std::cerr << "ctl: " << e.what() << "\n";
    return kData;
  } catch (const ctl::ZeroNormError& e) {
    std::cerr << "ctl: " << e.what() << "\n";
    return kData;
  } catch (const ctl::NoEligibleTargets& e) {
    std::cerr << "ctl: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "ctl: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
