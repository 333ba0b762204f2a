#pragma once

// Storage and wall-clock comparison of instance vs centroid retrieval.

#include <string>
#include <vector>

#include "ctl/io.hpp"
#include "ctl/metrics.hpp"

namespace ctl {

struct BenchOptions {
  std::size_t repeats = 3;  // >= 3; the median is reported
  bool cross_view = false;
  std::size_t threads = 1;
};

struct BenchRow {
  EvalMode mode = EvalMode::instance;
  std::size_t candidates = 0;
  std::uint64_t file_bytes = 0;     // binary embeddings file for the candidates
  std::uint64_t payload_bytes = 0;  // 4 * D * candidates
  double index_build_seconds = 0.0;
  double eval_seconds = 0.0;        // median over repeats
  std::vector<double> samples;      // every timed repeat, warm-up excluded
  std::size_t threads = 1;
};

struct BenchReport {
  std::string dataset;
  std::size_t dim = 0;
  std::size_t queries = 0;
  std::vector<BenchRow> rows;
};

/// For each mode: build the index (timed separately), run one discarded
/// warm-up evaluation, then `repeats` timed evaluations of every query
/// (scoring + ranking + metrics) on a monotonic clock.
BenchReport bench_retrieval(const Dataset& ds, const std::vector<EvalMode>& modes,
                            const BenchOptions& opts, const std::string& dataset_name = "dataset");

/// "dataset,mode,candidates,bytes,seconds" plus one line per row.
std::string format_bench_csv(const BenchReport& report);

double median(std::vector<double> v);

}  // namespace ctl
