#include "ctl/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <stdexcept>

namespace ctl {

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename Index>
BenchRow time_mode(const Dataset& ds, EvalMode mode, const BenchOptions& opts,
                   Index (*build)(const Dataset&)) {
  BenchRow row;
  row.mode = mode;
  row.threads = opts.threads;
  const auto t0 = Clock::now();
  const Index index = build(ds);
  row.index_build_seconds = seconds_since(t0);
  row.candidates = index.size();
  row.file_bytes = binary_file_bytes(ds.dim(), row.candidates);
  row.payload_bytes = vector_payload_bytes(ds.dim(), row.candidates);

  EvalOptions eo;
  eo.threads = opts.threads;
  evaluate(ds, index, opts.cross_view, eo);  // warm-up
  for (std::size_t r = 0; r < opts.repeats; ++r) {
    const auto t = Clock::now();
    evaluate(ds, index, opts.cross_view, eo);
    row.samples.push_back(seconds_since(t));
  }
  row.eval_seconds = median(row.samples);
  return row;
}

CentroidIndex build_full_centroid(const Dataset& ds) { return build_centroid_index(ds); }

}  // namespace

BenchReport bench_retrieval(const Dataset& ds, const std::vector<EvalMode>& modes,
                            const BenchOptions& opts, const std::string& dataset_name) {
  if (opts.repeats < 3) throw std::invalid_argument("bench needs at least 3 repeats");
  BenchReport report;
  report.dataset = dataset_name;
  report.dim = ds.dim();
  report.queries = ds.count(Split::query);
  for (EvalMode m : modes) {
    if (m == EvalMode::instance) {
      report.rows.push_back(time_mode<InstanceIndex>(ds, m, opts, &build_instance_index));
    } else {
      report.rows.push_back(time_mode<CentroidIndex>(ds, m, opts, &build_full_centroid));
    }
  }
  return report;
}

std::string format_bench_csv(const BenchReport& report) {
  std::string out = "dataset,mode,candidates,bytes,seconds\n";
  char buf[256];
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s%s,%zu,%llu,%.6f\n", report.dataset.c_str(),
                  std::string(to_string(row.mode)).c_str(), row.threads > 1 ? "-parallel" : "",
                  row.candidates, static_cast<unsigned long long>(row.file_bytes),
                  row.eval_seconds);
    out += buf;
  }
  return out;
}

}  // namespace ctl
