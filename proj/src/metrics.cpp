#include "ctl/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <optional>
#include <stdexcept>
#include <thread>

namespace ctl {

std::string_view to_string(EvalMode m) {
  return m == EvalMode::instance ? "instance" : "centroid";
}

EvalMode parse_eval_mode(std::string_view s) {
  if (s == "instance") return EvalMode::instance;
  if (s == "centroid") return EvalMode::centroid;
  throw std::invalid_argument("mode must be instance or centroid, got '" + std::string(s) + "'");
}

double average_precision(const RankingResult& ranking, std::size_t num_relevant_total) {
  if (num_relevant_total == 0) {
    throw std::invalid_argument("average precision needs at least one relevant target");
  }
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
    if (!ranking.entries[i].relevant) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(num_relevant_total);
}

int accuracy_at_k(const RankingResult& ranking, std::size_t k) {
  const std::size_t n = std::min(k, ranking.entries.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (ranking.entries[i].relevant) return 1;
  }
  return 0;
}

namespace {

struct QueryOutcome {
  double ap = 0.0;
  std::vector<int> hits;
};

// `rank` returns the full ranking and the number of relevant targets for a
// query, or nullopt when the query has nothing to be judged against.
using Ranker =
    std::function<std::optional<std::pair<RankingResult, std::size_t>>(const EmbeddingRecord&)>;

EvalReport run(const Dataset& ds, EvalMode mode, bool cross_view, std::size_t candidates,
               const EvalOptions& opts, const Ranker& rank) {
  const auto& queries = ds.split_members(Split::query);
  if (queries.empty()) throw DataError("dataset has no query records");

  std::vector<std::optional<QueryOutcome>> outcomes(queries.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto ranked = rank(ds[queries[i]]);
      if (!ranked || ranked->second == 0) continue;
      QueryOutcome o;
      o.ap = average_precision(ranked->first, ranked->second);
      for (std::size_t k : opts.ks) o.hits.push_back(accuracy_at_k(ranked->first, k));
      outcomes[i] = std::move(o);
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, queries.size()));
  if (threads == 1) {
    work(0, queries.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (queries.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(queries.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  EvalReport report;
  report.mode = mode;
  report.cross_view = cross_view;
  report.candidates = candidates;
  std::vector<double> acc(opts.ks.size(), 0.0);
  for (const auto& o : outcomes) {
    if (!o) {
      ++report.skipped;
      continue;
    }
    ++report.evaluated;
    report.mean_ap += o->ap;
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += o->hits[j];
  }
  if (report.evaluated == 0) throw DataError("no evaluable queries");
  const double inv = 1.0 / static_cast<double>(report.evaluated);
  report.mean_ap *= inv;
  for (std::size_t j = 0; j < acc.size(); ++j) report.acc_at_k[opts.ks[j]] = acc[j] * inv;
  return report;
}

}  // namespace

EvalReport evaluate(const Dataset& ds, const InstanceIndex& index, bool cross_view,
                    const EvalOptions& opts) {
  return run(ds, EvalMode::instance, cross_view, index.size(), opts,
             [&](const EmbeddingRecord& q) -> std::optional<std::pair<RankingResult, std::size_t>> {
               try {
                 auto r = rank_all(index, q, cross_view);
                 const auto relevant = static_cast<std::size_t>(
                     std::count_if(r.entries.begin(), r.entries.end(),
                                   [](const RankedTarget& e) { return e.relevant; }));
                 return std::make_pair(std::move(r), relevant);
               } catch (const NoEligibleTargets&) {
                 return std::nullopt;
               }
             });
}

EvalReport evaluate(const Dataset& ds, const CentroidIndex& index, bool cross_view,
                    const EvalOptions& opts) {
  return run(ds, EvalMode::centroid, cross_view, index.size(), opts,
             [&](const EmbeddingRecord& q) -> std::optional<std::pair<RankingResult, std::size_t>> {
               try {
                 auto r = rank_all(index, q, cross_view, opts.view_policy);
                 // positives collapse to the single centroid of the query class
                 const bool present = std::any_of(r.entries.begin(), r.entries.end(),
                                                  [](const RankedTarget& e) { return e.relevant; });
                 return std::make_pair(std::move(r), std::size_t{present ? 1u : 0u});
               } catch (const NoEligibleTargets&) {
                 return std::nullopt;
               }
             });
}

EvalReport evaluate(const Dataset& ds, EvalMode mode, bool cross_view, const EvalOptions& opts) {
  if (mode == EvalMode::instance) return evaluate(ds, build_instance_index(ds), cross_view, opts);
  return evaluate(ds, build_centroid_index(ds), cross_view, opts);
}

std::string format_report_table(const EvalReport& r) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "mode        %s%s\n", std::string(to_string(r.mode)).c_str(),
                r.cross_view ? " (cross-view)" : "");
  out += buf;
  std::snprintf(buf, sizeof(buf), "candidates  %zu\n", r.candidates);
  out += buf;
  std::snprintf(buf, sizeof(buf), "queries     %zu evaluated, %zu skipped\n", r.evaluated,
                r.skipped);
  out += buf;
  std::snprintf(buf, sizeof(buf), "mAP         %.4f\n", r.mean_ap);
  out += buf;
  for (const auto& [k, v] : r.acc_at_k) {
    std::snprintf(buf, sizeof(buf), "Acc@%-7zu %.4f\n", k, v);
    out += buf;
  }
  return out;
}

std::string format_report_kv(const EvalReport& r) {
  std::string out;
  char buf[128];
  out += "mode=" + std::string(to_string(r.mode)) + "\n";
  out += std::string("cross_view=") + (r.cross_view ? "1" : "0") + "\n";
  out += "candidates=" + std::to_string(r.candidates) + "\n";
  out += "queries_evaluated=" + std::to_string(r.evaluated) + "\n";
  out += "queries_skipped=" + std::to_string(r.skipped) + "\n";
  std::snprintf(buf, sizeof(buf), "mAP=%.9g\n", r.mean_ap);
  out += buf;
  for (const auto& [k, v] : r.acc_at_k) {
    std::snprintf(buf, sizeof(buf), "acc@%zu=%.9g\n", k, v);
    out += buf;
  }
  return out;
}

}  // namespace ctl
