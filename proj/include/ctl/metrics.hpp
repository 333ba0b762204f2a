#pragma once

// Retrieval quality: non-interpolated average precision over the full
// ranking, and Accuracy@K (CMC) for K in {1, 5, 10, 20, 50}.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ctl/io.hpp"
#include "ctl/retrieval.hpp"

namespace ctl {

enum class EvalMode { instance, centroid };

std::string_view to_string(EvalMode m);
EvalMode parse_eval_mode(std::string_view s);

inline const std::vector<std::size_t> kDefaultAccuracyKs = {1, 5, 10, 20, 50};

/// (1/num_relevant_total) * sum over relevant ranks r of hits(<= r) / r.
/// Throws std::invalid_argument when num_relevant_total == 0.
double average_precision(const RankingResult& ranking, std::size_t num_relevant_total);

/// 1 if a relevant target is among the first min(k, size) entries, else 0.
int accuracy_at_k(const RankingResult& ranking, std::size_t k);

struct EvalOptions {
  std::vector<std::size_t> ks = kDefaultAccuracyKs;
  CentroidViewPolicy view_policy = CentroidViewPolicy::leave_view_out;
  /// Worker threads for per-query scoring; results are reduced in query
  /// order so the report does not depend on this.
  std::size_t threads = 1;
};

struct EvalReport {
  EvalMode mode = EvalMode::instance;
  bool cross_view = false;
  double mean_ap = 0.0;
  std::map<std::size_t, double> acc_at_k;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  std::size_t candidates = 0;  // targets in the index

  bool operator==(const EvalReport&) const = default;
};

/// Evaluates every query-split record. Queries with no relevant target
/// (or no eligible target at all) after filtering are skipped and counted.
/// Throws DataError when the query split is empty or nothing is evaluable.
EvalReport evaluate(const Dataset& ds, const InstanceIndex& index, bool cross_view,
                    const EvalOptions& opts = {});
EvalReport evaluate(const Dataset& ds, const CentroidIndex& index, bool cross_view,
                    const EvalOptions& opts = {});

/// Builds the index for `mode` and evaluates.
EvalReport evaluate(const Dataset& ds, EvalMode mode, bool cross_view,
                    const EvalOptions& opts = {});

/// Human-readable table.
std::string format_report_table(const EvalReport& r);
/// key=value lines.
std::string format_report_kv(const EvalReport& r);

}  // namespace ctl
