#include "crowdserve/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <variant>

#include "crowdserve/big_tree.hpp"
#include "crowdserve/topk.hpp"

namespace crowdserve {

namespace {

using Clock = std::chrono::steady_clock;

double micros_since(Clock::time_point start) {
  return std::chrono::duration<double, std::micro>(Clock::now() - start).count();
}

// Nearest-rank percentile over a sorted ascending sample.
double percentile(const std::vector<double>& sorted, double pct) {
  if (sorted.empty()) return 0.0;
  double rank = std::ceil(pct / 100.0 * static_cast<double>(sorted.size()));
  std::size_t idx = static_cast<std::size_t>(std::max(rank, 1.0)) - 1;
  return sorted[std::min(idx, sorted.size() - 1)];
}

}  // namespace

nlohmann::json to_json(const BenchReport& report) {
  nlohmann::json doc;
  doc["latency_p50_us"] = report.latency_p50_us;
  doc["latency_p95_us"] = report.latency_p95_us;
  doc["latency_p99_us"] = report.latency_p99_us;
  doc["updates_per_s"] = report.updates_per_s;
  doc["pruning_ratio"] = report.pruning_ratio;
  doc["oracle_agreement"] = report.oracle_agreement;
  return doc;
}

Result<BenchReport> run_bench(const WorkloadSpec& spec) {
  auto workload = generate_workload(spec);
  if (!workload.ok()) return workload.error();

  BigTreeConfig config;
  config.world = spec.world;
  BigTree index(config);

  std::vector<const TurkEvent*> updates;
  for (const TurkEvent& event : workload.value().events) {
    if (event.kind == EventKind::Register) {
      Status st = index.insert(std::get<SpatialTextualObject>(event.payload));
      if (!st.ok()) return st.error();
    } else if (event.kind == EventKind::LocationUpdate) {
      updates.push_back(&event);
    }
  }

  BenchReport report;

  auto update_start = Clock::now();
  for (const TurkEvent* event : updates) {
    const auto& p = std::get<LocationUpdatePayload>(event->payload);
    Status st = index.update_location(event->object_id, {p.lat, p.lon}, p.positioned_at);
    if (!st.ok()) return st.error();
  }
  double update_secs = std::chrono::duration<double>(Clock::now() - update_start).count();
  report.updates_per_s =
      static_cast<double>(updates.size()) / std::max(update_secs, 1e-9);

  const double n = static_cast<double>(index.size());
  std::vector<const SpatialTextualObject*> pool = index.all_objects();

  std::vector<double> latencies;
  latencies.reserve(workload.value().queries.size());
  double pruning_sum = 0.0;
  std::size_t agree = 0;

  for (const ServiceQuery& query : workload.value().queries) {
    ScoringParams params = ScoringParams::from_query(query);
    QueryStats stats;
    auto query_start = Clock::now();
    auto got = top_k(index, query, params, &stats);
    latencies.push_back(micros_since(query_start));
    if (!got.ok()) return got.error();

    double scanned = static_cast<double>(stats.postings_scanned);
    pruning_sum += n > 0.0 ? std::max(0.0, 1.0 - scanned / n) : 0.0;

    auto expected = top_k_oracle(pool, query, params);
    if (!expected.ok()) return expected.error();
    if (got.value() == expected.value()) ++agree;
  }

  std::sort(latencies.begin(), latencies.end());
  report.latency_p50_us = percentile(latencies, 50.0);
  report.latency_p95_us = percentile(latencies, 95.0);
  report.latency_p99_us = percentile(latencies, 99.0);

  std::size_t query_count = workload.value().queries.size();
  report.pruning_ratio = query_count > 0 ? pruning_sum / static_cast<double>(query_count) : 0.0;
  report.oracle_agreement =
      query_count > 0 ? static_cast<double>(agree) / static_cast<double>(query_count) : 1.0;
  return report;
}

}  // namespace crowdserve
