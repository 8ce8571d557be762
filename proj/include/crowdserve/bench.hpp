#pragma once

#include <json.hpp>

#include "crowdserve/errors.hpp"
#include "crowdserve/workload.hpp"

namespace crowdserve {

struct BenchReport {
  double latency_p50_us = 0.0;
  double latency_p95_us = 0.0;
  double latency_p99_us = 0.0;
  double updates_per_s = 0.0;
  double pruning_ratio = 0.0;     // mean over queries of 1 - postings_scanned / N
  double oracle_agreement = 0.0;  // fraction of queries matching the oracle exactly
};

nlohmann::json to_json(const BenchReport& report);

// Builds the index from the generated registers, times the location-update
// stream, then times each query and cross-checks it against the full-scan
// oracle (the oracle runs outside the timed section).
Result<BenchReport> run_bench(const WorkloadSpec& spec);

}  // namespace crowdserve
