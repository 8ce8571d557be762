#include <doctest.h>

#include <set>
#include <string>

#include "crowdserve/bench.hpp"

using namespace crowdserve;

TEST_CASE("bench runs a small workload end to end") {
  WorkloadSpec spec;
  spec.object_count = 100;
  spec.world = {-1.0, 1.0, -1.0, 1.0};
  spec.vocab_size = 20;
  spec.duration_s = 20;
  spec.update_interval_s = {10, 10};
  spec.query_rate_qps = 2.0;
  spec.seed = 5;
  spec.query.max_distance_m = 50000;

  auto report = run_bench(spec);
  REQUIRE(report.ok());
  const auto& r = report.value();
  CHECK(r.latency_p50_us <= r.latency_p95_us);
  CHECK(r.latency_p95_us <= r.latency_p99_us);
  CHECK(r.latency_p50_us >= 0.0);
  CHECK(r.updates_per_s > 0.0);
  CHECK(r.pruning_ratio >= 0.0);
  CHECK(r.pruning_ratio <= 1.0);
  CHECK(r.oracle_agreement == 1.0);
}

TEST_CASE("report json carries exactly the six metric keys") {
  BenchReport r;
  r.latency_p50_us = 1.0;
  r.latency_p95_us = 2.0;
  r.latency_p99_us = 3.0;
  r.updates_per_s = 4.0;
  r.pruning_ratio = 0.5;
  r.oracle_agreement = 1.0;
  auto doc = to_json(r);
  std::set<std::string> keys;
  for (auto it = doc.begin(); it != doc.end(); ++it) keys.insert(it.key());
  CHECK(keys == std::set<std::string>{"latency_p50_us", "latency_p95_us", "latency_p99_us",
                                      "updates_per_s", "pruning_ratio", "oracle_agreement"});
  CHECK(doc["latency_p50_us"] == 1.0);
  CHECK(doc["pruning_ratio"] == 0.5);
}

TEST_CASE("bench rejects invalid specs") {
  WorkloadSpec spec;
  spec.object_count = 0;
  CHECK(run_bench(spec).status().code() == Errc::BadSpec);
}
