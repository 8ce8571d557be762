#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdserve/errors.hpp"
#include "crowdserve/geo.hpp"
#include "crowdserve/model.hpp"

namespace crowdserve {

struct IntRange {
  std::int64_t min = 0;
  std::int64_t max = 0;
};

struct RealRange {
  double min = 0.0;
  double max = 0.0;
};

// Objects cluster around `count` Gaussian blobs instead of spreading
// uniformly over the world box.
struct ClusterSpec {
  int count = 1;
  double sigma_m = 1000.0;
};

struct WorkloadQueryParams {
  int k = 10;
  double alpha = 0.5;
  double lambda_base = 2.0;
  double max_distance_m = 10000.0;
};

struct WorkloadSpec {
  int object_count = 1000;
  BoundingBox world = BoundingBox::world();
  int vocab_size = 100;
  double zipf_exponent = 1.0;
  IntRange skills_per_object{1, 4};
  RealRange speed_mps{0.0, 2.0};
  IntRange update_interval_s{10, 10};
  double query_rate_qps = 1.0;
  IntRange query_keywords{1, 3};
  std::int64_t duration_s = 60;
  std::uint64_t seed = 0;
  std::optional<ClusterSpec> clusters;
  WorkloadQueryParams query;
};

Status validate_spec(const WorkloadSpec& spec);

// Strict: unknown keys and malformed fields are BAD_SPEC.
Result<WorkloadSpec> workload_spec_from_json(const nlohmann::json& raw);
Result<WorkloadSpec> load_workload_spec(const std::string& path);

struct Workload {
  std::vector<TurkEvent> events;       // REGISTERs at t=0, then location updates
  std::vector<ServiceQuery> queries;   // the mix to run after the stream
};

// Deterministic in spec.seed. Objects register at t=0 and then move by
// random waypoint inside the world box, emitting LOCATION_UPDATE events on
// their per-object schedule; queries are anchored at object start positions
// and issued at t=duration.
Result<Workload> generate_workload(const WorkloadSpec& spec);

}  // namespace crowdserve
