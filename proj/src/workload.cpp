#include "crowdserve/workload.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "crowdserve/rng.hpp"

namespace crowdserve {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

Status bad_spec(const std::string& msg) { return Status::fail(Errc::BadSpec, msg); }

Result<double> spec_number(const json& v, const char* name) {
  if (!v.is_number()) return bad_spec(std::string(name) + " must be a number").error();
  return v.get<double>();
}

Result<std::int64_t> spec_integer(const json& v, const char* name) {
  if (!v.is_number_integer())
    return bad_spec(std::string(name) + " must be an integer").error();
  return v.get<std::int64_t>();
}

Result<IntRange> spec_int_range(const json& v, const char* name) {
  if (!v.is_array() || v.size() != 2)
    return bad_spec(std::string(name) + " must be a [min, max] pair").error();
  auto lo = spec_integer(v[0], name);
  if (!lo.ok()) return lo.error();
  auto hi = spec_integer(v[1], name);
  if (!hi.ok()) return hi.error();
  return IntRange{lo.value(), hi.value()};
}

Result<RealRange> spec_real_range(const json& v, const char* name) {
  if (!v.is_array() || v.size() != 2)
    return bad_spec(std::string(name) + " must be a [min, max] pair").error();
  auto lo = spec_number(v[0], name);
  if (!lo.ok()) return lo.error();
  auto hi = spec_number(v[1], name);
  if (!hi.ok()) return hi.error();
  return RealRange{lo.value(), hi.value()};
}

std::string padded(const char* prefix, std::size_t index, int width) {
  std::string digits = std::to_string(index);
  if (static_cast<int>(digits.size()) < width)
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

int digits_of(std::size_t n) {
  int d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

// One standard normal via Box-Muller; consumes exactly two doubles.
double next_normal(SplitMix64& rng) {
  double u1 = 1.0 - rng.next_double();  // (0, 1], keeps the log finite
  double u2 = rng.next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

GeoPoint offset_by_meters(GeoPoint base, double north_m, double east_m) {
  double lat = base.lat + (north_m / kEarthRadiusM) * (180.0 / kPi);
  double cos_lat = std::max(std::cos(base.lat * kPi / 180.0), 1e-6);
  double lon = base.lon + (east_m / (kEarthRadiusM * cos_lat)) * (180.0 / kPi);
  return {lat, lon};
}

GeoPoint clamp_to(const BoundingBox& box, GeoPoint p) {
  p.lat = std::clamp(p.lat, box.lat_min, box.lat_max);
  p.lon = std::clamp(p.lon, box.lon_min, box.lon_max);
  return p;
}

GeoPoint uniform_point(SplitMix64& rng, const BoundingBox& box) {
  double lat = rng.next_double(box.lat_min, box.lat_max);
  double lon = rng.next_double(box.lon_min, box.lon_max);
  return {lat, lon};
}

std::int64_t draw_interval(SplitMix64& rng, const IntRange& range) {
  if (range.min == range.max) return range.min;
  return range.min +
         static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(range.max - range.min + 1)));
}

std::vector<std::string> draw_distinct_tokens(SplitMix64& rng, const ZipfSampler& zipf,
                                              std::size_t count, int token_width) {
  std::set<std::size_t> ranks;
  while (ranks.size() < count) ranks.insert(zipf.sample(rng));
  std::vector<std::string> tokens;
  tokens.reserve(count);
  for (std::size_t r : ranks) tokens.push_back(padded("s", r, token_width));
  return tokens;
}

}  // namespace

Status validate_spec(const WorkloadSpec& spec) {
  if (spec.object_count < 1) return bad_spec("object_count must be >= 1");
  if (!spec.world.valid()) return bad_spec("world box is invalid");
  if (spec.vocab_size < 1) return bad_spec("vocab_size must be >= 1");
  if (!(spec.zipf_exponent >= 0.0)) return bad_spec("zipf_exponent must be >= 0");
  if (spec.skills_per_object.min < 1 ||
      spec.skills_per_object.min > spec.skills_per_object.max ||
      spec.skills_per_object.max > spec.vocab_size)
    return bad_spec("skills_per_object must satisfy 1 <= min <= max <= vocab_size");
  if (!(spec.speed_mps.min >= 0.0) || spec.speed_mps.min > spec.speed_mps.max)
    return bad_spec("speed_mps must satisfy 0 <= min <= max");
  if (spec.update_interval_s.min < 1 ||
      spec.update_interval_s.min > spec.update_interval_s.max)
    return bad_spec("update_interval_s must satisfy 1 <= min <= max");
  if (!(spec.query_rate_qps >= 0.0)) return bad_spec("query_rate_qps must be >= 0");
  if (spec.query_keywords.min < 1 || spec.query_keywords.min > spec.query_keywords.max ||
      spec.query_keywords.max > spec.vocab_size)
    return bad_spec("query_keywords must satisfy 1 <= min <= max <= vocab_size");
  if (spec.duration_s < 1) return bad_spec("duration_s must be >= 1");
  if (spec.clusters) {
    if (spec.clusters->count < 1) return bad_spec("clusters.count must be >= 1");
    if (!(spec.clusters->sigma_m > 0.0)) return bad_spec("clusters.sigma_m must be > 0");
  }
  if (spec.query.k < 1) return bad_spec("query.k must be >= 1");
  if (!(spec.query.alpha >= 0.0 && spec.query.alpha <= 1.0))
    return bad_spec("query.alpha must be in [0, 1]");
  if (!(spec.query.lambda_base > 1.0)) return bad_spec("query.lambda must be > 1");
  if (!(spec.query.max_distance_m > 0.0)) return bad_spec("query.dmax_m must be > 0");
  return Status();
}

Result<WorkloadSpec> workload_spec_from_json(const json& raw) {
  if (!raw.is_object()) return bad_spec("workload spec must be a JSON object").error();

  static const std::set<std::string> known = {
      "object_count",  "world",          "vocab_size", "zipf_exponent",
      "skills_per_object", "speed_mps",  "update_interval_s", "query_rate_qps",
      "query_keywords", "duration_s",    "seed",       "clusters",
      "query"};
  for (auto it = raw.begin(); it != raw.end(); ++it) {
    if (!known.count(it.key()))
      return bad_spec("unknown spec field: " + it.key()).error();
  }

  WorkloadSpec spec;
  if (raw.contains("object_count")) {
    auto v = spec_integer(raw["object_count"], "object_count");
    if (!v.ok()) return v.error();
    spec.object_count = static_cast<int>(v.value());
  }
  if (raw.contains("world")) {
    const auto& w = raw["world"];
    if (!w.is_object()) return bad_spec("world must be an object").error();
    for (const char* f : {"lat_min", "lat_max", "lon_min", "lon_max"}) {
      if (!w.contains(f) || !w[f].is_number())
        return bad_spec(std::string("world.") + f + " must be a number").error();
    }
    spec.world = BoundingBox{w["lat_min"].get<double>(), w["lat_max"].get<double>(),
                             w["lon_min"].get<double>(), w["lon_max"].get<double>()};
  }
  if (raw.contains("vocab_size")) {
    auto v = spec_integer(raw["vocab_size"], "vocab_size");
    if (!v.ok()) return v.error();
    spec.vocab_size = static_cast<int>(v.value());
  }
  if (raw.contains("zipf_exponent")) {
    auto v = spec_number(raw["zipf_exponent"], "zipf_exponent");
    if (!v.ok()) return v.error();
    spec.zipf_exponent = v.value();
  }
  if (raw.contains("skills_per_object")) {
    auto v = spec_int_range(raw["skills_per_object"], "skills_per_object");
    if (!v.ok()) return v.error();
    spec.skills_per_object = v.value();
  }
  if (raw.contains("speed_mps")) {
    auto v = spec_real_range(raw["speed_mps"], "speed_mps");
    if (!v.ok()) return v.error();
    spec.speed_mps = v.value();
  }
  if (raw.contains("update_interval_s")) {
    auto v = spec_int_range(raw["update_interval_s"], "update_interval_s");
    if (!v.ok()) return v.error();
    spec.update_interval_s = v.value();
  }
  if (raw.contains("query_rate_qps")) {
    auto v = spec_number(raw["query_rate_qps"], "query_rate_qps");
    if (!v.ok()) return v.error();
    spec.query_rate_qps = v.value();
  }
  if (raw.contains("query_keywords")) {
    auto v = spec_int_range(raw["query_keywords"], "query_keywords");
    if (!v.ok()) return v.error();
    spec.query_keywords = v.value();
  }
  if (raw.contains("duration_s")) {
    auto v = spec_integer(raw["duration_s"], "duration_s");
    if (!v.ok()) return v.error();
    spec.duration_s = v.value();
  }
  if (raw.contains("seed")) {
    if (!raw["seed"].is_number_integer())
      return bad_spec("seed must be an integer").error();
    spec.seed = raw["seed"].get<std::uint64_t>();
  }
  if (raw.contains("clusters") && !raw["clusters"].is_null()) {
    const auto& c = raw["clusters"];
    if (!c.is_object()) return bad_spec("clusters must be an object").error();
    ClusterSpec cs;
    if (!c.contains("count") || !c["count"].is_number_integer())
      return bad_spec("clusters.count must be an integer").error();
    cs.count = c["count"].get<int>();
    if (!c.contains("sigma_m") || !c["sigma_m"].is_number())
      return bad_spec("clusters.sigma_m must be a number").error();
    cs.sigma_m = c["sigma_m"].get<double>();
    spec.clusters = cs;
  }
  if (raw.contains("query")) {
    const auto& q = raw["query"];
    if (!q.is_object()) return bad_spec("query must be an object").error();
    if (q.contains("k")) {
      auto v = spec_integer(q["k"], "query.k");
      if (!v.ok()) return v.error();
      spec.query.k = static_cast<int>(v.value());
    }
    if (q.contains("alpha")) {
      auto v = spec_number(q["alpha"], "query.alpha");
      if (!v.ok()) return v.error();
      spec.query.alpha = v.value();
    }
    if (q.contains("lambda")) {
      auto v = spec_number(q["lambda"], "query.lambda");
      if (!v.ok()) return v.error();
      spec.query.lambda_base = v.value();
    }
    if (q.contains("dmax_m")) {
      auto v = spec_number(q["dmax_m"], "query.dmax_m");
      if (!v.ok()) return v.error();
      spec.query.max_distance_m = v.value();
    }
  }

  Status st = validate_spec(spec);
  if (!st.ok()) return st.error();
  return spec;
}

Result<WorkloadSpec> load_workload_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    return Status::fail(Errc::IoError, "open " + path + ": " + std::strerror(errno)).error();
  std::stringstream buffer;
  buffer << in.rdbuf();
  json raw = json::parse(buffer.str(), nullptr, false);
  if (raw.is_discarded()) return bad_spec("spec file is not valid JSON").error();
  return workload_spec_from_json(raw);
}

Result<Workload> generate_workload(const WorkloadSpec& spec) {
  Status st = validate_spec(spec);
  if (!st.ok()) return st.error();

  const std::size_t n = static_cast<std::size_t>(spec.object_count);
  const int id_width = digits_of(n == 0 ? 1 : n - 1);
  const int token_width = digits_of(static_cast<std::size_t>(spec.vocab_size - 1));

  SplitMix64 root(spec.seed);
  SplitMix64 placement = root.fork(1);
  SplitMix64 skills_rng = root.fork(2);
  SplitMix64 motion_root = root.fork(3);
  SplitMix64 query_rng = root.fork(4);

  ZipfSampler zipf(static_cast<std::size_t>(spec.vocab_size), spec.zipf_exponent);

  // Cluster centers come first so placement draws stay aligned.
  std::vector<GeoPoint> centers;
  if (spec.clusters) {
    centers.reserve(static_cast<std::size_t>(spec.clusters->count));
    for (int c = 0; c < spec.clusters->count; ++c)
      centers.push_back(uniform_point(placement, spec.world));
  }

  std::vector<GeoPoint> start(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (spec.clusters) {
      GeoPoint center = centers[placement.next_below(centers.size())];
      double north = next_normal(placement) * spec.clusters->sigma_m;
      double east = next_normal(placement) * spec.clusters->sigma_m;
      start[i] = clamp_to(spec.world, offset_by_meters(center, north, east));
    } else {
      start[i] = uniform_point(placement, spec.world);
    }
  }

  Workload out;
  out.events.reserve(n * 2);

  for (std::size_t i = 0; i < n; ++i) {
    std::string id = padded("t", i, id_width);
    std::size_t skill_count = static_cast<std::size_t>(
        spec.skills_per_object.min +
        static_cast<std::int64_t>(skills_rng.next_below(static_cast<std::uint64_t>(
            spec.skills_per_object.max - spec.skills_per_object.min + 1))));
    SpatialTextualObject obj;
    obj.id = id;
    obj.skills = draw_distinct_tokens(skills_rng, zipf, skill_count, token_width);
    obj.lat = start[i].lat;
    obj.lon = start[i].lon;
    obj.positioned_at = 0;
    out.events.push_back(TurkEvent{EventKind::Register, id, 0, std::move(obj)});
  }

  // Random waypoint: head for a uniform target at a per-leg speed, redrawing
  // target and speed on arrival. Each object owns a forked stream so its
  // trajectory is independent of the others' schedules.
  for (std::size_t i = 0; i < n; ++i) {
    SplitMix64 rng = motion_root.fork(i);
    std::string id = padded("t", i, id_width);
    GeoPoint pos = start[i];
    GeoPoint target = uniform_point(rng, spec.world);
    double speed = rng.next_double(spec.speed_mps.min, spec.speed_mps.max);
    std::int64_t t = 0;
    while (true) {
      std::int64_t dt = draw_interval(rng, spec.update_interval_s);
      t += dt;
      if (t > spec.duration_s) break;
      double travel = speed * static_cast<double>(dt);
      double dist = haversine_m(pos, target);
      if (travel >= dist) {
        pos = target;
        target = uniform_point(rng, spec.world);
        speed = rng.next_double(spec.speed_mps.min, spec.speed_mps.max);
      } else if (dist > 0.0) {
        double f = travel / dist;
        pos = {pos.lat + (target.lat - pos.lat) * f, pos.lon + (target.lon - pos.lon) * f};
      }
      out.events.push_back(
          TurkEvent{EventKind::LocationUpdate, id, t, LocationUpdatePayload{pos.lat, pos.lon, t}});
    }
  }

  // Registers sit at t=0 and intervals are >= 1 s, so (at, id) is already a
  // strict order over the stream.
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const TurkEvent& a, const TurkEvent& b) {
                     if (a.at != b.at) return a.at < b.at;
                     return a.object_id < b.object_id;
                   });

  std::size_t query_count =
      static_cast<std::size_t>(std::llround(spec.query_rate_qps * static_cast<double>(spec.duration_s)));
  out.queries.reserve(query_count);
  for (std::size_t q = 0; q < query_count; ++q) {
    GeoPoint anchor = start[query_rng.next_below(n)];
    std::size_t kw_count = static_cast<std::size_t>(
        spec.query_keywords.min +
        static_cast<std::int64_t>(query_rng.next_below(static_cast<std::uint64_t>(
            spec.query_keywords.max - spec.query_keywords.min + 1))));
    ServiceQuery query;
    query.keywords = draw_distinct_tokens(query_rng, zipf, kw_count, token_width);
    query.lat = anchor.lat;
    query.lon = anchor.lon;
    query.issued_at = spec.duration_s;
    query.k = spec.query.k;
    query.alpha = spec.query.alpha;
    query.lambda_base = spec.query.lambda_base;
    query.max_distance_m = spec.query.max_distance_m;
    out.queries.push_back(std::move(query));
  }

  return out;
}

}  // namespace crowdserve
