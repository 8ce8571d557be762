#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "crowdserve/errors.hpp"
#include "crowdserve/geo.hpp"
#include "crowdserve/model.hpp"

namespace crowdserve {

// Knobs of the ranking function. Defaults mirror ServiceQuery's.
struct ScoringParams {
  double alpha = 0.5;
  double lambda_base = 2.0;
  double max_distance_m = 10000.0;
  double recency_unit_s = 3600.0;  // staleness is measured in units of this

  static ScoringParams from_query(const ServiceQuery& query) {
    ScoringParams p;
    p.alpha = query.alpha;
    p.lambda_base = query.lambda_base;
    p.max_distance_m = query.max_distance_m;
    return p;
  }
};

// max(0, 1 - distance / max_distance_m)
double spatial_score(GeoPoint query_point, GeoPoint object_point, double max_distance_m);
double spatial_score_from_distance(double distance_m, double max_distance_m);

// |keywords ∩ skills| / |keywords|. Both sides canonical (sorted, deduped).
std::size_t intersect_count(std::span<const std::string> keywords,
                            std::span<const std::string> skills);
double textual_score(std::span<const std::string> keywords, std::span<const std::string> skills);
Result<double> textual_score_checked(std::span<const std::string> keywords,
                                     std::span<const std::string> skills);

// lambda^(-staleness) where staleness = max(0, query_t - object_t) / recency_unit_s.
double recency_score(std::int64_t query_t, std::int64_t object_t, double lambda_base,
                     double recency_unit_s);

// Single combination expression shared by scorer and bounds: because every
// operand enters it monotonically, component-wise upper bounds imply an upper
// bound on the total under the same roundings.
inline double combine(double spatial, double textual, double recency, double alpha) {
  return (alpha * spatial + (1.0 - alpha) * textual) * recency;
}

ScoreBreakdown combined_score(const ServiceQuery& query, const SpatialTextualObject& obj,
                              const ScoringParams& params);

// Validates the query first; use combined_score when it is already validated.
Result<ScoreBreakdown> combined_score_checked(const ServiceQuery& query,
                                              const SpatialTextualObject& obj,
                                              const ScoringParams& params);

}  // namespace crowdserve
