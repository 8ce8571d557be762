#include "crowdserve/scoring.hpp"

#include <algorithm>
#include <cmath>

namespace crowdserve {

double spatial_score_from_distance(double distance_m, double max_distance_m) {
  return std::max(0.0, 1.0 - distance_m / max_distance_m);
}

double spatial_score(GeoPoint query_point, GeoPoint object_point, double max_distance_m) {
  return spatial_score_from_distance(haversine_m(query_point, object_point), max_distance_m);
}

std::size_t intersect_count(std::span<const std::string> keywords,
                            std::span<const std::string> skills) {
  std::size_t hits = 0;
  auto kw = keywords.begin();
  auto sk = skills.begin();
  while (kw != keywords.end() && sk != skills.end()) {
    int cmp = kw->compare(*sk);
    if (cmp == 0) {
      ++hits;
      ++kw;
      ++sk;
    } else if (cmp < 0) {
      ++kw;
    } else {
      ++sk;
    }
  }
  return hits;
}

double textual_score(std::span<const std::string> keywords,
                     std::span<const std::string> skills) {
  if (keywords.empty()) return 0.0;
  return static_cast<double>(intersect_count(keywords, skills)) /
         static_cast<double>(keywords.size());
}

Result<double> textual_score_checked(std::span<const std::string> keywords,
                                     std::span<const std::string> skills) {
  if (keywords.empty())
    return Result<double>::fail(Errc::EmptyQuery, "textual score needs at least one keyword");
  return textual_score(keywords, skills);
}

double recency_score(std::int64_t query_t, std::int64_t object_t, double lambda_base,
                     double recency_unit_s) {
  std::int64_t gap = query_t > object_t ? query_t - object_t : 0;
  double staleness = static_cast<double>(gap) / recency_unit_s;
  if (staleness == 0.0) return 1.0;
  // exp2 keeps lambda_base == 2 exact: 2^-n for integer n has no rounding.
  return std::exp2(-staleness * std::log2(lambda_base));
}

ScoreBreakdown combined_score(const ServiceQuery& query, const SpatialTextualObject& obj,
                              const ScoringParams& params) {
  ScoreBreakdown s;
  s.spatial = spatial_score(query.location(), obj.position(), params.max_distance_m);
  s.textual = textual_score(query.keywords, obj.skills);
  s.recency =
      recency_score(query.issued_at, obj.positioned_at, params.lambda_base, params.recency_unit_s);
  s.total = combine(s.spatial, s.textual, s.recency, params.alpha);
  return s;
}

Result<ScoreBreakdown> combined_score_checked(const ServiceQuery& query,
                                              const SpatialTextualObject& obj,
                                              const ScoringParams& params) {
  Status valid = validate_query(query);
  if (!valid.ok()) return valid;
  return combined_score(query, obj, params);
}

}  // namespace crowdserve
