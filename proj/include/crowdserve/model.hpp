#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "crowdserve/errors.hpp"
#include "crowdserve/geo.hpp"

namespace crowdserve {

// A volunteer's advertised skills plus last known position. Skills are kept
// canonical: lowercase, trimmed, deduplicated, sorted.
struct SpatialTextualObject {
  std::string id;
  std::vector<std::string> skills;
  double lat = 0.0;
  double lon = 0.0;
  std::int64_t positioned_at = 0;

  GeoPoint position() const { return {lat, lon}; }
  bool has_skill(const std::string& token) const;
  bool operator==(const SpatialTextualObject&) const = default;
};

struct ServiceQuery {
  std::vector<std::string> keywords;  // canonical, like skills
  double lat = 0.0;
  double lon = 0.0;
  std::int64_t issued_at = 0;
  int k = 10;
  double alpha = 0.5;            // spatial-vs-textual weight
  double lambda_base = 2.0;      // recency decay base, > 1
  double max_distance_m = 10000.0;

  GeoPoint location() const { return {lat, lon}; }
};

struct ScoreBreakdown {
  double spatial = 0.0;
  double textual = 0.0;
  double recency = 0.0;
  double total = 0.0;

  bool operator==(const ScoreBreakdown&) const = default;
};

// Rating context: discretized (time-of-day bucket, depth-8 cell, skill domain).
struct ContextVector {
  std::string time_bucket;
  std::string location_cell;
  std::string skill_domain;

  bool operator==(const ContextVector&) const = default;
};

struct RatingRecord {
  std::string user_id;
  std::string turk_id;
  ContextVector context;
  double rating = 0.0;  // in [1, 5]
  std::int64_t at = 0;

  bool operator==(const RatingRecord&) const = default;
};

enum class EventKind { Register, ProfileUpdate, LocationUpdate, Rating, Response };

const char* event_kind_name(EventKind kind);
Result<EventKind> event_kind_from_name(const std::string& name);

struct ProfileUpdatePayload {
  std::vector<std::string> add_skills;
  std::vector<std::string> remove_skills;
  bool operator==(const ProfileUpdatePayload&) const = default;
};

struct LocationUpdatePayload {
  double lat = 0.0;
  double lon = 0.0;
  std::int64_t positioned_at = 0;
  bool operator==(const LocationUpdatePayload&) const = default;
};

struct ResponsePayload {
  std::string session_id;
  std::string verdict;  // ACCEPT / REFUSE / IGNORE
  bool operator==(const ResponsePayload&) const = default;
};

struct TurkEvent {
  EventKind kind = EventKind::Register;
  std::string object_id;
  std::int64_t at = 0;
  std::variant<SpatialTextualObject, ProfileUpdatePayload, LocationUpdatePayload, RatingRecord,
               ResponsePayload>
      payload;

  bool operator==(const TurkEvent&) const = default;
};

// Lowercase + trim + dedupe + sort. Tokens that trim to nothing are dropped.
std::vector<std::string> canonicalize_tokens(std::span<const std::string> raw);

// Canonicalizes and validates one raw record; see to_json for the field names.
Result<SpatialTextualObject> validate_object(const nlohmann::json& raw);

Status validate_query(const ServiceQuery& query);

// Canonical JSON (one object per log/snapshot line).
nlohmann::json to_json(const SpatialTextualObject& obj);
nlohmann::json to_json(const ContextVector& ctx);
nlohmann::json to_json(const RatingRecord& rating);
nlohmann::json to_json(const TurkEvent& event);

Result<ContextVector> context_from_json(const nlohmann::json& raw);
Result<RatingRecord> rating_from_json(const nlohmann::json& raw);
Result<TurkEvent> event_from_json(const nlohmann::json& raw);

}  // namespace crowdserve
