#include "crowdserve/model.hpp"

#include <algorithm>
#include <cctype>

namespace crowdserve {

namespace {

std::string trim_lower(const std::string& raw) {
  std::size_t begin = 0;
  std::size_t end = raw.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(raw[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(raw[end - 1]))) --end;
  std::string out = raw.substr(begin, end - begin);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool get_number(const nlohmann::json& raw, const char* key, double* out) {
  auto it = raw.find(key);
  if (it == raw.end() || !it->is_number()) return false;
  *out = it->get<double>();
  return true;
}

bool get_integer(const nlohmann::json& raw, const char* key, std::int64_t* out) {
  auto it = raw.find(key);
  if (it == raw.end() || !it->is_number_integer()) return false;
  *out = it->get<std::int64_t>();
  return true;
}

Result<std::vector<std::string>> tokens_from_json(const nlohmann::json& raw, const char* key) {
  auto it = raw.find(key);
  if (it == raw.end() || !it->is_array())
    return Result<std::vector<std::string>>::fail(Errc::BadRecord,
                                                  std::string("missing array field: ") + key);
  std::vector<std::string> tokens;
  tokens.reserve(it->size());
  for (const auto& entry : *it) {
    if (!entry.is_string())
      return Result<std::vector<std::string>>::fail(Errc::BadRecord,
                                                    std::string("non-string token in ") + key);
    tokens.push_back(entry.get<std::string>());
  }
  return tokens;
}

Result<std::string> require_string(const nlohmann::json& raw, const char* key) {
  auto it = raw.find(key);
  if (it == raw.end() || !it->is_string())
    return Result<std::string>::fail(Errc::BadRecord, std::string("missing string field: ") + key);
  return it->get<std::string>();
}

}  // namespace

bool SpatialTextualObject::has_skill(const std::string& token) const {
  return std::binary_search(skills.begin(), skills.end(), token);
}

const char* event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::Register: return "REGISTER";
    case EventKind::ProfileUpdate: return "PROFILE_UPDATE";
    case EventKind::LocationUpdate: return "LOCATION_UPDATE";
    case EventKind::Rating: return "RATING";
    case EventKind::Response: return "RESPONSE";
  }
  return "UNKNOWN";
}

Result<EventKind> event_kind_from_name(const std::string& name) {
  if (name == "REGISTER") return EventKind::Register;
  if (name == "PROFILE_UPDATE") return EventKind::ProfileUpdate;
  if (name == "LOCATION_UPDATE") return EventKind::LocationUpdate;
  if (name == "RATING") return EventKind::Rating;
  if (name == "RESPONSE") return EventKind::Response;
  return Result<EventKind>::fail(Errc::BadRecord, "unknown event kind: " + name);
}

std::vector<std::string> canonicalize_tokens(std::span<const std::string> raw) {
  std::vector<std::string> tokens;
  tokens.reserve(raw.size());
  for (const auto& token : raw) {
    std::string canon = trim_lower(token);
    if (!canon.empty()) tokens.push_back(std::move(canon));
  }
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

Result<SpatialTextualObject> validate_object(const nlohmann::json& raw) {
  using R = Result<SpatialTextualObject>;
  if (!raw.is_object()) return R::fail(Errc::BadRecord, "object record must be a JSON object");

  auto id = require_string(raw, "id");
  if (!id.ok()) return id.error();
  if (id.value().empty()) return R::fail(Errc::BadRecord, "empty object id");

  auto tokens = tokens_from_json(raw, "skills");
  if (!tokens.ok()) return tokens.error();
  std::vector<std::string> skills = canonicalize_tokens(tokens.value());
  if (skills.empty())
    return R::fail(Errc::EmptySkills, "object " + id.value() + " has no usable skill tokens");

  double lat = 0.0;
  double lon = 0.0;
  if (!get_number(raw, "lat", &lat) || !get_number(raw, "lon", &lon))
    return R::fail(Errc::BadRecord, "missing lat/lon");
  if (!valid_coordinates(lat, lon))
    return R::fail(Errc::OutOfRangeCoord, "coordinates out of range for " + id.value());

  std::int64_t positioned_at = 0;
  if (!get_integer(raw, "positioned_at", &positioned_at) && !get_integer(raw, "t", &positioned_at))
    return R::fail(Errc::BadRecord, "missing positioned_at");
  if (positioned_at < 0)
    return R::fail(Errc::BadTimestamp, "negative positioned_at for " + id.value());

  SpatialTextualObject obj;
  obj.id = std::move(id).value();
  obj.skills = std::move(skills);
  obj.lat = lat;
  obj.lon = lon;
  obj.positioned_at = positioned_at;
  return obj;
}

Status validate_query(const ServiceQuery& query) {
  if (query.keywords.empty()) return Status::fail(Errc::EmptyQuery, "query has no keywords");
  for (const auto& kw : query.keywords) {
    if (kw.empty()) return Status::fail(Errc::EmptyQuery, "query has an empty keyword");
  }
  if (!valid_coordinates(query.lat, query.lon))
    return Status::fail(Errc::OutOfRangeCoord, "query coordinates out of range");
  if (query.issued_at < 0) return Status::fail(Errc::BadTimestamp, "negative query time");
  if (query.k < 1) return Status::fail(Errc::BadQueryParams, "k must be >= 1");
  if (!(query.alpha >= 0.0 && query.alpha <= 1.0))
    return Status::fail(Errc::BadQueryParams, "alpha must be in [0, 1]");
  if (!(query.lambda_base > 1.0))
    return Status::fail(Errc::BadQueryParams, "lambda_base must be > 1");
  if (!(query.max_distance_m > 0.0))
    return Status::fail(Errc::BadQueryParams, "max_distance_m must be > 0");
  return Status();
}

nlohmann::json to_json(const SpatialTextualObject& obj) {
  return nlohmann::json{{"id", obj.id},
                        {"skills", obj.skills},
                        {"lat", obj.lat},
                        {"lon", obj.lon},
                        {"positioned_at", obj.positioned_at}};
}

nlohmann::json to_json(const ContextVector& ctx) {
  return nlohmann::json{{"time_bucket", ctx.time_bucket},
                        {"location_cell", ctx.location_cell},
                        {"skill_domain", ctx.skill_domain}};
}

nlohmann::json to_json(const RatingRecord& rating) {
  return nlohmann::json{{"user_id", rating.user_id},
                        {"turk_id", rating.turk_id},
                        {"context", to_json(rating.context)},
                        {"rating", rating.rating},
                        {"at", rating.at}};
}

nlohmann::json to_json(const TurkEvent& event) {
  nlohmann::json payload;
  switch (event.kind) {
    case EventKind::Register:
      payload = to_json(std::get<SpatialTextualObject>(event.payload));
      break;
    case EventKind::ProfileUpdate: {
      const auto& p = std::get<ProfileUpdatePayload>(event.payload);
      payload = nlohmann::json{{"add_skills", p.add_skills}, {"remove_skills", p.remove_skills}};
      break;
    }
    case EventKind::LocationUpdate: {
      const auto& p = std::get<LocationUpdatePayload>(event.payload);
      payload =
          nlohmann::json{{"lat", p.lat}, {"lon", p.lon}, {"positioned_at", p.positioned_at}};
      break;
    }
    case EventKind::Rating:
      payload = to_json(std::get<RatingRecord>(event.payload));
      break;
    case EventKind::Response: {
      const auto& p = std::get<ResponsePayload>(event.payload);
      payload = nlohmann::json{{"session_id", p.session_id}, {"verdict", p.verdict}};
      break;
    }
  }
  return nlohmann::json{{"kind", event_kind_name(event.kind)},
                        {"object_id", event.object_id},
                        {"at", event.at},
                        {"payload", std::move(payload)}};
}

Result<ContextVector> context_from_json(const nlohmann::json& raw) {
  using R = Result<ContextVector>;
  if (!raw.is_object()) return R::fail(Errc::BadRecord, "context must be a JSON object");
  auto time_bucket = require_string(raw, "time_bucket");
  if (!time_bucket.ok()) return time_bucket.error();
  auto cell = require_string(raw, "location_cell");
  if (!cell.ok()) return cell.error();
  auto domain = require_string(raw, "skill_domain");
  if (!domain.ok()) return domain.error();
  return ContextVector{std::move(time_bucket).value(), std::move(cell).value(),
                       std::move(domain).value()};
}

Result<RatingRecord> rating_from_json(const nlohmann::json& raw) {
  using R = Result<RatingRecord>;
  if (!raw.is_object()) return R::fail(Errc::BadRecord, "rating must be a JSON object");
  auto user = require_string(raw, "user_id");
  if (!user.ok()) return user.error();
  auto turk = require_string(raw, "turk_id");
  if (!turk.ok()) return turk.error();
  if (user.value().empty() || turk.value().empty())
    return R::fail(Errc::BadRecord, "rating ids must be non-empty");
  auto it = raw.find("context");
  if (it == raw.end()) return R::fail(Errc::BadRecord, "rating missing context");
  auto ctx = context_from_json(*it);
  if (!ctx.ok()) return ctx.error();
  double rating = 0.0;
  if (!get_number(raw, "rating", &rating)) return R::fail(Errc::BadRecord, "rating missing value");
  if (!(rating >= 1.0 && rating <= 5.0))
    return R::fail(Errc::BadRecord, "rating must be in [1, 5]");
  std::int64_t at = 0;
  if (!get_integer(raw, "at", &at)) return R::fail(Errc::BadRecord, "rating missing timestamp");
  if (at < 0) return R::fail(Errc::BadTimestamp, "negative rating timestamp");
  RatingRecord record;
  record.user_id = std::move(user).value();
  record.turk_id = std::move(turk).value();
  record.context = std::move(ctx).value();
  record.rating = rating;
  record.at = at;
  return record;
}

Result<TurkEvent> event_from_json(const nlohmann::json& raw) {
  using R = Result<TurkEvent>;
  if (!raw.is_object()) return R::fail(Errc::BadRecord, "event must be a JSON object");
  auto kind_name = require_string(raw, "kind");
  if (!kind_name.ok()) return kind_name.error();
  auto kind = event_kind_from_name(kind_name.value());
  if (!kind.ok()) return kind.error();
  auto object_id = require_string(raw, "object_id");
  if (!object_id.ok()) return object_id.error();
  std::int64_t at = 0;
  if (!get_integer(raw, "at", &at)) return R::fail(Errc::BadRecord, "event missing timestamp");
  if (at < 0) return R::fail(Errc::BadTimestamp, "negative event timestamp");
  auto payload_it = raw.find("payload");
  if (payload_it == raw.end() || !payload_it->is_object())
    return R::fail(Errc::BadRecord, "event missing payload");
  const nlohmann::json& payload = *payload_it;

  TurkEvent event;
  event.kind = kind.value();
  event.object_id = std::move(object_id).value();
  event.at = at;
  switch (event.kind) {
    case EventKind::Register: {
      auto obj = validate_object(payload);
      if (!obj.ok()) return obj.error();
      if (obj.value().id != event.object_id)
        return R::fail(Errc::BadRecord, "REGISTER payload id differs from object_id");
      event.payload = std::move(obj).value();
      break;
    }
    case EventKind::ProfileUpdate: {
      ProfileUpdatePayload p;
      if (payload.contains("add_skills")) {
        auto add = tokens_from_json(payload, "add_skills");
        if (!add.ok()) return add.error();
        p.add_skills = canonicalize_tokens(add.value());
      }
      if (payload.contains("remove_skills")) {
        auto remove = tokens_from_json(payload, "remove_skills");
        if (!remove.ok()) return remove.error();
        p.remove_skills = canonicalize_tokens(remove.value());
      }
      event.payload = std::move(p);
      break;
    }
    case EventKind::LocationUpdate: {
      LocationUpdatePayload p;
      if (!get_number(payload, "lat", &p.lat) || !get_number(payload, "lon", &p.lon))
        return R::fail(Errc::BadRecord, "location update missing lat/lon");
      if (!valid_coordinates(p.lat, p.lon))
        return R::fail(Errc::OutOfRangeCoord, "location update out of range");
      if (!get_integer(payload, "positioned_at", &p.positioned_at))
        return R::fail(Errc::BadRecord, "location update missing positioned_at");
      if (p.positioned_at < 0)
        return R::fail(Errc::BadTimestamp, "negative positioned_at in location update");
      event.payload = std::move(p);
      break;
    }
    case EventKind::Rating: {
      auto rating = rating_from_json(payload);
      if (!rating.ok()) return rating.error();
      event.payload = std::move(rating).value();
      break;
    }
    case EventKind::Response: {
      ResponsePayload p;
      auto session = require_string(payload, "session_id");
      if (!session.ok()) return session.error();
      auto verdict = require_string(payload, "verdict");
      if (!verdict.ok()) return verdict.error();
      p.session_id = std::move(session).value();
      p.verdict = std::move(verdict).value();
      event.payload = std::move(p);
      break;
    }
  }
  return event;
}

}  // namespace crowdserve
