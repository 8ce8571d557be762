#include "crowdserve/dispatch.hpp"

#include <algorithm>
#include <cctype>

namespace crowdserve {

namespace {

std::string to_upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

Result<CandidateSource> source_from_name(const std::string& name) {
  if (name == "MATCHER") return CandidateSource::Matcher;
  if (name == "RECOMMENDER") return CandidateSource::Recommender;
  return Result<CandidateSource>::fail(Errc::BadRecord, "unknown candidate source: " + name);
}

}  // namespace

const char* source_name(CandidateSource source) {
  switch (source) {
    case CandidateSource::Matcher: return "MATCHER";
    case CandidateSource::Recommender: return "RECOMMENDER";
  }
  return "UNKNOWN";
}

const char* state_name(CandidateState state) {
  switch (state) {
    case CandidateState::Pending: return "PENDING";
    case CandidateState::Notified: return "NOTIFIED";
    case CandidateState::Accepted: return "ACCEPTED";
    case CandidateState::Refused: return "REFUSED";
    case CandidateState::Ignored: return "IGNORED";
  }
  return "UNKNOWN";
}

bool is_terminal(CandidateState state) {
  return state == CandidateState::Accepted || state == CandidateState::Refused ||
         state == CandidateState::Ignored;
}

nlohmann::json to_json(const DispatchEvent& event) {
  return nlohmann::json{{"session_id", event.session_id},
                        {"at", event.at},
                        {"turk_id", event.turk_id},
                        {"transition", event.transition},
                        {"source", event.source}};
}

Result<DispatchEvent> dispatch_event_from_json(const nlohmann::json& raw) {
  using R = Result<DispatchEvent>;
  if (!raw.is_object()) return R::fail(Errc::BadRecord, "dispatch event must be a JSON object");
  DispatchEvent event;
  auto read = [&](const char* key, std::string* out) {
    auto it = raw.find(key);
    if (it == raw.end() || !it->is_string()) return false;
    *out = it->get<std::string>();
    return true;
  };
  if (!read("session_id", &event.session_id) || !read("turk_id", &event.turk_id) ||
      !read("transition", &event.transition) || !read("source", &event.source))
    return R::fail(Errc::BadRecord, "dispatch event missing fields");
  auto at = raw.find("at");
  if (at == raw.end() || !at->is_number_integer())
    return R::fail(Errc::BadRecord, "dispatch event missing timestamp");
  event.at = at->get<std::int64_t>();
  return event;
}

Result<DispatchSession> DispatchSession::open(std::string session_id, const BigTree& index,
                                              const ServiceQuery& query,
                                              const ScoringParams& params,
                                              const DispatchConfig& config,
                                              const CarsModel* recommender,
                                              const std::string& user_id,
                                              const SkillTaxonomy& taxonomy) {
  using R = Result<DispatchSession>;
  if (config.matcher_slots < 1)
    return R::fail(Errc::BadQueryParams, "matcher_slots must be >= 1");
  if (config.recommender_slots < 0)
    return R::fail(Errc::BadQueryParams, "recommender_slots must be >= 0");
  if (config.recommender_slots > 0 && recommender == nullptr)
    return R::fail(Errc::BadQueryParams, "recommender_slots require a model");
  if (config.timeout_s < 0) return R::fail(Errc::BadQueryParams, "timeout_s must be >= 0");

  auto cursor = open_cursor(index, query, params);
  if (!cursor.ok()) return cursor.error();

  DispatchSession session;
  session.session_id_ = std::move(session_id);
  session.index_ = &index;
  session.epoch_ = index.mutation_epoch();
  session.config_ = config;
  session.now_ = query.issued_at;
  session.cursor_.emplace(std::move(cursor).value());

  for (int slot = 0; slot < config.matcher_slots; ++slot) {
    auto draw = session.cursor_->next();
    if (!draw.ok()) {
      if (draw.code() == Errc::Exhausted) {
        session.cursor_exhausted_ = true;
        break;
      }
      return draw.error();
    }
    session.notify(draw.value().object_id, CandidateSource::Matcher, draw.value().score.total);
  }

  if (recommender != nullptr && config.recommender_slots > 0) {
    std::vector<std::string> pool;
    for (const SpatialTextualObject* obj : index.all_objects()) pool.push_back(obj->id);
    std::set<std::string> exclude;
    for (const CandidateEntry& e : session.entries_) exclude.insert(e.turk_id);
    session.recommendation_queue_ = recommend(*recommender, user_id, query, pool, exclude,
                                              static_cast<int>(pool.size()), taxonomy);
    for (int slot = 0; slot < config.recommender_slots; ++slot) {
      session.backfill_recommender();
    }
  }
  return session;
}

Status DispatchSession::check_index_stable() const {
  if (epoch_ != index_->mutation_epoch())
    return Status::fail(Errc::CursorInvalidated, "index changed under this session");
  return {};
}

bool DispatchSession::turk_terminal(const std::string& turk_id) const {
  for (const CandidateEntry& e : entries_) {
    if (e.turk_id == turk_id && is_terminal(e.state)) return true;
  }
  return false;
}

bool DispatchSession::turk_has_entry(const std::string& turk_id) const {
  for (const CandidateEntry& e : entries_) {
    if (e.turk_id == turk_id) return true;
  }
  return false;
}

void DispatchSession::emit(const std::string& turk_id, const char* transition,
                           CandidateSource source) {
  events_.push_back(DispatchEvent{session_id_, now_, turk_id, transition, source_name(source)});
}

void DispatchSession::notify(std::string turk_id, CandidateSource source, double score) {
  CandidateEntry entry;
  entry.turk_id = std::move(turk_id);
  entry.source = source;
  entry.score = score;
  entry.state = CandidateState::Notified;
  entry.notified_at = now_;
  entries_.push_back(std::move(entry));
  emit(entries_.back().turk_id, state_name(CandidateState::Notified), source);
}

// All of a turk's open entries settle together: one person's answer (or
// silence) covers every list they are on.
void DispatchSession::settle_turk(std::string turk_id, CandidateState verdict) {
  int freed_matcher = 0;
  int freed_recommender = 0;
  for (CandidateEntry& e : entries_) {
    if (e.turk_id != turk_id || e.state != CandidateState::Notified) continue;
    e.state = verdict;
    emit(e.turk_id, state_name(verdict), e.source);
    if (verdict != CandidateState::Accepted) {
      (e.source == CandidateSource::Matcher ? freed_matcher : freed_recommender) += 1;
    }
  }
  for (int i = 0; i < freed_matcher; ++i) backfill_matcher();
  for (int i = 0; i < freed_recommender; ++i) backfill_recommender();
}

void DispatchSession::backfill_matcher() {
  while (!cursor_exhausted_) {
    auto draw = cursor_->next();
    if (!draw.ok()) {
      cursor_exhausted_ = true;  // only EXHAUSTED can happen under a stable index
      return;
    }
    if (turk_terminal(draw.value().object_id)) continue;
    notify(draw.value().object_id, CandidateSource::Matcher, draw.value().score.total);
    return;
  }
}

void DispatchSession::backfill_recommender() {
  while (recommendation_next_ < recommendation_queue_.size()) {
    const auto& [turk_id, score] = recommendation_queue_[recommendation_next_];
    ++recommendation_next_;
    if (turk_has_entry(turk_id)) continue;
    notify(turk_id, CandidateSource::Recommender, score);
    return;
  }
}

Status DispatchSession::respond(const std::string& turk_id, const std::string& verdict) {
  Status stable = check_index_stable();
  if (!stable.ok()) return stable;

  const std::string v = to_upper(verdict);
  CandidateState target;
  if (v == "ACCEPT") {
    target = CandidateState::Accepted;
  } else if (v == "REFUSE") {
    target = CandidateState::Refused;
  } else {
    return Status::fail(Errc::BadRecord, "verdict must be ACCEPT or REFUSE, got " + verdict);
  }

  if (!turk_has_entry(turk_id))
    return Status::fail(Errc::UnknownCandidate, turk_id + " is not in this session");
  bool open_entry = false;
  for (const CandidateEntry& e : entries_) {
    if (e.turk_id == turk_id && e.state == CandidateState::Notified) {
      open_entry = true;
      break;
    }
  }
  if (!open_entry)
    return Status::fail(Errc::AlreadyTerminal, turk_id + " already settled in this session");

  settle_turk(turk_id, target);
  return {};
}

Status DispatchSession::tick(std::int64_t now) {
  Status stable = check_index_stable();
  if (!stable.ok()) return stable;

  now_ = std::max(now_, now);
  for (;;) {
    const CandidateEntry* expired = nullptr;
    for (const CandidateEntry& e : entries_) {
      if (e.state == CandidateState::Notified && now_ - e.notified_at > config_.timeout_s) {
        expired = &e;
        break;
      }
    }
    if (expired == nullptr) break;
    settle_turk(expired->turk_id, CandidateState::Ignored);
  }
  return {};
}

std::vector<std::string> DispatchSession::active_ids(CandidateSource source) const {
  std::vector<std::string> out;
  for (const CandidateEntry& e : entries_) {
    if (e.source == source && e.state == CandidateState::Notified) out.push_back(e.turk_id);
  }
  return out;
}

bool DispatchSession::done() const {
  for (const CandidateEntry& e : entries_) {
    if (!is_terminal(e.state)) return false;
  }
  return true;
}

Result<std::vector<ReplayedEntry>> replay_session_events(std::span<const DispatchEvent> events) {
  using R = Result<std::vector<ReplayedEntry>>;
  std::vector<ReplayedEntry> entries;
  for (const DispatchEvent& event : events) {
    auto source = source_from_name(event.source);
    if (!source.ok()) return source.error();
    if (event.transition == "NOTIFIED") {
      entries.push_back(
          ReplayedEntry{event.turk_id, source.value(), CandidateState::Notified, event.at});
      continue;
    }
    CandidateState state;
    if (event.transition == "ACCEPTED") {
      state = CandidateState::Accepted;
    } else if (event.transition == "REFUSED") {
      state = CandidateState::Refused;
    } else if (event.transition == "IGNORED") {
      state = CandidateState::Ignored;
    } else {
      return R::fail(Errc::BadRecord, "unknown transition: " + event.transition);
    }
    bool settled = false;
    for (ReplayedEntry& entry : entries) {
      if (entry.turk_id == event.turk_id && entry.source == source.value() &&
          entry.state == CandidateState::Notified) {
        entry.state = state;
        settled = true;
        break;
      }
    }
    if (!settled)
      return R::fail(Errc::BadRecord,
                     "transition for " + event.turk_id + " without an open entry");
  }
  return entries;
}

}  // namespace crowdserve
