#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdserve/big_tree.hpp"
#include "crowdserve/cars.hpp"
#include "crowdserve/errors.hpp"
#include "crowdserve/topk.hpp"

namespace crowdserve {

enum class CandidateSource { Matcher, Recommender };
enum class CandidateState { Pending, Notified, Accepted, Refused, Ignored };

const char* source_name(CandidateSource source);
const char* state_name(CandidateState state);
bool is_terminal(CandidateState state);

struct CandidateEntry {
  std::string turk_id;
  CandidateSource source = CandidateSource::Matcher;
  // Ranking total for matcher entries, predicted rating for recommender ones.
  double score = 0.0;
  CandidateState state = CandidateState::Pending;
  std::int64_t notified_at = 0;
};

struct DispatchEvent {
  std::string session_id;
  std::int64_t at = 0;
  std::string turk_id;
  std::string transition;  // NOTIFIED / ACCEPTED / REFUSED / IGNORED
  std::string source;      // MATCHER / RECOMMENDER

  bool operator==(const DispatchEvent&) const = default;
};

nlohmann::json to_json(const DispatchEvent& event);
Result<DispatchEvent> dispatch_event_from_json(const nlohmann::json& raw);

struct DispatchConfig {
  int matcher_slots = 3;      // >= 1
  int recommender_slots = 0;  // >= 0
  std::int64_t timeout_s = 120;
};

// Live candidate list for one query. Matcher slots hold the ranking's best
// still-willing turks, fed by a cursor; recommender slots hold rating-model
// picks. A turk may hold one entry per source; a response settles all of
// that turk's open entries at once. Refusals and timeouts back-fill their
// slot, acceptances retire it. The index must not change while the session
// is open.
class DispatchSession {
 public:
  static Result<DispatchSession> open(std::string session_id, const BigTree& index,
                                      const ServiceQuery& query, const ScoringParams& params,
                                      const DispatchConfig& config,
                                      const CarsModel* recommender = nullptr,
                                      const std::string& user_id = "",
                                      const SkillTaxonomy& taxonomy = {});

  // verdict: ACCEPT or REFUSE (case-insensitive).
  Status respond(const std::string& turk_id, const std::string& verdict);

  // Advances the session clock; entries notified longer than timeout_s ago
  // become IGNORED and are back-filled like refusals.
  Status tick(std::int64_t now);

  const std::string& id() const { return session_id_; }
  std::int64_t now() const { return now_; }
  const DispatchConfig& config() const { return config_; }

  // Every entry ever created, in creation order; terminal ones stay.
  const std::vector<CandidateEntry>& entries() const { return entries_; }
  std::vector<std::string> active_ids(CandidateSource source) const;
  bool done() const;  // no open entries remain

  const std::vector<DispatchEvent>& events() const { return events_; }

 private:
  DispatchSession() = default;

  Status check_index_stable() const;
  bool turk_terminal(const std::string& turk_id) const;
  bool turk_has_entry(const std::string& turk_id) const;
  void notify(std::string turk_id, CandidateSource source, double score);
  // By value: back-fills can grow entries_, and callers pass ids living there.
  void settle_turk(std::string turk_id, CandidateState verdict);
  void backfill_matcher();
  void backfill_recommender();
  void emit(const std::string& turk_id, const char* transition, CandidateSource source);

  std::string session_id_;
  const BigTree* index_ = nullptr;
  std::uint64_t epoch_ = 0;
  DispatchConfig config_;
  std::int64_t now_ = 0;
  std::optional<QueryCursor> cursor_;
  bool cursor_exhausted_ = false;
  // Full recommendation ranking, consumed from the front on back-fill.
  std::vector<std::pair<std::string, double>> recommendation_queue_;
  std::size_t recommendation_next_ = 0;
  std::vector<CandidateEntry> entries_;
  std::vector<DispatchEvent> events_;
};

// Rebuilds the per-entry states a session's event rows describe.
struct ReplayedEntry {
  std::string turk_id;
  CandidateSource source = CandidateSource::Matcher;
  CandidateState state = CandidateState::Notified;
  std::int64_t notified_at = 0;

  bool operator==(const ReplayedEntry&) const = default;
};
Result<std::vector<ReplayedEntry>> replay_session_events(std::span<const DispatchEvent> events);

}  // namespace crowdserve
