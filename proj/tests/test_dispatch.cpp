#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "crowdserve/dispatch.hpp"
#include "crowdserve/rng.hpp"

using namespace crowdserve;

namespace {

SpatialTextualObject make_obj(std::string id, std::vector<std::string> skills, double lat,
                              double lon, std::int64_t t) {
  SpatialTextualObject obj;
  obj.id = std::move(id);
  obj.skills = std::move(skills);
  obj.lat = lat;
  obj.lon = lon;
  obj.positioned_at = t;
  return obj;
}

// Ten objects with strictly decreasing scores for {"x"} queries at (0,0):
// same skills and timestamps, increasing distance. Ranking is d0..d9.
void fill_ladder(BigTree& tree, int n = 10) {
  for (int i = 0; i < n; ++i)
    REQUIRE(tree
                .insert(make_obj("d" + std::to_string(i), {"x"}, 0.0, 0.002 * (i + 1), 1000))
                .ok());
}

ServiceQuery ladder_query(int k = 10) {
  ServiceQuery q;
  q.keywords = {"x"};
  q.lat = 0.0;
  q.lon = 0.0;
  q.issued_at = 1000;
  q.k = k;
  return q;
}

ScoringParams default_params() { return {}; }

// Full oracle ranking of the non-terminal, positive-score objects.
std::vector<std::string> oracle_ranking(const BigTree& tree, const ServiceQuery& query,
                                        const std::set<std::string>& finished) {
  std::vector<std::pair<double, std::string>> scored;
  for (const auto* obj : tree.all_objects()) {
    if (finished.count(obj->id) > 0) continue;
    double total = combined_score(query, *obj, default_params()).total;
    if (total > 0.0) scored.emplace_back(total, obj->id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> ids;
  ids.reserve(scored.size());
  for (const auto& [total, id] : scored) ids.push_back(id);
  return ids;
}

CarsModel trained_model(int turks) {
  std::vector<RatingRecord> ratings;
  for (int v = 0; v < turks; ++v) {
    RatingRecord r;
    r.user_id = "u" + std::to_string(v % 3);
    r.turk_id = "d" + std::to_string(v);
    r.rating = 1.0 + (v % 5);
    ratings.push_back(r);
  }
  CarsHyperparams hyper;
  hyper.factors = 0;
  hyper.epochs = 10;
  auto model = train_cars(ratings, hyper, 1);
  REQUIRE(model.ok());
  return model.value();
}

}  // namespace

TEST_CASE("open notifies the top matcher candidates") {
  BigTree tree;
  fill_ladder(tree);
  DispatchConfig config;
  config.matcher_slots = 3;
  auto session = DispatchSession::open("s1", tree, ladder_query(), default_params(), config);
  REQUIRE(session.ok());
  auto& s = session.value();

  auto active = s.active_ids(CandidateSource::Matcher);
  CHECK(active == std::vector<std::string>{"d0", "d1", "d2"});
  CHECK(s.active_ids(CandidateSource::Recommender).empty());
  CHECK(s.entries().size() == 3);
  for (const auto& e : s.entries()) {
    CHECK(e.state == CandidateState::Notified);
    CHECK(e.notified_at == 1000);
  }
  REQUIRE(s.events().size() == 3);
  CHECK(s.events()[0].transition == "NOTIFIED");
  CHECK(s.events()[0].source == "MATCHER");
  CHECK(s.events()[0].at == 1000);
  CHECK_FALSE(s.done());
}

TEST_CASE("open validation") {
  BigTree tree;
  fill_ladder(tree);
  DispatchConfig config;
  config.matcher_slots = 0;
  CHECK(DispatchSession::open("s", tree, ladder_query(), default_params(), config)
            .status()
            .code() == Errc::BadQueryParams);

  config.matcher_slots = 2;
  config.recommender_slots = 1;
  // Recommender slots without a model are a configuration error.
  CHECK(DispatchSession::open("s", tree, ladder_query(), default_params(), config)
            .status()
            .code() == Errc::BadQueryParams);
}

TEST_CASE("refusal back-fills from the ranking") {
  BigTree tree;
  fill_ladder(tree);
  DispatchConfig config;
  config.matcher_slots = 3;
  auto session = DispatchSession::open("s2", tree, ladder_query(), default_params(), config);
  REQUIRE(session.ok());
  auto& s = session.value();

  REQUIRE(s.respond("d1", "REFUSE").ok());
  CHECK(s.active_ids(CandidateSource::Matcher) == std::vector<std::string>{"d0", "d2", "d3"});

  REQUIRE(s.respond("d0", "refuse").ok());  // verdict is case-insensitive
  CHECK(s.active_ids(CandidateSource::Matcher) == std::vector<std::string>{"d2", "d3", "d4"});

  // Refused turks never come back.
  for (const auto& e : s.entries())
    if (e.turk_id == "d0" || e.turk_id == "d1") CHECK(e.state == CandidateState::Refused);
}

TEST_CASE("acceptance freezes its slot") {
  BigTree tree;
  fill_ladder(tree);
  DispatchConfig config;
  config.matcher_slots = 3;
  auto session = DispatchSession::open("s3", tree, ladder_query(), default_params(), config);
  REQUIRE(session.ok());
  auto& s = session.value();

  REQUIRE(s.respond("d0", "ACCEPT").ok());
  // No back-fill: the accepted slot is retired, two entries remain open.
  CHECK(s.active_ids(CandidateSource::Matcher) == std::vector<std::string>{"d1", "d2"});
  CHECK_FALSE(s.done());

  REQUIRE(s.respond("d1", "REFUSE").ok());
  CHECK(s.active_ids(CandidateSource::Matcher) == std::vector<std::string>{"d2", "d3"});
}

TEST_CASE("respond error cases") {
  BigTree tree;
  fill_ladder(tree);
  DispatchConfig config;
  config.matcher_slots = 2;
  auto session = DispatchSession::open("s4", tree, ladder_query(), default_params(), config);
  REQUIRE(session.ok());
  auto& s = session.value();

  CHECK(s.respond("d9", "ACCEPT").code() == Errc::UnknownCandidate);
  CHECK(s.respond("ghost", "REFUSE").code() == Errc::UnknownCandidate);
  CHECK(s.respond("d0", "MAYBE").code() == Errc::BadRecord);

  REQUIRE(s.respond("d0", "REFUSE").ok());
  CHECK(s.respond("d0", "ACCEPT").code() == Errc::AlreadyTerminal);
}

TEST_CASE("timeouts ignore stale notifications") {
  BigTree tree;
  fill_ladder(tree);
  DispatchConfig config;
  config.matcher_slots = 2;
  config.timeout_s = 120;
  auto session = DispatchSession::open("s5", tree, ladder_query(), default_params(), config);
  REQUIRE(session.ok());
  auto& s = session.value();

  // Exactly at the deadline nothing expires; ignoring needs strictly more.
  REQUIRE(s.tick(1000 + 120).ok());
  CHECK(s.active_ids(CandidateSource::Matcher) == std::vector<std::string>{"d0", "d1"});

  REQUIRE(s.tick(1000 + 121).ok());
  CHECK(s.active_ids(CandidateSource::Matcher) == std::vector<std::string>{"d2", "d3"});
  for (const auto& e : s.entries())
    if (e.turk_id == "d0" || e.turk_id == "d1") CHECK(e.state == CandidateState::Ignored);

  // The clock never runs backwards; a stale tick is a no-op.
  REQUIRE(s.tick(500).ok());
  CHECK(s.now() == 1121);
}

TEST_CASE("ignoring everyone terminates the session") {
  BigTree tree;
  fill_ladder(tree);
  DispatchConfig config;
  config.matcher_slots = 3;
  config.timeout_s = 10;
  auto session = DispatchSession::open("s6", tree, ladder_query(), default_params(), config);
  REQUIRE(session.ok());
  auto& s = session.value();

  std::int64_t t = 1000;
  int rounds = 0;
  while (!s.done()) {
    t += 11;
    REQUIRE(s.tick(t).ok());
    REQUIRE(++rounds < 50);
  }
  // Every object was offered exactly once and ended ignored.
  CHECK(s.entries().size() == 10);
  std::set<std::string> seen;
  for (const auto& e : s.entries()) {
    CHECK(e.state == CandidateState::Ignored);
    CHECK(seen.insert(e.turk_id).second);
  }
}

TEST_CASE("cursor exhaustion shrinks the active set") {
  BigTree tree;
  fill_ladder(tree, 4);
  DispatchConfig config;
  config.matcher_slots = 3;
  auto session = DispatchSession::open("s7", tree, ladder_query(), default_params(), config);
  REQUIRE(session.ok());
  auto& s = session.value();

  REQUIRE(s.respond("d0", "REFUSE").ok());  // d3 back-fills
  CHECK(s.active_ids(CandidateSource::Matcher).size() == 3);
  REQUIRE(s.respond("d1", "REFUSE").ok());  // nobody left to draft
  CHECK(s.active_ids(CandidateSource::Matcher) == std::vector<std::string>{"d2", "d3"});
  REQUIRE(s.respond("d2", "REFUSE").ok());
  REQUIRE(s.respond("d3", "REFUSE").ok());
  CHECK(s.done());
}

TEST_CASE("random scripts keep the active set equal to the oracle") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SplitMix64 rng(7000 + seed);
    BigTree tree;
    int n = 12 + static_cast<int>(rng.next_below(20));
    for (int i = 0; i < n; ++i) {
      REQUIRE(tree
                  .insert(make_obj("d" + std::to_string(100 + i), {"x"},
                                   rng.next_double(-0.02, 0.02), rng.next_double(-0.02, 0.02),
                                   900 + static_cast<std::int64_t>(rng.next_below(100))))
                  .ok());
    }
    ServiceQuery q = ladder_query();
    DispatchConfig config;
    config.matcher_slots = 1 + static_cast<int>(rng.next_below(4));
    config.timeout_s = 30;
    auto session = DispatchSession::open("r" + std::to_string(seed), tree, q,
                                         default_params(), config);
    REQUIRE(session.ok());
    auto& s = session.value();

    std::set<std::string> finished;  // session-terminal turks
    int accepted = 0;                // acceptances retire slots for good
    std::int64_t now = q.issued_at;
    int guard = 0;
    while (!s.done() && guard++ < 200) {
      auto active = s.active_ids(CandidateSource::Matcher);
      auto ranking = oracle_ranking(tree, q, finished);
      std::size_t want = std::min<std::size_t>(
          static_cast<std::size_t>(config.matcher_slots - accepted), ranking.size());
      ranking.resize(want);
      CHECK(active == ranking);

      std::uint64_t dice = rng.next_below(10);
      if (dice < 5 && !active.empty()) {
        const std::string& pick = active[rng.next_below(active.size())];
        REQUIRE(s.respond(pick, "REFUSE").ok());
        finished.insert(pick);
      } else if (dice < 7 && !active.empty()) {
        const std::string& pick = active[rng.next_below(active.size())];
        REQUIRE(s.respond(pick, "ACCEPT").ok());
        finished.insert(pick);
        ++accepted;
      } else {
        now += 31;  // expire everything currently notified
        for (const auto& id : s.active_ids(CandidateSource::Matcher)) finished.insert(id);
        REQUIRE(s.tick(now).ok());
      }
    }
    REQUIRE(guard < 200);

    // No turk ever got two matcher entries.
    std::set<std::string> offered;
    for (const auto& e : s.entries()) {
      CHECK(is_terminal(e.state));
      if (e.source == CandidateSource::Matcher) CHECK(offered.insert(e.turk_id).second);
    }
  }
}

TEST_CASE("recommender slots draw from the model ranking") {
  BigTree tree;
  fill_ladder(tree);
  CarsModel model = trained_model(10);
  DispatchConfig config;
  config.matcher_slots = 2;
  config.recommender_slots = 2;
  auto session = DispatchSession::open("s8", tree, ladder_query(), default_params(), config,
                                       &model, "u1");
  REQUIRE(session.ok());
  auto& s = session.value();

  auto matcher = s.active_ids(CandidateSource::Matcher);
  auto recommender = s.active_ids(CandidateSource::Recommender);
  CHECK(matcher == std::vector<std::string>{"d0", "d1"});
  CHECK(recommender.size() == 2);

  // The two sets never overlap at open time.
  for (const auto& id : recommender)
    CHECK(std::find(matcher.begin(), matcher.end(), id) == matcher.end());

  // Recommender entries carry predicted ratings, not ranking totals.
  for (const auto& e : s.entries())
    if (e.source == CandidateSource::Recommender) {
      CHECK(e.score >= 1.0);
      CHECK(e.score <= 5.0);
    }
}

TEST_CASE("one response settles both of a turk's entries") {
  BigTree tree;
  fill_ladder(tree, 4);
  CarsModel model = trained_model(4);
  DispatchConfig config;
  config.matcher_slots = 2;
  config.recommender_slots = 1;
  auto session = DispatchSession::open("s9", tree, ladder_query(), default_params(), config,
                                       &model, "u0");
  REQUIRE(session.ok());
  auto& s = session.value();

  // Matcher holds d0,d1; the recommender slot holds someone else, say dr.
  auto rec = s.active_ids(CandidateSource::Recommender);
  REQUIRE(rec.size() == 1);
  const std::string dr = rec[0];
  CHECK(dr != "d0");
  CHECK(dr != "d1");

  // Refuse matcher entries until the matcher back-fill drafts dr too
  // (matcher back-fill skips only session-terminal turks, so dr is eligible).
  while (true) {
    auto matcher = s.active_ids(CandidateSource::Matcher);
    if (std::find(matcher.begin(), matcher.end(), dr) != matcher.end()) break;
    REQUIRE(!matcher.empty());
    REQUIRE(s.respond(matcher[0], "REFUSE").ok());
  }

  // dr now holds one matcher and one recommender entry.
  int open_for_dr = 0;
  for (const auto& e : s.entries())
    if (e.turk_id == dr && !is_terminal(e.state)) ++open_for_dr;
  CHECK(open_for_dr == 2);

  std::size_t events_before = s.events().size();
  REQUIRE(s.respond(dr, "ACCEPT").ok());

  // Both entries settled atomically, one event per entry.
  for (const auto& e : s.entries())
    if (e.turk_id == dr) CHECK(e.state == CandidateState::Accepted);
  std::size_t accepted_events = 0;
  for (std::size_t i = events_before; i < s.events().size(); ++i)
    if (s.events()[i].transition == "ACCEPTED") ++accepted_events;
  CHECK(accepted_events == 2);
  CHECK(s.respond(dr, "REFUSE").code() == Errc::AlreadyTerminal);
}

TEST_CASE("recommender back-fill skips anyone already holding an entry") {
  BigTree tree;
  fill_ladder(tree);
  CarsModel model = trained_model(10);
  DispatchConfig config;
  config.matcher_slots = 2;
  config.recommender_slots = 1;
  auto session = DispatchSession::open("s10", tree, ladder_query(), default_params(), config,
                                       &model, "u1");
  REQUIRE(session.ok());
  auto& s = session.value();

  auto rec = s.active_ids(CandidateSource::Recommender);
  REQUIRE(rec.size() == 1);
  REQUIRE(s.respond(rec[0], "REFUSE").ok());

  auto rec_after = s.active_ids(CandidateSource::Recommender);
  if (!rec_after.empty()) {
    auto matcher = s.active_ids(CandidateSource::Matcher);
    CHECK(rec_after[0] != rec[0]);
    CHECK(std::find(matcher.begin(), matcher.end(), rec_after[0]) == matcher.end());
  }
}

TEST_CASE("index mutation invalidates the session") {
  BigTree tree;
  fill_ladder(tree);
  DispatchConfig config;
  auto session = DispatchSession::open("s11", tree, ladder_query(), default_params(), config);
  REQUIRE(session.ok());
  auto& s = session.value();

  REQUIRE(tree.insert(make_obj("intruder", {"x"}, 0, 0.001, 1000)).ok());
  CHECK(s.respond("d0", "REFUSE").code() == Errc::CursorInvalidated);
  CHECK(s.tick(2000).code() == Errc::CursorInvalidated);
}

TEST_CASE("session events replay to the final entry states") {
  BigTree tree;
  fill_ladder(tree);
  CarsModel model = trained_model(10);
  DispatchConfig config;
  config.matcher_slots = 3;
  config.recommender_slots = 1;
  config.timeout_s = 60;
  auto session = DispatchSession::open("s12", tree, ladder_query(), default_params(), config,
                                       &model, "u2");
  REQUIRE(session.ok());
  auto& s = session.value();

  REQUIRE(s.respond(s.active_ids(CandidateSource::Matcher)[1], "REFUSE").ok());
  REQUIRE(s.respond(s.active_ids(CandidateSource::Matcher)[0], "ACCEPT").ok());
  REQUIRE(s.tick(1000 + 61).ok());

  auto replayed = replay_session_events(s.events());
  REQUIRE(replayed.ok());
  const auto& entries = s.entries();
  REQUIRE(replayed.value().size() == entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    CHECK(replayed.value()[i].turk_id == entries[i].turk_id);
    CHECK(replayed.value()[i].source == entries[i].source);
    CHECK(replayed.value()[i].state == entries[i].state);
    CHECK(replayed.value()[i].notified_at == entries[i].notified_at);
  }

  // Malformed streams are rejected.
  std::vector<DispatchEvent> bogus{{"s", 5, "t1", "ACCEPTED", "MATCHER"}};
  CHECK(replay_session_events(bogus).status().code() == Errc::BadRecord);
}

TEST_CASE("dispatch event json round trip") {
  DispatchEvent event{"s42", 777, "d3", "REFUSED", "RECOMMENDER"};
  auto raw = to_json(event);
  CHECK(raw.at("session_id") == "s42");
  CHECK(raw.at("at") == 777);
  auto back = dispatch_event_from_json(raw);
  REQUIRE(back.ok());
  CHECK(back.value() == event);

  auto missing = raw;
  missing.erase("turk_id");
  CHECK(dispatch_event_from_json(missing).status().code() == Errc::BadRecord);
  auto badkind = raw;
  badkind["transition"] = "WANDERED";
  CHECK(dispatch_event_from_json(badkind).status().code() == Errc::BadRecord);
}
