#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "crowdserve/event_log.hpp"
#include "crowdserve/rng.hpp"
#include "crowdserve/topk.hpp"

using namespace crowdserve;

namespace {

std::string temp_path(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

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

TurkEvent register_event(const SpatialTextualObject& obj) {
  TurkEvent e;
  e.kind = EventKind::Register;
  e.object_id = obj.id;
  e.at = obj.positioned_at;
  e.payload = obj;
  return e;
}

TurkEvent location_event(std::string id, double lat, double lon, std::int64_t t) {
  TurkEvent e;
  e.kind = EventKind::LocationUpdate;
  e.object_id = std::move(id);
  e.at = t;
  e.payload = LocationUpdatePayload{lat, lon, t};
  return e;
}

const std::vector<std::string> kVocab{"alpha", "bravo", "charlie", "delta", "echo"};

std::vector<RankedCandidate> run_query(const BigTree& tree, SplitMix64& rng) {
  ServiceQuery q;
  q.keywords = {kVocab[rng.next_below(kVocab.size())], kVocab[rng.next_below(kVocab.size())]};
  q.keywords = canonicalize_tokens(q.keywords);
  q.lat = rng.next_double(-5, 5);
  q.lon = rng.next_double(-5, 5);
  q.issued_at = 200000;
  q.k = 10;
  q.max_distance_m = 400000;
  ScoringParams p;
  auto got = top_k(tree, q, p);
  REQUIRE(got.ok());
  return got.value();
}

}  // namespace

TEST_CASE("append then replay a single register") {
  std::string path = temp_path("log_single.jsonl");
  std::remove(path.c_str());
  {
    auto writer = EventLogWriter::open(path);
    REQUIRE(writer.ok());
    REQUIRE(writer.value().append(register_event(make_obj("t1", {"welding"}, 3, 4, 100))).ok());
  }
  auto outcome = replay_log(path);
  REQUIRE(outcome.ok());
  CHECK_FALSE(outcome.value().corruption.has_value());
  const auto& state = outcome.value().state;
  CHECK(state.index->size() == 1);
  REQUIRE(state.index->find("t1") != nullptr);
  CHECK(state.index->find("t1")->lat == 3);
  CHECK(state.last_event_at == 100);
  std::remove(path.c_str());
}

TEST_CASE("missing file is an io error, empty file is an empty state") {
  auto missing = replay_log(temp_path("no_such_log_anywhere.jsonl"));
  CHECK(missing.status().code() == Errc::IoError);

  std::string path = temp_path("log_empty.jsonl");
  std::ofstream(path).close();
  auto outcome = replay_log(path);
  REQUIRE(outcome.ok());
  CHECK_FALSE(outcome.value().corruption.has_value());
  CHECK(outcome.value().state.index->size() == 0);
  std::remove(path.c_str());
}

TEST_CASE("replayed state matches the live state over thousands of events") {
  std::string path = temp_path("log_mixed.jsonl");
  std::remove(path.c_str());
  SplitMix64 rng(500);
  ReplayedState live = make_state();
  {
    auto writer = EventLogWriter::open(path);
    REQUIRE(writer.ok());
    std::vector<std::string> ids;
    std::int64_t t = 1000;
    for (int i = 0; i < 10000; ++i) {
      t += static_cast<std::int64_t>(rng.next_below(5));
      TurkEvent event;
      std::uint64_t dice = rng.next_below(10);
      if (dice < 2 || ids.size() < 5) {
        std::string id = "t" + std::to_string(1000 + static_cast<int>(ids.size()));
        ids.push_back(id);
        event = register_event(make_obj(
            id, {kVocab[rng.next_below(kVocab.size())]}, rng.next_double(-5, 5),
            rng.next_double(-5, 5), t));
      } else if (dice < 7) {
        event = location_event(ids[rng.next_below(ids.size())], rng.next_double(-5, 5),
                               rng.next_double(-5, 5), t);
      } else if (dice < 8) {
        event.kind = EventKind::ProfileUpdate;
        event.object_id = ids[rng.next_below(ids.size())];
        event.at = t;
        event.payload =
            ProfileUpdatePayload{{kVocab[rng.next_below(kVocab.size())]}, {}};
      } else if (dice < 9) {
        event.kind = EventKind::Rating;
        event.object_id = ids[rng.next_below(ids.size())];
        event.at = t;
        RatingRecord r;
        r.user_id = "u" + std::to_string(rng.next_below(20));
        r.turk_id = event.object_id;
        r.rating = 1.0 + static_cast<double>(rng.next_below(5));
        r.at = t;
        event.payload = r;
      } else {
        event.kind = EventKind::Response;
        event.object_id = ids[rng.next_below(ids.size())];
        event.at = t;
        event.payload = ResponsePayload{"s" + std::to_string(rng.next_below(40)), "ACCEPT"};
      }
      REQUIRE(apply_event(live, event).ok());
      REQUIRE(writer.value().append(event).ok());
    }
  }

  auto outcome = replay_log(path);
  REQUIRE(outcome.ok());
  REQUIRE_FALSE(outcome.value().corruption.has_value());
  const auto& replayed = outcome.value().state;

  CHECK(replayed.index->size() == live.index->size());
  CHECK(replayed.ratings == live.ratings);
  CHECK(replayed.responses == live.responses);
  CHECK(replayed.last_event_at == live.last_event_at);

  auto a = replayed.index->all_objects();
  auto b = live.index->all_objects();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);

  SplitMix64 qrng(501);
  for (int i = 0; i < 100; ++i) {
    SplitMix64 fork_a = qrng.fork(static_cast<std::uint64_t>(i));
    SplitMix64 fork_b = fork_a;
    CHECK(run_query(*replayed.index, fork_a) == run_query(*live.index, fork_b));
  }
  std::remove(path.c_str());
}

TEST_CASE("appended events are durable immediately") {
  std::string path = temp_path("log_durable.jsonl");
  std::remove(path.c_str());
  auto writer = EventLogWriter::open(path);
  REQUIRE(writer.ok());
  REQUIRE(writer.value().append(register_event(make_obj("t1", {"x"}, 1, 1, 50))).ok());

  // Read back while the writer is still open.
  auto outcome = replay_log(path);
  REQUIRE(outcome.ok());
  CHECK(outcome.value().state.index->size() == 1);
  std::remove(path.c_str());
}

TEST_CASE("torn tail is reported at its byte offset with the prefix intact") {
  std::string path = temp_path("log_torn.jsonl");
  std::remove(path.c_str());
  {
    auto writer = EventLogWriter::open(path);
    REQUIRE(writer.ok());
    REQUIRE(writer.value().append(register_event(make_obj("t1", {"x"}, 1, 1, 50))).ok());
    REQUIRE(writer.value().append(register_event(make_obj("t2", {"y"}, 2, 2, 60))).ok());
  }
  auto clean_size = std::filesystem::file_size(path);

  SUBCASE("partial json fragment") {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << "{\"kind\":\"REGISTER\",\"object_id\":\"t3\"";  // no newline, cut short
    out.close();
    auto outcome = replay_log(path);
    REQUIRE(outcome.ok());
    REQUIRE(outcome.value().corruption.has_value());
    CHECK(outcome.value().corruption->byte_offset == clean_size);
    CHECK(outcome.value().state.index->size() == 2);
    CHECK(outcome.value().state.last_event_at == 60);
  }

  SUBCASE("parseable line missing its newline is still torn") {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    std::string line = to_json(register_event(make_obj("t3", {"z"}, 3, 3, 70))).dump();
    out << line;  // complete JSON, no trailing newline
    out.close();
    auto outcome = replay_log(path);
    REQUIRE(outcome.ok());
    REQUIRE(outcome.value().corruption.has_value());
    CHECK(outcome.value().corruption->byte_offset == clean_size);
    CHECK(outcome.value().state.index->size() == 2);
  }

  std::remove(path.c_str());
}

TEST_CASE("unparseable middle line stops replay at its offset") {
  std::string path = temp_path("log_garbage.jsonl");
  std::remove(path.c_str());
  std::string first = to_json(register_event(make_obj("t1", {"x"}, 1, 1, 50))).dump() + "\n";
  std::string second = "this is not json\n";
  std::string third = to_json(register_event(make_obj("t2", {"y"}, 2, 2, 60))).dump() + "\n";
  {
    std::ofstream out(path, std::ios::binary);
    out << first << second << third;
  }
  auto outcome = replay_log(path);
  REQUIRE(outcome.ok());
  REQUIRE(outcome.value().corruption.has_value());
  CHECK(outcome.value().corruption->byte_offset == first.size());
  // Only the prefix before the bad line was applied.
  CHECK(outcome.value().state.index->size() == 1);
  CHECK(outcome.value().state.index->find("t2") == nullptr);
  std::remove(path.c_str());
}

TEST_CASE("semantic violations corrupt the log") {
  std::string path = temp_path("log_semantic.jsonl");

  SUBCASE("duplicate register") {
    std::remove(path.c_str());
    std::string first = to_json(register_event(make_obj("t1", {"x"}, 1, 1, 50))).dump() + "\n";
    std::string dup = to_json(register_event(make_obj("t1", {"x"}, 2, 2, 60))).dump() + "\n";
    {
      std::ofstream out(path, std::ios::binary);
      out << first << dup;
    }
    auto outcome = replay_log(path);
    REQUIRE(outcome.ok());
    REQUIRE(outcome.value().corruption.has_value());
    CHECK(outcome.value().corruption->byte_offset == first.size());
    CHECK(outcome.value().corruption->reason.find("DUPLICATE_ID") != std::string::npos);
    CHECK(outcome.value().state.index->find("t1")->lat == 1);
  }

  SUBCASE("per-object timestamp regression") {
    std::remove(path.c_str());
    std::string first = to_json(register_event(make_obj("t1", {"x"}, 1, 1, 50))).dump() + "\n";
    std::string second = to_json(location_event("t1", 2, 2, 49)).dump() + "\n";
    {
      std::ofstream out(path, std::ios::binary);
      out << first << second;
    }
    auto outcome = replay_log(path);
    REQUIRE(outcome.ok());
    REQUIRE(outcome.value().corruption.has_value());
    CHECK(outcome.value().corruption->byte_offset == first.size());
    CHECK(outcome.value().state.index->find("t1")->positioned_at == 50);
  }

  SUBCASE("update for an unregistered object") {
    std::remove(path.c_str());
    std::string only = to_json(location_event("ghost", 2, 2, 49)).dump() + "\n";
    {
      std::ofstream out(path, std::ios::binary);
      out << only;
    }
    auto outcome = replay_log(path);
    REQUIRE(outcome.ok());
    REQUIRE(outcome.value().corruption.has_value());
    CHECK(outcome.value().corruption->byte_offset == 0);
    CHECK(outcome.value().corruption->reason.find("NOT_FOUND") != std::string::npos);
  }

  std::remove(path.c_str());
}

TEST_CASE("snapshot round trip") {
  std::string log_path = temp_path("log_snap.jsonl");
  std::string snap_path = temp_path("snap.json");
  std::remove(log_path.c_str());
  std::remove(snap_path.c_str());
  {
    auto writer = EventLogWriter::open(log_path);
    REQUIRE(writer.ok());
    REQUIRE(writer.value().append(register_event(make_obj("t2", {"b"}, 2, 2, 60))).ok());
    REQUIRE(writer.value().append(register_event(make_obj("t1", {"a"}, 1, 1, 70))).ok());
    RatingRecord r;
    r.user_id = "u1";
    r.turk_id = "t1";
    r.rating = 4.0;
    r.at = 80;
    TurkEvent rating;
    rating.kind = EventKind::Rating;
    rating.object_id = "t1";
    rating.at = 80;
    rating.payload = r;
    REQUIRE(writer.value().append(rating).ok());
  }
  auto outcome = replay_log(log_path);
  REQUIRE(outcome.ok());

  std::vector<RatingRecord> ratings{outcome.value().state.ratings};
  CarsHyperparams hyper;
  hyper.factors = 0;
  hyper.epochs = 5;
  auto model = train_cars(ratings, hyper, 0);
  REQUIRE(model.ok());

  Snapshot snap = capture_snapshot(outcome.value().state, &model.value());
  CHECK(snap.format_version == 1);
  CHECK(snap.captured_at == 80);
  REQUIRE(snap.objects.size() == 2);
  CHECK(snap.objects[0].id == "t1");  // sorted by id, not insertion order
  CHECK(snap.objects[1].id == "t2");
  REQUIRE(snap.cars_model_dump.has_value());

  REQUIRE(write_snapshot(snap_path, snap).ok());
  auto loaded = read_snapshot(snap_path);
  REQUIRE(loaded.ok());
  CHECK(loaded.value().format_version == 1);
  CHECK(loaded.value().captured_at == 80);
  REQUIRE(loaded.value().objects.size() == 2);
  CHECK(loaded.value().objects[0] == snap.objects[0]);
  CHECK(loaded.value().objects[1] == snap.objects[1]);
  REQUIRE(loaded.value().cars_model_dump.has_value());
  auto reloaded_model = CarsModel::load(*loaded.value().cars_model_dump);
  REQUIRE(reloaded_model.ok());
  CHECK(reloaded_model.value() == model.value());

  auto state = state_from_snapshot(loaded.value());
  REQUIRE(state.ok());
  CHECK(state.value().index->size() == 2);
  CHECK(state.value().last_event_at == 80);
  std::remove(log_path.c_str());
  std::remove(snap_path.c_str());
}

TEST_CASE("snapshot rejects unknown versions and malformed documents") {
  std::string path = temp_path("snap_bad.json");
  {
    std::ofstream out(path);
    out << "{\"format_version\": 2, \"captured_at\": 0, \"objects\": []}\n";
  }
  CHECK(read_snapshot(path).status().code() == Errc::CorruptLog);
  {
    std::ofstream out(path);
    out << "not json at all\n";
  }
  CHECK(read_snapshot(path).status().code() == Errc::CorruptLog);
  CHECK(read_snapshot(temp_path("snap_never_written.json")).status().code() == Errc::IoError);
  std::remove(path.c_str());
}

TEST_CASE("snapshot plus suffix equals a full replay") {
  std::string log_path = temp_path("log_suffix.jsonl");
  std::string snap_path = temp_path("snap_suffix.json");
  std::remove(log_path.c_str());
  std::remove(snap_path.c_str());

  SplitMix64 rng(600);
  std::vector<std::string> ids;
  std::vector<TurkEvent> events;
  std::int64_t t = 100;
  for (int i = 0; i < 600; ++i) {
    t += 1 + static_cast<std::int64_t>(rng.next_below(3));
    if (ids.size() < 30 || rng.next_below(4) == 0) {
      std::string id = "t" + std::to_string(100 + static_cast<int>(ids.size()));
      ids.push_back(id);
      events.push_back(register_event(make_obj(id, {kVocab[rng.next_below(kVocab.size())]},
                                               rng.next_double(-5, 5), rng.next_double(-5, 5),
                                               t)));
    } else {
      events.push_back(location_event(ids[rng.next_below(ids.size())], rng.next_double(-5, 5),
                                      rng.next_double(-5, 5), t));
    }
  }

  // Write the full log; snapshot the state after the first 400 events.
  ReplayedState partial = make_state();
  {
    auto writer = EventLogWriter::open(log_path);
    REQUIRE(writer.ok());
    for (std::size_t i = 0; i < events.size(); ++i) {
      REQUIRE(writer.value().append(events[i]).ok());
      if (i < 400) REQUIRE(apply_event(partial, events[i]).ok());
    }
  }
  REQUIRE(write_snapshot(snap_path, capture_snapshot(partial)).ok());

  // Replay the suffix on top of the snapshot state.
  auto base = read_snapshot(snap_path);
  REQUIRE(base.ok());
  auto restored = state_from_snapshot(base.value());
  REQUIRE(restored.ok());
  ReplayedState resumed = std::move(restored.value());
  for (std::size_t i = 400; i < events.size(); ++i)
    REQUIRE(apply_event(resumed, events[i]).ok());

  auto full = replay_log(log_path);
  REQUIRE(full.ok());
  REQUIRE_FALSE(full.value().corruption.has_value());

  CHECK(resumed.index->size() == full.value().state.index->size());
  CHECK(resumed.last_event_at == full.value().state.last_event_at);
  SplitMix64 qrng(601);
  for (int i = 0; i < 100; ++i) {
    SplitMix64 fork_a = qrng.fork(static_cast<std::uint64_t>(i));
    SplitMix64 fork_b = fork_a;
    CHECK(run_query(*resumed.index, fork_a) == run_query(*full.value().state.index, fork_b));
  }
  std::remove(log_path.c_str());
  std::remove(snap_path.c_str());
}
