#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crowdserve/bench.hpp"
#include "crowdserve/big_tree.hpp"
#include "crowdserve/cars.hpp"
#include "crowdserve/dispatch.hpp"
#include "crowdserve/event_log.hpp"
#include "crowdserve/model.hpp"
#include "crowdserve/topk.hpp"
#include "crowdserve/workload.hpp"

namespace {

using crowdserve::Errc;
using crowdserve::Result;
using crowdserve::Status;
using nlohmann::json;

int fail(const Status& status) {
  std::cerr << crowdserve::errc_name(status.code()) << ": " << status.message() << "\n";
  return 1;
}

int fail(const crowdserve::Error& error) {
  std::cerr << crowdserve::errc_name(error.code) << ": " << error.message << "\n";
  return 1;
}

// State sources shared by the stateful subcommands: an optional snapshot
// base plus an optional event-log suffix.
struct StateFlags {
  std::string snapshot_path;
  std::string log_path;
};

void add_state_flags(CLI::App* cmd, StateFlags& flags) {
  cmd->add_option("--snapshot", flags.snapshot_path, "snapshot to start from");
  cmd->add_option("--log", flags.log_path, "event log to replay");
}

Result<crowdserve::ReplayedState> load_state(const StateFlags& flags) {
  crowdserve::ReplayedState state = crowdserve::make_state();
  if (!flags.snapshot_path.empty()) {
    auto snap = crowdserve::read_snapshot(flags.snapshot_path);
    if (!snap.ok()) return snap.error();
    auto restored = crowdserve::state_from_snapshot(snap.value());
    if (!restored.ok()) return restored.error();
    state = std::move(restored).value();
  }
  if (!flags.log_path.empty()) {
    auto outcome = crowdserve::replay_log(flags.log_path, std::move(state));
    if (!outcome.ok()) return outcome.error();
    if (outcome.value().corruption) {
      const auto& c = *outcome.value().corruption;
      return Status::fail(Errc::CorruptLog,
                          c.reason + " at byte " + std::to_string(c.byte_offset))
          .error();
    }
    state = std::move(outcome).value().state;
  }
  return state;
}

struct QueryFlags {
  double lat = 0.0;
  double lon = 0.0;
  std::string keywords;
  int k = 10;
  double alpha = 0.5;
  double lambda = 2.0;
  double dmax = 10000.0;
  std::int64_t at = -1;  // -1: use the state's last event time
};

void add_query_flags(CLI::App* cmd, QueryFlags& flags) {
  cmd->add_option("--lat", flags.lat, "query latitude")->required();
  cmd->add_option("--lon", flags.lon, "query longitude")->required();
  cmd->add_option("--kw", flags.keywords, "comma-separated keywords")->required();
  cmd->add_option("--k", flags.k, "result count");
  cmd->add_option("--alpha", flags.alpha, "spatial weight in [0,1]");
  cmd->add_option("--lambda", flags.lambda, "recency decay base");
  cmd->add_option("--dmax", flags.dmax, "cutoff distance in meters");
  cmd->add_option("--at", flags.at, "query timestamp (default: last event time)");
}

crowdserve::ServiceQuery build_query(const QueryFlags& flags, std::int64_t default_at) {
  crowdserve::ServiceQuery query;
  std::vector<std::string> raw;
  std::stringstream ss(flags.keywords);
  std::string token;
  while (std::getline(ss, token, ',')) raw.push_back(token);
  query.keywords = crowdserve::canonicalize_tokens(raw);
  query.lat = flags.lat;
  query.lon = flags.lon;
  query.issued_at = flags.at >= 0 ? flags.at : default_at;
  query.k = flags.k;
  query.alpha = flags.alpha;
  query.lambda_base = flags.lambda;
  query.max_distance_m = flags.dmax;
  return query;
}

Result<std::vector<crowdserve::RatingRecord>> read_ratings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return Status::fail(Errc::IoError, "open " + path).error();
  std::vector<crowdserve::RatingRecord> ratings;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json raw = json::parse(line, nullptr, false);
    if (raw.is_discarded())
      return Status::fail(Errc::BadRecord,
                          path + ":" + std::to_string(line_no) + ": unparseable JSON")
          .error();
    auto rating = crowdserve::rating_from_json(raw);
    if (!rating.ok())
      return Status::fail(rating.code(),
                          path + ":" + std::to_string(line_no) + ": " + rating.error().message)
          .error();
    ratings.push_back(std::move(rating).value());
  }
  return ratings;
}

Result<crowdserve::CarsModel> read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return Status::fail(Errc::IoError, "open " + path).error();
  std::stringstream buffer;
  buffer << in.rdbuf();
  return crowdserve::CarsModel::load(buffer.str());
}

Status write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return Status();
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return Status::fail(Errc::IoError, "open " + path);
  out << text;
  out.flush();
  if (!out) return Status::fail(Errc::IoError, "write " + path);
  return Status();
}

int cmd_load(const StateFlags& state_flags) {
  auto state = load_state(state_flags);
  if (!state.ok()) return fail(state.error());
  json summary;
  summary["objects"] = state.value().index->size();
  summary["ratings"] = state.value().ratings.size();
  summary["responses"] = state.value().responses.size();
  summary["last_event_at"] = state.value().last_event_at;
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_snapshot(const StateFlags& state_flags, const std::string& out_path,
                 const std::string& model_path) {
  auto state = load_state(state_flags);
  if (!state.ok()) return fail(state.error());
  std::optional<crowdserve::CarsModel> model;
  if (!model_path.empty()) {
    auto loaded = read_model(model_path);
    if (!loaded.ok()) return fail(loaded.error());
    model = std::move(loaded).value();
  }
  crowdserve::Snapshot snap =
      crowdserve::capture_snapshot(state.value(), model ? &*model : nullptr);
  Status st = crowdserve::write_snapshot(out_path, snap);
  if (!st.ok()) return fail(st);
  std::cout << "wrote " << out_path << " (" << snap.objects.size() << " objects)\n";
  return 0;
}

int cmd_query(const StateFlags& state_flags, const QueryFlags& query_flags) {
  auto state = load_state(state_flags);
  if (!state.ok()) return fail(state.error());
  crowdserve::ServiceQuery query = build_query(query_flags, state.value().last_event_at);
  auto params = crowdserve::ScoringParams::from_query(query);
  auto ranked = crowdserve::top_k(*state.value().index, query, params);
  if (!ranked.ok()) return fail(ranked.error());
  json rows = json::array();
  for (const auto& r : ranked.value()) {
    json row;
    row["rank"] = r.rank;
    row["id"] = r.object_id;
    row["score"] = r.score.total;
    row["spatial"] = r.score.spatial;
    row["textual"] = r.score.textual;
    row["recency"] = r.score.recency;
    rows.push_back(std::move(row));
  }
  std::cout << rows.dump(2) << "\n";
  return 0;
}

int cmd_simulate(const std::string& spec_path, const std::string& out_path) {
  auto spec = crowdserve::load_workload_spec(spec_path);
  if (!spec.ok()) return fail(spec.error());
  auto workload = crowdserve::generate_workload(spec.value());
  if (!workload.ok()) return fail(workload.error());
  std::string text;
  for (const auto& event : workload.value().events) {
    text += crowdserve::to_json(event).dump();
    text += "\n";
  }
  Status st = write_text(out_path, text);
  if (!st.ok()) return fail(st);
  if (!out_path.empty() && out_path != "-")
    std::cerr << workload.value().events.size() << " events -> " << out_path << "\n";
  return 0;
}

int cmd_bench(const std::string& spec_path, const std::string& out_path) {
  auto spec = crowdserve::load_workload_spec(spec_path);
  if (!spec.ok()) return fail(spec.error());
  auto report = crowdserve::run_bench(spec.value());
  if (!report.ok()) return fail(report.error());
  std::string text = crowdserve::to_json(report.value()).dump(2) + "\n";
  Status st = write_text(out_path, text);
  if (!st.ok()) return fail(st);
  if (!out_path.empty() && out_path != "-") std::cout << text;
  return 0;
}

int cmd_train_cars(const std::string& ratings_path, const std::string& out_path,
                   const crowdserve::CarsHyperparams& hyper, std::uint64_t seed) {
  auto ratings = read_ratings(ratings_path);
  if (!ratings.ok()) return fail(ratings.error());
  auto model = crowdserve::train_cars(ratings.value(), hyper, seed);
  if (!model.ok()) return fail(model.error());
  Status st = write_text(out_path, model.value().dump());
  if (!st.ok()) return fail(st);
  if (!out_path.empty() && out_path != "-") {
    const auto& curve = model.value().training_curve();
    std::cerr << "trained on " << ratings.value().size() << " ratings, final loss "
              << (curve.empty() ? 0.0 : curve.back()) << "\n";
  }
  return 0;
}

int cmd_recommend(const StateFlags& state_flags, const QueryFlags& query_flags,
                  const std::string& model_path, const std::string& user_id, int m,
                  const std::string& exclude_csv) {
  auto state = load_state(state_flags);
  if (!state.ok()) return fail(state.error());
  auto model = read_model(model_path);
  if (!model.ok()) return fail(model.error());
  crowdserve::ServiceQuery query = build_query(query_flags, state.value().last_event_at);
  Status valid = crowdserve::validate_query(query);
  if (!valid.ok()) return fail(valid);

  std::vector<std::string> pool;
  for (const auto* obj : state.value().index->all_objects()) pool.push_back(obj->id);
  std::set<std::string> exclude;
  std::stringstream ss(exclude_csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) exclude.insert(token);
  }

  auto picks = crowdserve::recommend(model.value(), user_id, query, pool, exclude, m);
  json rows = json::array();
  for (const auto& [turk_id, predicted] : picks) {
    json row;
    row["turk_id"] = turk_id;
    row["predicted"] = predicted;
    rows.push_back(std::move(row));
  }
  std::cout << rows.dump(2) << "\n";
  return 0;
}

int cmd_dispatch(const StateFlags& state_flags, const QueryFlags& query_flags,
                 const std::string& script_path, const crowdserve::DispatchConfig& config,
                 const std::string& model_path, const std::string& user_id) {
  auto state = load_state(state_flags);
  if (!state.ok()) return fail(state.error());
  crowdserve::ServiceQuery query = build_query(query_flags, state.value().last_event_at);
  auto params = crowdserve::ScoringParams::from_query(query);

  std::optional<crowdserve::CarsModel> model;
  if (!model_path.empty()) {
    auto loaded = read_model(model_path);
    if (!loaded.ok()) return fail(loaded.error());
    model = std::move(loaded).value();
  }

  auto session = crowdserve::DispatchSession::open(
      "cli", *state.value().index, query, params, config, model ? &*model : nullptr, user_id);
  if (!session.ok()) return fail(session.error());

  std::ifstream script(script_path, std::ios::binary);
  if (!script) return fail(Status::fail(Errc::IoError, "open " + script_path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(script, line)) {
    ++line_no;
    if (line.empty()) continue;
    json row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object() || !row.contains("at") ||
        !row["at"].is_number_integer())
      return fail(Status::fail(Errc::BadRecord, script_path + ":" + std::to_string(line_no) +
                                                     ": expected {\"at\", \"turk\", \"verdict\"}"));
    Status st = session.value().tick(row["at"].get<std::int64_t>());
    if (!st.ok()) return fail(st);
    if (row.contains("turk")) {
      if (!row["turk"].is_string() || !row.contains("verdict") || !row["verdict"].is_string())
        return fail(Status::fail(Errc::BadRecord, script_path + ":" + std::to_string(line_no) +
                                                       ": expected {\"at\", \"turk\", \"verdict\"}"));
      st = session.value().respond(row["turk"].get<std::string>(),
                                   row["verdict"].get<std::string>());
      if (!st.ok()) return fail(st);
    }
  }
  for (const auto& event : session.value().events())
    std::cout << crowdserve::to_json(event).dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crowdserve: temporal spatial-keyword index, recommender, and dispatch loop"};
  app.require_subcommand(1);

  StateFlags state_flags;
  QueryFlags query_flags;

  auto* load_cmd = app.add_subcommand("load", "replay state and print a summary");
  std::string load_log;
  load_cmd->add_option("log", load_log, "event log to replay")->required();
  StateFlags load_flags;
  load_cmd->add_option("--snapshot", load_flags.snapshot_path, "snapshot to start from");
  load_cmd->callback([&] {
    load_flags.log_path = load_log;
    std::exit(cmd_load(load_flags));
  });

  auto* snapshot_cmd = app.add_subcommand("snapshot", "write a snapshot of the loaded state");
  std::string snapshot_out;
  std::string snapshot_model;
  snapshot_cmd->add_option("file", snapshot_out, "snapshot file to write")->required();
  add_state_flags(snapshot_cmd, state_flags);
  snapshot_cmd->add_option("--model", snapshot_model, "trained model dump to embed");
  snapshot_cmd->callback(
      [&] { std::exit(cmd_snapshot(state_flags, snapshot_out, snapshot_model)); });

  auto* query_cmd = app.add_subcommand("query", "run one top-k query against the loaded state");
  add_state_flags(query_cmd, state_flags);
  add_query_flags(query_cmd, query_flags);
  query_cmd->callback([&] { std::exit(cmd_query(state_flags, query_flags)); });

  auto* sim_cmd = app.add_subcommand("simulate", "generate a workload event stream");
  std::string sim_spec;
  std::string sim_out;
  sim_cmd->add_option("spec", sim_spec, "workload spec JSON")->required();
  sim_cmd->add_option("--out", sim_out, "write events here instead of stdout");
  sim_cmd->callback([&] { std::exit(cmd_simulate(sim_spec, sim_out)); });

  auto* bench_cmd = app.add_subcommand("bench", "run the benchmark for a workload spec");
  std::string bench_spec;
  std::string bench_out;
  bench_cmd->add_option("spec", bench_spec, "workload spec JSON")->required();
  bench_cmd->add_option("--out", bench_out, "write the report here");
  bench_cmd->callback([&] { std::exit(cmd_bench(bench_spec, bench_out)); });

  auto* train_cmd = app.add_subcommand("train-cars", "train the rating model");
  std::string train_ratings;
  std::string train_out;
  crowdserve::CarsHyperparams hyper;
  std::uint64_t train_seed = 0;
  train_cmd->add_option("ratings", train_ratings, "ratings JSONL file")->required();
  train_cmd->add_option("--out", train_out, "write the model dump here");
  train_cmd->add_option("--factors", hyper.factors, "latent dimension");
  train_cmd->add_option("--lr", hyper.learning_rate, "SGD learning rate");
  train_cmd->add_option("--reg", hyper.regularization, "L2 strength");
  train_cmd->add_option("--epochs", hyper.epochs, "training epochs");
  train_cmd->add_option("--seed", train_seed, "RNG seed");
  train_cmd->callback(
      [&] { std::exit(cmd_train_cars(train_ratings, train_out, hyper, train_seed)); });

  auto* rec_cmd = app.add_subcommand("recommend", "rank turks for a user by predicted rating");
  std::string rec_model;
  std::string rec_user;
  std::string rec_exclude;
  int rec_m = 10;
  add_state_flags(rec_cmd, state_flags);
  add_query_flags(rec_cmd, query_flags);
  rec_cmd->add_option("--model", rec_model, "trained model dump")->required();
  rec_cmd->add_option("--user", rec_user, "requesting user id")->required();
  rec_cmd->add_option("--m", rec_m, "recommendation count");
  rec_cmd->add_option("--exclude", rec_exclude, "comma-separated turk ids to skip");
  rec_cmd->callback([&] {
    std::exit(cmd_recommend(state_flags, query_flags, rec_model, rec_user, rec_m, rec_exclude));
  });

  auto* dispatch_cmd = app.add_subcommand("dispatch", "run a scripted dispatch session");
  std::string dispatch_script;
  std::string dispatch_model;
  std::string dispatch_user;
  crowdserve::DispatchConfig dispatch_config;
  add_state_flags(dispatch_cmd, state_flags);
  add_query_flags(dispatch_cmd, query_flags);
  dispatch_cmd->add_option("--script", dispatch_script, "responses JSONL")->required();
  dispatch_cmd->add_option("--km", dispatch_config.matcher_slots, "matcher slots");
  dispatch_cmd->add_option("--kr", dispatch_config.recommender_slots, "recommender slots");
  dispatch_cmd->add_option("--timeout", dispatch_config.timeout_s, "ignore timeout seconds");
  dispatch_cmd->add_option("--model", dispatch_model, "trained model dump");
  dispatch_cmd->add_option("--user", dispatch_user, "requesting user id");
  dispatch_cmd->callback([&] {
    std::exit(cmd_dispatch(state_flags, query_flags, dispatch_script, dispatch_config,
                           dispatch_model, dispatch_user));
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}
