#include "crowdserve/event_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace crowdserve {

namespace {

using nlohmann::json;

Status io_error(const std::string& what, const std::string& path) {
  return Status::fail(Errc::IoError, what + " " + path + ": " + std::strerror(errno));
}

}  // namespace

Result<EventLogWriter> EventLogWriter::open(const std::string& path) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) return io_error("open", path).error();
  return EventLogWriter(fd, path);
}

EventLogWriter::EventLogWriter(EventLogWriter&& other) noexcept
    : fd_(other.fd_), path_(std::move(other.path_)) {
  other.fd_ = -1;
}

EventLogWriter& EventLogWriter::operator=(EventLogWriter&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    path_ = std::move(other.path_);
    other.fd_ = -1;
  }
  return *this;
}

EventLogWriter::~EventLogWriter() {
  if (fd_ >= 0) ::close(fd_);
}

Status EventLogWriter::append(const TurkEvent& event) {
  if (fd_ < 0) return Status::fail(Errc::IoError, "append: log writer is closed");
  std::string line = to_json(event).dump();
  line.push_back('\n');
  const char* data = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    ssize_t n = ::write(fd_, data, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      return io_error("write", path_);
    }
    data += n;
    left -= static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) return io_error("fsync", path_);
  return Status();
}

ReplayedState make_state(const BigTreeConfig& config) {
  ReplayedState state;
  state.index = std::make_unique<BigTree>(config);
  return state;
}

Status apply_event(ReplayedState& state, const TurkEvent& event) {
  const auto dispatch = [&]() -> Status {
    switch (event.kind) {
      case EventKind::Register: {
        const auto& obj = std::get<SpatialTextualObject>(event.payload);
        return state.index->insert(obj);
      }
      case EventKind::ProfileUpdate: {
        const auto& p = std::get<ProfileUpdatePayload>(event.payload);
        return state.index->update_profile(event.object_id, p.add_skills, p.remove_skills);
      }
      case EventKind::LocationUpdate: {
        const auto& p = std::get<LocationUpdatePayload>(event.payload);
        return state.index->update_location(event.object_id, {p.lat, p.lon}, p.positioned_at);
      }
      case EventKind::Rating: {
        state.ratings.push_back(std::get<RatingRecord>(event.payload));
        return Status();
      }
      case EventKind::Response: {
        state.responses.emplace_back(event.object_id, std::get<ResponsePayload>(event.payload));
        return Status();
      }
    }
    return Status::fail(Errc::BadRecord, "unknown event kind");
  };
  Status applied = dispatch();
  if (applied.ok()) state.last_event_at = std::max(state.last_event_at, event.at);
  return applied;
}

Result<ReplayOutcome> replay_log(const std::string& path, ReplayedState initial) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return Status::fail(Errc::IoError, "open " + path + ": " + std::strerror(errno));

  ReplayOutcome outcome;
  outcome.state = std::move(initial);

  // Per-object timestamps must never regress within one log.
  std::unordered_map<std::string, std::int64_t> last_at;

  std::uint64_t offset = 0;
  std::string line;
  while (true) {
    line.clear();
    if (!std::getline(in, line)) break;
    bool terminated = !in.eof();

    auto corrupt = [&](const std::string& reason) {
      outcome.corruption = LogCorruption{offset, reason};
    };

    if (!terminated) {
      corrupt("torn line: missing trailing newline");
      break;
    }
    if (line.empty()) {
      corrupt("empty line");
      break;
    }

    json raw = json::parse(line, nullptr, false);
    if (raw.is_discarded()) {
      corrupt("unparseable JSON");
      break;
    }
    auto event = event_from_json(raw);
    if (!event.ok()) {
      corrupt(std::string(errc_name(event.code())) + ": " + event.error().message);
      break;
    }

    auto [it, fresh] = last_at.try_emplace(event.value().object_id, event.value().at);
    if (!fresh) {
      if (event.value().at < it->second) {
        corrupt("timestamp regression for object " + event.value().object_id);
        break;
      }
      it->second = event.value().at;
    }

    Status applied = apply_event(outcome.state, event.value());
    if (!applied.ok()) {
      corrupt(std::string(errc_name(applied.code())) + ": " + applied.message());
      break;
    }

    offset += static_cast<std::uint64_t>(line.size()) + 1;  // +1 for the newline
  }
  if (outcome.corruption) return outcome;
  if (in.bad()) return Status::fail(Errc::IoError, "read " + path + ": " + std::strerror(errno));
  return outcome;
}

Result<ReplayOutcome> replay_log(const std::string& path, const BigTreeConfig& config) {
  return replay_log(path, make_state(config));
}

Snapshot capture_snapshot(const ReplayedState& state, const CarsModel* model) {
  Snapshot snap;
  snap.captured_at = state.last_event_at;
  for (const SpatialTextualObject* obj : state.index->all_objects()) snap.objects.push_back(*obj);
  if (model != nullptr) snap.cars_model_dump = model->dump();
  return snap;
}

Status write_snapshot(const std::string& path, const Snapshot& snapshot) {
  json doc;
  doc["format_version"] = snapshot.format_version;
  doc["captured_at"] = snapshot.captured_at;
  json objects = json::array();
  for (const auto& obj : snapshot.objects) objects.push_back(to_json(obj));
  doc["objects"] = std::move(objects);
  if (snapshot.cars_model_dump)
    doc["cars_model"] = *snapshot.cars_model_dump;
  else
    doc["cars_model"] = nullptr;

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return Status::fail(Errc::IoError, "open " + tmp + ": " + std::strerror(errno));
    out << doc.dump(2) << '\n';
    out.flush();
    if (!out) return Status::fail(Errc::IoError, "write " + tmp + ": " + std::strerror(errno));
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) return io_error("rename", path);
  return Status();
}

Result<Snapshot> read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return Status::fail(Errc::IoError, "open " + path + ": " + std::strerror(errno));
  std::stringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) return Status::fail(Errc::IoError, "read " + path + ": " + std::strerror(errno));

  json doc = json::parse(buffer.str(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    return Status::fail(Errc::CorruptLog, "snapshot is not a JSON object");
  if (!doc.contains("format_version") || !doc["format_version"].is_number_integer())
    return Status::fail(Errc::CorruptLog, "snapshot missing format_version");
  int version = doc["format_version"].get<int>();
  if (version != 1)
    return Status::fail(Errc::CorruptLog,
                        "unsupported snapshot format_version " + std::to_string(version));
  if (!doc.contains("captured_at") || !doc["captured_at"].is_number_integer())
    return Status::fail(Errc::CorruptLog, "snapshot missing captured_at");
  if (!doc.contains("objects") || !doc["objects"].is_array())
    return Status::fail(Errc::CorruptLog, "snapshot missing objects array");

  Snapshot snap;
  snap.format_version = version;
  snap.captured_at = doc["captured_at"].get<std::int64_t>();
  for (const auto& raw : doc["objects"]) {
    auto obj = validate_object(raw);
    if (!obj.ok())
      return Status::fail(Errc::CorruptLog, "snapshot object: " + obj.error().message);
    snap.objects.push_back(std::move(obj).value());
  }
  if (doc.contains("cars_model") && doc["cars_model"].is_string())
    snap.cars_model_dump = doc["cars_model"].get<std::string>();
  return snap;
}

Result<ReplayedState> state_from_snapshot(const Snapshot& snapshot, const BigTreeConfig& config) {
  ReplayedState state = make_state(config);
  for (const auto& obj : snapshot.objects) {
    Status st = state.index->insert(obj);
    if (!st.ok())
      return Status::fail(Errc::CorruptLog,
                          "snapshot object " + obj.id + ": " + st.message());
  }
  state.last_event_at = snapshot.captured_at;
  return state;
}

}  // namespace crowdserve
