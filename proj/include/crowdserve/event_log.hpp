#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crowdserve/big_tree.hpp"
#include "crowdserve/cars.hpp"
#include "crowdserve/errors.hpp"
#include "crowdserve/model.hpp"

namespace crowdserve {

// Append-only JSON-lines log. Every append is flushed to disk before it
// returns, so a line either made it whole or shows up torn at the tail.
class EventLogWriter {
 public:
  static Result<EventLogWriter> open(const std::string& path);

  EventLogWriter(EventLogWriter&& other) noexcept;
  EventLogWriter& operator=(EventLogWriter&& other) noexcept;
  ~EventLogWriter();

  Status append(const TurkEvent& event);
  const std::string& path() const { return path_; }

 private:
  explicit EventLogWriter(int fd, std::string path) : fd_(fd), path_(std::move(path)) {}

  int fd_ = -1;
  std::string path_;
};

// Everything a log rebuilds: the index plus the rating and response history.
struct ReplayedState {
  std::unique_ptr<BigTree> index;
  std::vector<RatingRecord> ratings;
  std::vector<std::pair<std::string, ResponsePayload>> responses;  // (turk_id, payload)
  std::int64_t last_event_at = 0;
};

ReplayedState make_state(const BigTreeConfig& config = {});

struct LogCorruption {
  std::uint64_t byte_offset = 0;  // where the first bad line starts
  std::string reason;
};

struct ReplayOutcome {
  ReplayedState state;  // log prefix up to the corruption, or the whole log
  std::optional<LogCorruption> corruption;
};

// Mutates state per one event. Used by replay and by the live engine so the
// two stay in lockstep.
Status apply_event(ReplayedState& state, const TurkEvent& event);

// Reads the log into `initial`. Stops at the first bad line (unparseable,
// not newline-terminated, timestamp regression, or semantically
// inapplicable) and reports it with its byte offset; everything before it
// stays applied. IO_ERROR if the file cannot be read at all.
Result<ReplayOutcome> replay_log(const std::string& path, ReplayedState initial);
Result<ReplayOutcome> replay_log(const std::string& path, const BigTreeConfig& config = {});

struct Snapshot {
  int format_version = 1;
  std::int64_t captured_at = 0;
  std::vector<SpatialTextualObject> objects;  // sorted by id
  std::optional<std::string> cars_model_dump;
};

Snapshot capture_snapshot(const ReplayedState& state, const CarsModel* model = nullptr);
Status write_snapshot(const std::string& path, const Snapshot& snapshot);
Result<Snapshot> read_snapshot(const std::string& path);
Result<ReplayedState> state_from_snapshot(const Snapshot& snapshot,
                                          const BigTreeConfig& config = {});

}  // namespace crowdserve
