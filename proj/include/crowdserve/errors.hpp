#pragma once

#include <cassert>
#include <string>
#include <utility>
#include <variant>

namespace crowdserve {

// Stable error codes; names below double as wire/diagnostic strings.
enum class Errc {
  EmptySkills,
  OutOfRangeCoord,
  BadTimestamp,
  BadRecord,
  EmptyQuery,
  BadQueryParams,
  DuplicateId,
  NotFound,
  StaleUpdate,
  CursorInvalidated,
  Exhausted,
  UnknownCandidate,
  AlreadyTerminal,
  EmptyTrainingSet,
  BadHyperparams,
  IoError,
  CorruptLog,
  BadSpec,
};

const char* errc_name(Errc code);

struct Error {
  Errc code = Errc::BadRecord;
  std::string message;
};

class Status {
 public:
  Status() = default;

  static Status fail(Errc code, std::string message) {
    Status s;
    s.error_ = Error{code, std::move(message)};
    s.failed_ = true;
    return s;
  }

  bool ok() const { return !failed_; }
  explicit operator bool() const { return ok(); }

  const Error& error() const {
    assert(failed_);
    return error_;
  }
  Errc code() const { return error_.code; }
  const std::string& message() const { return error_.message; }

 private:
  Error error_;
  bool failed_ = false;
};

template <typename T>
class Result {
 public:
  Result(T value) : payload_(std::move(value)) {}  // NOLINT: implicit by design
  Result(Error error) : payload_(std::move(error)) {}
  Result(Status status) : payload_(std::in_place_type<Error>, status.error()) {}

  static Result fail(Errc code, std::string message) {
    return Result(Error{code, std::move(message)});
  }

  bool ok() const { return std::holds_alternative<T>(payload_); }
  explicit operator bool() const { return ok(); }

  T& value() & {
    assert(ok());
    return std::get<T>(payload_);
  }
  const T& value() const& {
    assert(ok());
    return std::get<T>(payload_);
  }
  T&& value() && {
    assert(ok());
    return std::get<T>(std::move(payload_));
  }

  const Error& error() const {
    assert(!ok());
    return std::get<Error>(payload_);
  }
  Errc code() const { return error().code; }

  Status status() const {
    if (ok()) return Status();
    return Status::fail(error().code, error().message);
  }

 private:
  std::variant<T, Error> payload_;
};

}  // namespace crowdserve
