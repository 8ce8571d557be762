#include "crowdserve/errors.hpp"

namespace crowdserve {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::EmptySkills: return "EMPTY_SKILLS";
    case Errc::OutOfRangeCoord: return "OUT_OF_RANGE_COORD";
    case Errc::BadTimestamp: return "BAD_TIMESTAMP";
    case Errc::BadRecord: return "BAD_RECORD";
    case Errc::EmptyQuery: return "EMPTY_QUERY";
    case Errc::BadQueryParams: return "BAD_QUERY_PARAMS";
    case Errc::DuplicateId: return "DUPLICATE_ID";
    case Errc::NotFound: return "NOT_FOUND";
    case Errc::StaleUpdate: return "STALE_UPDATE";
    case Errc::CursorInvalidated: return "CURSOR_INVALIDATED";
    case Errc::Exhausted: return "EXHAUSTED";
    case Errc::UnknownCandidate: return "UNKNOWN_CANDIDATE";
    case Errc::AlreadyTerminal: return "ALREADY_TERMINAL";
    case Errc::EmptyTrainingSet: return "EMPTY_TRAINING_SET";
    case Errc::BadHyperparams: return "BAD_HYPERPARAMS";
    case Errc::IoError: return "IO_ERROR";
    case Errc::CorruptLog: return "CORRUPT_LOG";
    case Errc::BadSpec: return "BAD_SPEC";
  }
  return "UNKNOWN";
}

}  // namespace crowdserve
