#pragma once

#include <cstdint>
#include <deque>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "crowdserve/big_tree.hpp"
#include "crowdserve/errors.hpp"
#include "crowdserve/model.hpp"
#include "crowdserve/scoring.hpp"

namespace crowdserve {

struct RankedCandidate {
  std::string object_id;
  ScoreBreakdown score;
  int rank = 0;  // 1-based position in the result list

  bool operator==(const RankedCandidate&) const = default;
};

struct QueryStats {
  std::uint64_t nodes_visited = 0;
  std::uint64_t postings_scanned = 0;
  std::uint64_t distance_computations = 0;
};

// Result ordering used everywhere: total descending, object_id ascending.
bool ranks_before(double total_a, const std::string& id_a, double total_b,
                  const std::string& id_b);

// Best-first traversal with lazy distance refinement and bound-based
// termination. Returns min(query.k, positive-score objects) candidates,
// matching top_k_oracle exactly. Pass `stats` to receive traversal counters.
Result<std::vector<RankedCandidate>> top_k(const BigTree& index, const ServiceQuery& query,
                                           const ScoringParams& params,
                                           QueryStats* stats = nullptr);

// Brute force: scores everything, sorts, truncates. The reference answer.
Result<std::vector<RankedCandidate>> top_k_oracle(
    std::span<const SpatialTextualObject* const> objects, const ServiceQuery& query,
    const ScoringParams& params, QueryStats* stats = nullptr);

// Streaming next-best iterator over one index snapshot. Draws come in exact
// oracle order with no k limit; any index mutation invalidates the cursor.
class QueryCursor {
 public:
  QueryCursor(QueryCursor&&) = default;
  QueryCursor& operator=(QueryCursor&&) = default;

  // Next candidate, or EXHAUSTED once no positive-score object remains
  // (repeat calls keep returning EXHAUSTED), or CURSOR_INVALIDATED after a
  // mutation. Ranks count emitted candidates from 1.
  Result<RankedCandidate> next();

  // Counters accumulated across all work this cursor has done.
  const QueryStats& stats() const { return stats_; }

 private:
  friend Result<QueryCursor> open_cursor(const BigTree& index, const ServiceQuery& query,
                                         const ScoringParams& params);

  struct Entry {
    double key = 0.0;  // admissible bound (tiers 0-1) or exact total (tier 2)
    int tier = 0;      // 0 node, 1 unrefined candidate, 2 refined candidate
    std::uint64_t seq = 0;
    const BigTreeNode* node = nullptr;
    const SpatialTextualObject* obj = nullptr;
    ScoreBreakdown score;  // partial for tier 1 (spatial still unknown)
  };
  struct EntryLess {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.key != b.key) return a.key < b.key;
      if (a.tier != b.tier) return a.tier > b.tier;
      if (a.tier >= 1) return a.obj->id > b.obj->id;
      return a.seq > b.seq;
    }
  };

  QueryCursor() = default;
  void refill();

  const BigTree* index_ = nullptr;
  std::uint64_t epoch_ = 0;
  ServiceQuery query_;
  ScoringParams params_;
  std::priority_queue<Entry, std::vector<Entry>, EntryLess> frontier_;
  std::deque<RankedCandidate> buffer_;
  std::size_t buffer_target_ = 16;
  std::uint64_t seq_counter_ = 0;
  int emitted_ = 0;
  QueryStats stats_;
};

Result<QueryCursor> open_cursor(const BigTree& index, const ServiceQuery& query,
                                const ScoringParams& params);

}  // namespace crowdserve
