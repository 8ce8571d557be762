#include "crowdserve/topk.hpp"

#include <algorithm>
#include <cassert>

namespace crowdserve {

namespace {

struct HeapSlot {
  double total = 0.0;
  const SpatialTextualObject* obj = nullptr;
  ScoreBreakdown score;
};

// true when a outranks b.
bool slot_better(const HeapSlot& a, const HeapSlot& b) {
  if (a.total != b.total) return a.total > b.total;
  return a.obj->id < b.obj->id;
}

// Worst slot on top so it can be evicted.
struct WorstOnTop {
  bool operator()(const HeapSlot& a, const HeapSlot& b) const { return slot_better(a, b); }
};

using ResultHeap = std::priority_queue<HeapSlot, std::vector<HeapSlot>, WorstOnTop>;

bool beats_worst(const ResultHeap& heap, double total, const std::string& id) {
  const HeapSlot& worst = heap.top();
  if (total != worst.total) return total > worst.total;
  return id < worst.obj->id;
}

std::vector<RankedCandidate> assemble(ResultHeap heap) {
  std::vector<HeapSlot> slots;
  slots.reserve(heap.size());
  while (!heap.empty()) {
    slots.push_back(heap.top());
    heap.pop();
  }
  std::sort(slots.begin(), slots.end(), slot_better);
  std::vector<RankedCandidate> out;
  out.reserve(slots.size());
  for (const HeapSlot& slot : slots) {
    out.push_back(RankedCandidate{slot.obj->id, slot.score, static_cast<int>(out.size()) + 1});
  }
  return out;
}

struct FrontierItem {
  double bound = 0.0;
  const BigTreeNode* node = nullptr;
};
struct FrontierLess {
  bool operator()(const FrontierItem& a, const FrontierItem& b) const {
    return a.bound < b.bound;
  }
};

}  // namespace

bool ranks_before(double total_a, const std::string& id_a, double total_b,
                  const std::string& id_b) {
  if (total_a != total_b) return total_a > total_b;
  return id_a < id_b;
}

Result<std::vector<RankedCandidate>> top_k(const BigTree& index, const ServiceQuery& query,
                                           const ScoringParams& params, QueryStats* stats) {
  Status valid = validate_query(query);
  if (!valid.ok()) return valid;

  QueryStats local;
  const std::size_t want = static_cast<std::size_t>(query.k);
  ResultHeap heap;
  const bool textual_only = params.alpha == 0.0;

  std::priority_queue<FrontierItem, std::vector<FrontierItem>, FrontierLess> frontier;
  if (index.root().count() > 0) {
    frontier.push({node_upper_bound(index.root(), query, params), &index.root()});
  }

  // theta is heap.top().total once the heap is full. Pruning always uses a
  // strict comparison: an equal-bound node can still hold an equal-total,
  // lower-id candidate, and ties must come out exactly as the oracle's.
  while (!frontier.empty()) {
    const FrontierItem item = frontier.top();
    frontier.pop();
    if (item.bound == 0.0) break;
    if (heap.size() == want && item.bound < heap.top().total) break;
    local.nodes_visited += 1;

    const BigTreeNode& node = *item.node;
    if (!node.is_leaf()) {
      for (int q = 0; q < 4; ++q) {
        const BigTreeNode* child = node.child(q);
        if (child->count() > 0) {
          frontier.push({node_upper_bound(*child, query, params), child});
        }
      }
      continue;
    }

    if (textual_only) {
      // alpha = 0: only keyword holders can score, so walk the query
      // keywords' posting lists. Spatial enters the total with weight 0;
      // the true spatial component is filled in for winners at the end.
      for (std::size_t qi = 0; qi < query.keywords.size(); ++qi) {
        const auto* list = node.postings(query.keywords[qi]);
        if (list == nullptr) continue;
        for (const PostingEntry& entry : *list) {
          local.postings_scanned += 1;
          const double s_t = recency_score(query.issued_at, entry.positioned_at(),
                                           params.lambda_base, params.recency_unit_s);
          // Remaining entries in this list score at most full coverage at s_t.
          if (s_t == 0.0) break;
          if (heap.size() == want && s_t < heap.top().total) break;

          // Score each object once: when scanning its first query keyword.
          bool first_holder = true;
          for (std::size_t qj = 0; qj < qi; ++qj) {
            if (entry.obj->has_skill(query.keywords[qj])) {
              first_holder = false;
              break;
            }
          }
          if (!first_holder) continue;

          ScoreBreakdown s;
          s.spatial = 0.0;  // placeholder, weight is 0
          s.textual = textual_score(query.keywords, entry.obj->skills);
          s.recency = s_t;
          s.total = combine(s.spatial, s.textual, s.recency, params.alpha);
          if (s.total == 0.0) continue;
          if (heap.size() < want) {
            heap.push({s.total, entry.obj, s});
          } else if (beats_worst(heap, s.total, entry.obj->id)) {
            heap.pop();
            heap.push({s.total, entry.obj, s});
          }
        }
      }
      continue;
    }

    // alpha > 0: every object in the cell can score through distance alone,
    // so walk the cell's full recency list. The per-entry stop bound pairs
    // the cell's best-case spatial and coverage with the entry's own s_t.
    const double s_l_max = spatial_score_from_distance(
        min_distance_m(query.location(), node.bounds()), params.max_distance_m);
    std::size_t present = 0;
    for (const auto& kw : query.keywords) {
      auto it = node.keyword_summary().find(kw);
      if (it != node.keyword_summary().end() && it->second.count > 0) ++present;
    }
    const double s_psi_max =
        static_cast<double>(present) / static_cast<double>(query.keywords.size());

    for (const PostingEntry& entry : node.recency_list()) {
      local.postings_scanned += 1;
      const double s_t = recency_score(query.issued_at, entry.positioned_at(),
                                       params.lambda_base, params.recency_unit_s);
      const double list_bound = combine(s_l_max, s_psi_max, s_t, params.alpha);
      if (list_bound == 0.0) break;
      if (heap.size() == want && list_bound < heap.top().total) break;

      const double s_psi = textual_score(query.keywords, entry.obj->skills);
      const double optimistic = combine(s_l_max, s_psi, s_t, params.alpha);
      if (optimistic == 0.0) continue;
      if (heap.size() == want && !beats_worst(heap, optimistic, entry.obj->id)) continue;

      local.distance_computations += 1;
      ScoreBreakdown s;
      s.spatial = spatial_score(query.location(), entry.position(), params.max_distance_m);
      s.textual = s_psi;
      s.recency = s_t;
      s.total = combine(s.spatial, s.textual, s.recency, params.alpha);
      if (s.total == 0.0) continue;
      if (heap.size() < want) {
        heap.push({s.total, entry.obj, s});
      } else if (beats_worst(heap, s.total, entry.obj->id)) {
        heap.pop();
        heap.push({s.total, entry.obj, s});
      }
    }
  }

  std::vector<RankedCandidate> out = assemble(std::move(heap));
  if (textual_only) {
    for (RankedCandidate& cand : out) {
      local.distance_computations += 1;
      cand.score.spatial = spatial_score(query.location(), index.find(cand.object_id)->position(),
                                         params.max_distance_m);
    }
  }
  if (stats != nullptr) *stats = local;
  return out;
}

Result<std::vector<RankedCandidate>> top_k_oracle(
    std::span<const SpatialTextualObject* const> objects, const ServiceQuery& query,
    const ScoringParams& params, QueryStats* stats) {
  Status valid = validate_query(query);
  if (!valid.ok()) return valid;

  QueryStats local;
  std::vector<HeapSlot> slots;
  slots.reserve(objects.size());
  for (const SpatialTextualObject* obj : objects) {
    local.postings_scanned += 1;
    local.distance_computations += 1;
    const ScoreBreakdown s = combined_score(query, *obj, params);
    if (s.total > 0.0) slots.push_back({s.total, obj, s});
  }
  std::sort(slots.begin(), slots.end(), slot_better);
  if (slots.size() > static_cast<std::size_t>(query.k)) {
    slots.resize(static_cast<std::size_t>(query.k));
  }
  std::vector<RankedCandidate> out;
  out.reserve(slots.size());
  for (const HeapSlot& slot : slots) {
    out.push_back(RankedCandidate{slot.obj->id, slot.score, static_cast<int>(out.size()) + 1});
  }
  if (stats != nullptr) *stats = local;
  return out;
}

Result<QueryCursor> open_cursor(const BigTree& index, const ServiceQuery& query,
                                const ScoringParams& params) {
  Status valid = validate_query(query);
  if (!valid.ok()) return valid;

  QueryCursor cursor;
  cursor.index_ = &index;
  cursor.epoch_ = index.mutation_epoch();
  cursor.query_ = query;
  cursor.params_ = params;
  cursor.buffer_target_ = std::max<std::size_t>(2 * static_cast<std::size_t>(query.k), 16);
  if (index.root().count() > 0) {
    QueryCursor::Entry e;
    e.key = node_upper_bound(index.root(), query, params);
    e.tier = 0;
    e.seq = cursor.seq_counter_++;
    e.node = &index.root();
    cursor.frontier_.push(e);
  }
  return cursor;
}

void QueryCursor::refill() {
  while (buffer_.size() < buffer_target_ && !frontier_.empty()) {
    const Entry top = frontier_.top();
    if (top.key == 0.0) {
      // Nothing left can score: drop the rest.
      frontier_ = {};
      break;
    }
    frontier_.pop();

    if (top.tier == 0) {
      stats_.nodes_visited += 1;
      const BigTreeNode& node = *top.node;
      if (!node.is_leaf()) {
        for (int q = 0; q < 4; ++q) {
          const BigTreeNode* child = node.child(q);
          if (child->count() > 0) {
            Entry e;
            e.key = node_upper_bound(*child, query_, params_);
            e.tier = 0;
            e.seq = seq_counter_++;
            e.node = child;
            frontier_.push(e);
          }
        }
        continue;
      }
      const double s_l_max = spatial_score_from_distance(
          min_distance_m(query_.location(), node.bounds()), params_.max_distance_m);
      for (const PostingEntry& entry : node.recency_list()) {
        stats_.postings_scanned += 1;
        const double s_psi = textual_score(query_.keywords, entry.obj->skills);
        const double s_t = recency_score(query_.issued_at, entry.positioned_at(),
                                         params_.lambda_base, params_.recency_unit_s);
        if (params_.alpha == 0.0) {
          Entry e;
          e.tier = 2;
          e.seq = seq_counter_++;
          e.obj = entry.obj;
          e.score.spatial = 0.0;  // filled at emission
          e.score.textual = s_psi;
          e.score.recency = s_t;
          e.score.total = combine(e.score.spatial, s_psi, s_t, params_.alpha);
          e.key = e.score.total;
          if (e.key > 0.0) frontier_.push(e);
        } else {
          Entry e;
          e.tier = 1;
          e.seq = seq_counter_++;
          e.obj = entry.obj;
          e.score.textual = s_psi;
          e.score.recency = s_t;
          e.key = combine(s_l_max, s_psi, s_t, params_.alpha);
          if (e.key > 0.0) frontier_.push(e);
        }
      }
      continue;
    }

    if (top.tier == 1) {
      stats_.distance_computations += 1;
      Entry e = top;
      e.tier = 2;
      e.score.spatial =
          spatial_score(query_.location(), e.obj->position(), params_.max_distance_m);
      e.score.total = combine(e.score.spatial, e.score.textual, e.score.recency, params_.alpha);
      e.key = e.score.total;
      if (e.key > 0.0) frontier_.push(e);
      continue;
    }

    // Refined candidate on top: nothing left can outrank it.
    RankedCandidate cand;
    cand.object_id = top.obj->id;
    cand.score = top.score;
    if (params_.alpha == 0.0) {
      stats_.distance_computations += 1;
      cand.score.spatial =
          spatial_score(query_.location(), top.obj->position(), params_.max_distance_m);
    }
    cand.rank = ++emitted_;
    buffer_.push_back(std::move(cand));
  }
}

Result<RankedCandidate> QueryCursor::next() {
  if (epoch_ != index_->mutation_epoch()) {
    return Result<RankedCandidate>::fail(Errc::CursorInvalidated,
                                         "index changed under this cursor");
  }
  if (buffer_.empty()) refill();
  if (buffer_.empty()) {
    return Result<RankedCandidate>::fail(Errc::Exhausted, "no positive-score candidate left");
  }
  RankedCandidate out = std::move(buffer_.front());
  buffer_.pop_front();
  return out;
}

}  // namespace crowdserve
