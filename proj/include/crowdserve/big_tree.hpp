#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "crowdserve/errors.hpp"
#include "crowdserve/geo.hpp"
#include "crowdserve/model.hpp"
#include "crowdserve/scoring.hpp"

namespace crowdserve {

struct KeywordSummary {
  std::uint32_t count = 0;
  std::int64_t max_positioned_at = 0;

  bool operator==(const KeywordSummary&) const = default;
};

// One slot of a leaf list. Points at the registry's stable object record, so
// id, position, and positioned_at are available without a lookup.
struct PostingEntry {
  const SpatialTextualObject* obj = nullptr;

  const std::string& object_id() const { return obj->id; }
  std::int64_t positioned_at() const { return obj->positioned_at; }
  GeoPoint position() const { return obj->position(); }
};

class BigTree;

// Quadtree cell. Internal nodes carry four children plus aggregated
// summaries; leaves additionally carry the object lists: one recency-sorted
// list of everything in the cell and one per-keyword posting list.
class BigTreeNode {
 public:
  const BoundingBox& bounds() const { return bounds_; }
  int depth() const { return depth_; }
  bool is_leaf() const { return leaf_; }
  const BigTreeNode* child(int quadrant) const { return children_[quadrant].get(); }

  std::uint32_t count() const { return count_; }
  std::int64_t max_positioned_at() const { return max_positioned_at_; }
  const std::map<std::string, KeywordSummary>& keyword_summary() const {
    return keyword_summary_;
  }

  // Leaf lists, sorted by (positioned_at descending, object_id ascending).
  const std::vector<PostingEntry>& recency_list() const { return recency_list_; }
  const std::vector<PostingEntry>* postings(const std::string& keyword) const {
    auto it = postings_.find(keyword);
    return it == postings_.end() ? nullptr : &it->second;
  }

 private:
  friend class BigTree;

  BoundingBox bounds_;
  int depth_ = 0;
  BigTreeNode* parent_ = nullptr;
  bool leaf_ = true;
  std::array<std::unique_ptr<BigTreeNode>, 4> children_;

  std::uint32_t count_ = 0;
  std::int64_t max_positioned_at_ = 0;  // undefined while count_ == 0
  std::map<std::string, KeywordSummary> keyword_summary_;

  std::vector<PostingEntry> recency_list_;
  std::map<std::string, std::vector<PostingEntry>> postings_;
};

// Score each object in `node`'s subtree can never exceed: the combination of
// best-case spatial score (min distance to bounds), best-case coverage
// (keywords present anywhere in the subtree), and best-case recency
// (newest subtree timestamp). Requires node.count() > 0.
double node_upper_bound(const BigTreeNode& node, const ServiceQuery& query,
                        const ScoringParams& params);

struct BigTreeConfig {
  BoundingBox world = BoundingBox::world();
  int leaf_capacity = 64;
  int max_depth = 16;
};

// The index: quadtree over a fixed world rectangle with recency-sorted
// posting lists in the leaves. Single writer; reads may run concurrently
// with each other but not with mutations.
class BigTree {
 public:
  explicit BigTree(BigTreeConfig config = {});

  BigTree(const BigTree&) = delete;
  BigTree& operator=(const BigTree&) = delete;

  Status insert(SpatialTextualObject obj);
  Status remove(const std::string& object_id);
  Status update_location(const std::string& object_id, GeoPoint position,
                         std::int64_t positioned_at);
  // Applies a skills delta (composed internally as detach + attach).
  Status update_profile(const std::string& object_id,
                        std::span<const std::string> add_skills,
                        std::span<const std::string> remove_skills);

  // Drops every object whose recency score at `now` falls below `threshold`.
  // Returns the number of objects dropped.
  std::size_t compact(std::int64_t now, const ScoringParams& params, double threshold = 1e-4);

  const SpatialTextualObject* find(const std::string& object_id) const;
  std::size_t size() const { return registry_.size(); }
  const BigTreeNode& root() const { return *root_; }
  const BigTreeConfig& config() const { return config_; }

  // Bumped by every successful mutation; open cursors check it.
  std::uint64_t mutation_epoch() const { return mutation_epoch_; }

  // Every live object, sorted by id. The pointers stay valid until the
  // object is removed.
  std::vector<const SpatialTextualObject*> all_objects() const;

  // Recomputes every node's stored aggregates and list orders from scratch
  // and reports the first discrepancy. For tests.
  Status audit() const;

  // Leaf currently holding the object, nullptr if absent. For tests.
  const BigTreeNode* leaf_of(const std::string& object_id) const;

 private:
  struct ObjectRecord {
    SpatialTextualObject obj;
    BigTreeNode* leaf = nullptr;
  };

  BigTreeNode* descend_target(GeoPoint position) const;
  void attach(ObjectRecord* record);
  void detach(ObjectRecord* record);
  void split(BigTreeNode* node);
  void maybe_collapse(BigTreeNode* from_leaf);
  void collapse(BigTreeNode* node);
  void bump_epoch() { ++mutation_epoch_; }

  BigTreeConfig config_;
  std::unique_ptr<BigTreeNode> root_;
  std::unordered_map<std::string, std::unique_ptr<ObjectRecord>> registry_;
  std::uint64_t mutation_epoch_ = 0;
};

}  // namespace crowdserve
