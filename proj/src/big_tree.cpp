#include "crowdserve/big_tree.hpp"

#include <algorithm>
#include <cassert>
#include <functional>

namespace crowdserve {

namespace {

// Shared list order: positioned_at descending, object_id ascending.
bool entry_less(const PostingEntry& a, const PostingEntry& b) {
  if (a.positioned_at() != b.positioned_at()) return a.positioned_at() > b.positioned_at();
  return a.object_id() < b.object_id();
}

void sorted_insert(std::vector<PostingEntry>& list, PostingEntry entry) {
  auto it = std::lower_bound(list.begin(), list.end(), entry, entry_less);
  list.insert(it, entry);
}

// Requires obj's fields to still match the values it was inserted under.
void list_erase(std::vector<PostingEntry>& list, const SpatialTextualObject* obj) {
  auto it = std::lower_bound(list.begin(), list.end(), PostingEntry{obj}, entry_less);
  assert(it != list.end() && it->obj == obj);
  list.erase(it);
}

std::int64_t recompute_max(const BigTreeNode* node) {
  if (node->is_leaf())
    return node->recency_list().empty() ? 0 : node->recency_list().front().positioned_at();
  std::int64_t best = 0;
  for (int q = 0; q < 4; ++q) {
    const BigTreeNode* child = node->child(q);
    if (child->count() > 0) best = std::max(best, child->max_positioned_at());
  }
  return best;
}

std::int64_t recompute_keyword_max(const BigTreeNode* node, const std::string& skill) {
  if (node->is_leaf()) {
    const auto* list = node->postings(skill);
    assert(list && !list->empty());
    return list->front().positioned_at();
  }
  std::int64_t best = 0;
  for (int q = 0; q < 4; ++q) {
    auto it = node->child(q)->keyword_summary().find(skill);
    if (it != node->child(q)->keyword_summary().end())
      best = std::max(best, it->second.max_positioned_at);
  }
  return best;
}

}  // namespace

double node_upper_bound(const BigTreeNode& node, const ServiceQuery& query,
                        const ScoringParams& params) {
  const double s_l_max = spatial_score_from_distance(
      min_distance_m(query.location(), node.bounds()), params.max_distance_m);
  std::size_t present = 0;
  for (const auto& kw : query.keywords) {
    auto it = node.keyword_summary().find(kw);
    if (it != node.keyword_summary().end() && it->second.count > 0) ++present;
  }
  const double s_psi_max =
      query.keywords.empty()
          ? 0.0
          : static_cast<double>(present) / static_cast<double>(query.keywords.size());
  const double s_t_max = recency_score(query.issued_at, node.max_positioned_at(),
                                       params.lambda_base, params.recency_unit_s);
  return combine(s_l_max, s_psi_max, s_t_max, params.alpha);
}

BigTree::BigTree(BigTreeConfig config) : config_(config) {
  assert(config_.world.valid());
  assert(config_.leaf_capacity >= 1 && config_.max_depth >= 0);
  root_ = std::make_unique<BigTreeNode>();
  root_->bounds_ = config_.world;
}

BigTreeNode* BigTree::descend_target(GeoPoint position) const {
  BigTreeNode* node = root_.get();
  while (!node->leaf_) node = node->children_[node->bounds_.quadrant_of(position)].get();
  return node;
}

void BigTree::attach(ObjectRecord* record) {
  BigTreeNode* leaf = descend_target(record->obj.position());
  record->leaf = leaf;
  const PostingEntry entry{&record->obj};
  sorted_insert(leaf->recency_list_, entry);
  for (const auto& skill : record->obj.skills) sorted_insert(leaf->postings_[skill], entry);

  const std::int64_t t = record->obj.positioned_at;
  for (BigTreeNode* n = leaf; n != nullptr; n = n->parent_) {
    if (n->count_ == 0 || t > n->max_positioned_at_) n->max_positioned_at_ = t;
    n->count_ += 1;
    for (const auto& skill : record->obj.skills) {
      KeywordSummary& s = n->keyword_summary_[skill];
      if (s.count == 0 || t > s.max_positioned_at) s.max_positioned_at = t;
      s.count += 1;
    }
  }

  if (leaf->recency_list_.size() > static_cast<std::size_t>(config_.leaf_capacity) &&
      leaf->depth_ < config_.max_depth) {
    split(leaf);
  }
}

void BigTree::split(BigTreeNode* node) {
  node->leaf_ = false;
  for (int q = 0; q < 4; ++q) {
    auto child = std::make_unique<BigTreeNode>();
    child->bounds_ = node->bounds_.quadrant(q);
    child->depth_ = node->depth_ + 1;
    child->parent_ = node;
    node->children_[q] = std::move(child);
  }

  std::vector<PostingEntry> entries = std::move(node->recency_list_);
  node->recency_list_.clear();
  node->postings_.clear();

  // Entries arrive in list order, so plain appends keep every child sorted.
  for (const PostingEntry& e : entries) {
    BigTreeNode* child = node->children_[node->bounds_.quadrant_of(e.position())].get();
    child->recency_list_.push_back(e);
    const std::int64_t t = e.positioned_at();
    if (child->count_ == 0 || t > child->max_positioned_at_) child->max_positioned_at_ = t;
    child->count_ += 1;
    for (const auto& skill : e.obj->skills) {
      child->postings_[skill].push_back(e);
      KeywordSummary& s = child->keyword_summary_[skill];
      if (s.count == 0 || t > s.max_positioned_at) s.max_positioned_at = t;
      s.count += 1;
    }
    registry_.find(e.object_id())->second->leaf = child;
  }

  for (int q = 0; q < 4; ++q) {
    BigTreeNode* child = node->children_[q].get();
    if (child->recency_list_.size() > static_cast<std::size_t>(config_.leaf_capacity) &&
        child->depth_ < config_.max_depth) {
      split(child);
    }
  }
}

// Must run before record->obj is mutated: list positions are found by key.
void BigTree::detach(ObjectRecord* record) {
  BigTreeNode* leaf = record->leaf;
  const SpatialTextualObject& obj = record->obj;

  list_erase(leaf->recency_list_, &obj);
  for (const auto& skill : obj.skills) {
    auto it = leaf->postings_.find(skill);
    list_erase(it->second, &obj);
    if (it->second.empty()) leaf->postings_.erase(it);
  }

  for (BigTreeNode* n = leaf; n != nullptr; n = n->parent_) {
    n->count_ -= 1;
    for (const auto& skill : obj.skills) {
      auto it = n->keyword_summary_.find(skill);
      it->second.count -= 1;
      if (it->second.count == 0) {
        n->keyword_summary_.erase(it);
      } else if (it->second.max_positioned_at == obj.positioned_at) {
        it->second.max_positioned_at = recompute_keyword_max(n, skill);
      }
    }
    if (n->count_ > 0 && n->max_positioned_at_ == obj.positioned_at) {
      n->max_positioned_at_ = recompute_max(n);
    }
  }
  record->leaf = nullptr;
}

void BigTree::maybe_collapse(BigTreeNode* from_leaf) {
  BigTreeNode* best = nullptr;
  for (BigTreeNode* n = from_leaf->parent_; n != nullptr; n = n->parent_) {
    if (n->count_ <= static_cast<std::uint32_t>(config_.leaf_capacity / 2)) best = n;
  }
  if (best != nullptr) collapse(best);
}

void BigTree::collapse(BigTreeNode* node) {
  if (node->leaf_) return;

  std::vector<PostingEntry> gathered;
  gathered.reserve(node->count_);
  std::function<void(BigTreeNode*)> gather = [&](BigTreeNode* n) {
    if (n->leaf_) {
      gathered.insert(gathered.end(), n->recency_list_.begin(), n->recency_list_.end());
      return;
    }
    for (int q = 0; q < 4; ++q) gather(n->children_[q].get());
  };
  gather(node);
  std::sort(gathered.begin(), gathered.end(), entry_less);

  node->leaf_ = true;
  for (auto& child : node->children_) child.reset();
  node->recency_list_ = std::move(gathered);
  node->postings_.clear();
  for (const PostingEntry& e : node->recency_list_) {
    for (const auto& skill : e.obj->skills) node->postings_[skill].push_back(e);
    registry_.find(e.object_id())->second->leaf = node;
  }
  // count, max_positioned_at, keyword_summary already describe this set.
}

Status BigTree::insert(SpatialTextualObject obj) {
  obj.skills = canonicalize_tokens(obj.skills);
  if (obj.skills.empty())
    return Status::fail(Errc::EmptySkills, "object " + obj.id + " has no skills");
  if (!valid_coordinates(obj.lat, obj.lon) || !config_.world.contains(obj.position()))
    return Status::fail(Errc::OutOfRangeCoord, "object " + obj.id + " outside the world box");
  if (obj.positioned_at < 0)
    return Status::fail(Errc::BadTimestamp, "object " + obj.id + " has a negative timestamp");
  if (registry_.contains(obj.id))
    return Status::fail(Errc::DuplicateId, "object " + obj.id + " already indexed");

  auto record = std::make_unique<ObjectRecord>();
  record->obj = std::move(obj);
  ObjectRecord* raw = record.get();
  registry_.emplace(raw->obj.id, std::move(record));
  attach(raw);
  bump_epoch();
  return {};
}

Status BigTree::remove(const std::string& object_id) {
  auto it = registry_.find(object_id);
  if (it == registry_.end())
    return Status::fail(Errc::NotFound, "object " + object_id + " not indexed");
  ObjectRecord* record = it->second.get();
  BigTreeNode* leaf = record->leaf;
  detach(record);
  registry_.erase(it);
  maybe_collapse(leaf);
  bump_epoch();
  return {};
}

Status BigTree::update_location(const std::string& object_id, GeoPoint position,
                                std::int64_t positioned_at) {
  auto it = registry_.find(object_id);
  if (it == registry_.end())
    return Status::fail(Errc::NotFound, "object " + object_id + " not indexed");
  if (!valid_coordinates(position.lat, position.lon) || !config_.world.contains(position))
    return Status::fail(Errc::OutOfRangeCoord, "position outside the world box");
  ObjectRecord* record = it->second.get();
  if (positioned_at < record->obj.positioned_at)
    return Status::fail(Errc::StaleUpdate,
                        "update for " + object_id + " is older than the indexed position");

  BigTreeNode* target = descend_target(position);
  if (target == record->leaf) {
    // Same cell: re-key the entries in place. Timestamps never regress, so
    // ancestor maxima only need raising.
    BigTreeNode* leaf = record->leaf;
    list_erase(leaf->recency_list_, &record->obj);
    for (const auto& skill : record->obj.skills) list_erase(leaf->postings_[skill], &record->obj);

    record->obj.lat = position.lat;
    record->obj.lon = position.lon;
    record->obj.positioned_at = positioned_at;

    const PostingEntry entry{&record->obj};
    sorted_insert(leaf->recency_list_, entry);
    for (const auto& skill : record->obj.skills) sorted_insert(leaf->postings_[skill], entry);

    for (BigTreeNode* n = leaf; n != nullptr; n = n->parent_) {
      if (positioned_at > n->max_positioned_at_) n->max_positioned_at_ = positioned_at;
      for (const auto& skill : record->obj.skills) {
        KeywordSummary& s = n->keyword_summary_.find(skill)->second;
        if (positioned_at > s.max_positioned_at) s.max_positioned_at = positioned_at;
      }
    }
  } else {
    BigTreeNode* old_leaf = record->leaf;
    detach(record);
    record->obj.lat = position.lat;
    record->obj.lon = position.lon;
    record->obj.positioned_at = positioned_at;
    attach(record);
    maybe_collapse(old_leaf);
  }
  bump_epoch();
  return {};
}

Status BigTree::update_profile(const std::string& object_id,
                               std::span<const std::string> add_skills,
                               std::span<const std::string> remove_skills) {
  auto it = registry_.find(object_id);
  if (it == registry_.end())
    return Status::fail(Errc::NotFound, "object " + object_id + " not indexed");
  ObjectRecord* record = it->second.get();

  const std::vector<std::string> add = canonicalize_tokens(add_skills);
  const std::vector<std::string> remove = canonicalize_tokens(remove_skills);
  std::vector<std::string> merged = record->obj.skills;
  merged.insert(merged.end(), add.begin(), add.end());
  merged = canonicalize_tokens(merged);
  std::vector<std::string> updated;
  std::set_difference(merged.begin(), merged.end(), remove.begin(), remove.end(),
                      std::back_inserter(updated));
  if (updated.empty())
    return Status::fail(Errc::EmptySkills,
                        "profile update would leave " + object_id + " with no skills");
  if (updated == record->obj.skills) return {};

  detach(record);
  record->obj.skills = std::move(updated);
  attach(record);
  bump_epoch();
  return {};
}

std::size_t BigTree::compact(std::int64_t now, const ScoringParams& params, double threshold) {
  std::vector<std::string> victims;
  for (const auto& [id, record] : registry_) {
    const double s_t = recency_score(now, record->obj.positioned_at, params.lambda_base,
                                     params.recency_unit_s);
    if (s_t < threshold) victims.push_back(id);
  }
  std::sort(victims.begin(), victims.end());
  for (const auto& id : victims) {
    Status removed = remove(id);
    assert(removed.ok());
    (void)removed;
  }
  return victims.size();
}

const SpatialTextualObject* BigTree::find(const std::string& object_id) const {
  auto it = registry_.find(object_id);
  return it == registry_.end() ? nullptr : &it->second->obj;
}

std::vector<const SpatialTextualObject*> BigTree::all_objects() const {
  std::vector<const SpatialTextualObject*> out;
  out.reserve(registry_.size());
  for (const auto& [id, record] : registry_) out.push_back(&record->obj);
  std::sort(out.begin(), out.end(),
            [](const SpatialTextualObject* a, const SpatialTextualObject* b) {
              return a->id < b->id;
            });
  return out;
}

const BigTreeNode* BigTree::leaf_of(const std::string& object_id) const {
  auto it = registry_.find(object_id);
  return it == registry_.end() ? nullptr : it->second->leaf;
}

Status BigTree::audit() const {
  std::string problem;
  std::size_t seen_objects = 0;

  std::function<bool(const BigTreeNode*)> walk = [&](const BigTreeNode* node) -> bool {
    const auto fail = [&](std::string msg) {
      problem = std::move(msg);
      return false;
    };

    std::int64_t true_max = 0;
    std::uint32_t true_count = 0;
    std::map<std::string, KeywordSummary> true_summary;

    if (node->is_leaf()) {
      for (int q = 0; q < 4; ++q) {
        if (node->child(q) != nullptr) return fail("leaf with children");
      }
      const auto& list = node->recency_list_;
      for (std::size_t i = 0; i + 1 < list.size(); ++i) {
        if (!entry_less(list[i], list[i + 1])) return fail("recency list out of order");
      }
      if (list.size() > static_cast<std::size_t>(config_.leaf_capacity) &&
          node->depth_ < config_.max_depth) {
        return fail("oversized leaf below max depth");
      }
      std::size_t posting_entries = 0;
      for (const auto& [skill, entries] : node->postings_) {
        if (entries.empty()) return fail("empty posting list kept for " + skill);
        posting_entries += entries.size();
        for (std::size_t i = 0; i + 1 < entries.size(); ++i) {
          if (!entry_less(entries[i], entries[i + 1]))
            return fail("posting list out of order for " + skill);
        }
        for (const auto& entry : entries) {
          if (!entry.obj->has_skill(skill))
            return fail("posting for " + skill + " lists non-holder " + entry.object_id());
        }
      }
      std::size_t expected_posting_entries = 0;
      for (const auto& entry : list) {
        const SpatialTextualObject& obj = *entry.obj;
        expected_posting_entries += obj.skills.size();
        if (!node->bounds_.contains(obj.position()))
          return fail("object " + obj.id + " outside its leaf bounds");
        auto reg = registry_.find(obj.id);
        if (reg == registry_.end() || &reg->second->obj != entry.obj)
          return fail("leaf entry not backed by the registry: " + obj.id);
        if (reg->second->leaf != node)
          return fail("registry leaf pointer mismatch for " + obj.id);
        if (descend_target(obj.position()) != node)
          return fail("object " + obj.id + " is not in its descend-target leaf");
        true_count += 1;
        if (true_count == 1 || obj.positioned_at > true_max) true_max = obj.positioned_at;
        for (const auto& skill : obj.skills) {
          KeywordSummary& s = true_summary[skill];
          if (s.count == 0 || obj.positioned_at > s.max_positioned_at)
            s.max_positioned_at = obj.positioned_at;
          s.count += 1;
        }
      }
      if (posting_entries != expected_posting_entries)
        return fail("posting entry count mismatch");
      seen_objects += list.size();
    } else {
      if (!node->recency_list_.empty() || !node->postings_.empty())
        return fail("internal node holding leaf storage");
      for (int q = 0; q < 4; ++q) {
        const BigTreeNode* child = node->child(q);
        if (child == nullptr) return fail("internal node missing a child");
        if (child->parent_ != node) return fail("child parent pointer mismatch");
        if (child->depth_ != node->depth_ + 1) return fail("child depth mismatch");
        const BoundingBox want = node->bounds_.quadrant(q);
        const BoundingBox& got = child->bounds_;
        if (got.lat_min != want.lat_min || got.lat_max != want.lat_max ||
            got.lon_min != want.lon_min || got.lon_max != want.lon_max)
          return fail("child bounds are not the parent quadrant");
        if (!walk(child)) return false;
        true_count += child->count_;
        if (child->count_ > 0) true_max = std::max(true_max, child->max_positioned_at_);
        for (const auto& [skill, s] : child->keyword_summary_) {
          KeywordSummary& agg = true_summary[skill];
          agg.count += s.count;
          agg.max_positioned_at = std::max(agg.max_positioned_at, s.max_positioned_at);
        }
      }
    }

    if (node->count_ != true_count) return fail("stored count diverges from recount");
    if (true_count > 0 && node->max_positioned_at_ != true_max)
      return fail("stored max_positioned_at diverges from recount");
    if (node->keyword_summary_ != true_summary)
      return fail("stored keyword summary diverges from recount");
    return true;
  };

  if (!walk(root_.get())) return Status::fail(Errc::BadRecord, "audit: " + problem);
  if (seen_objects != registry_.size())
    return Status::fail(Errc::BadRecord, "audit: leaf entries diverge from the registry");
  return {};
}

}  // namespace crowdserve
