#pragma once

#include <utility>
#include <vector>

namespace riskmm {

struct TreeNode {
  int id = 0;
  int stage = 0;
  int parent = -1;         // -1 for the root
  int incoming_mode = -1;  // mode on the edge from the parent; -1 for the root
  std::vector<int> children;
};

struct Scenario {
  int leaf = 0;
  std::vector<int> ancestors;  // root .. parent of the leaf, ordered by stage
  std::vector<int> modes;      // incoming modes of ancestors[1..] and the leaf
};

/// Tree of mode realizations over a horizon. Nodes branch into all modes up
/// to the branching horizon; past it each node has a single child that keeps
/// the parent's incoming mode. Node ids are dense and ordered by stage, and
/// children are ordered by mode index, so scenario enumeration is
/// deterministic. Immutable after construction.
class ScenarioTree {
 public:
  /// mode_count >= 1, horizon >= 1, 0 <= branching_horizon <= horizon.
  /// Throws std::invalid_argument otherwise (or if the tree would be huge).
  ScenarioTree(int mode_count, int horizon, int branching_horizon);

  int mode_count() const noexcept { return mode_count_; }
  int horizon() const noexcept { return horizon_; }
  int branching_horizon() const noexcept { return branching_horizon_; }

  int node_count() const noexcept { return static_cast<int>(nodes_.size()); }
  int leaf_count() const noexcept { return static_cast<int>(scenarios_.size()); }
  int non_leaf_count() const noexcept { return node_count() - leaf_count(); }

  const TreeNode& node(int id) const;
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const std::vector<Scenario>& scenarios() const noexcept { return scenarios_; }

  /// All node ids at the given stage, in id order. Throws std::out_of_range
  /// for stages outside [0, horizon].
  std::vector<int> stage_nodes(int stage) const;

  /// Root-to-leaf path as (node id, incoming mode) pairs; the root entry has
  /// mode -1. Throws std::invalid_argument if `leaf` is not a leaf.
  std::vector<std::pair<int, int>> scenario_path(int leaf) const;

  bool is_leaf(int id) const { return node(id).stage == horizon_; }
  /// True when the node branches into every mode (stage < branching horizon).
  bool branches(int id) const { return node(id).stage < branching_horizon_; }

  /// Index into scenarios() for a leaf id.
  int scenario_index(int leaf) const;
  int first_leaf_id() const noexcept { return stage_offsets_[horizon_]; }

 private:
  int mode_count_ = 0;
  int horizon_ = 0;
  int branching_horizon_ = 0;
  std::vector<TreeNode> nodes_;
  std::vector<Scenario> scenarios_;
  std::vector<int> stage_offsets_;  // size horizon+2; stage k spans [k], [k+1)
};

}  // namespace riskmm
