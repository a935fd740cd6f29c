#include "riskmm/scenario_tree.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace riskmm {

namespace {

// Nodes = sum_{k<=N_b} d^k + d^{N_b} (N - N_b); refuse trees that would not
// fit comfortably in memory.
constexpr std::int64_t kMaxNodes = 4'000'000;

std::int64_t expected_node_count(int d, int horizon, int branching) {
  std::int64_t total = 0;
  std::int64_t level = 1;
  for (int k = 0; k <= branching; ++k) {
    total += level;
    if (total > kMaxNodes) return total;
    if (k < branching) {
      level *= d;
      if (level > kMaxNodes) return kMaxNodes + 1;
    }
  }
  total += level * static_cast<std::int64_t>(horizon - branching);
  return total;
}

}  // namespace

ScenarioTree::ScenarioTree(int mode_count, int horizon, int branching_horizon)
    : mode_count_(mode_count), horizon_(horizon), branching_horizon_(branching_horizon) {
  if (mode_count < 1 || horizon < 1 || branching_horizon < 0 || branching_horizon > horizon) {
    throw std::invalid_argument("ScenarioTree: need mode_count >= 1, horizon >= 1, 0 <= branching <= horizon");
  }
  const std::int64_t expected = expected_node_count(mode_count, horizon, branching_horizon);
  if (expected > kMaxNodes) {
    throw std::invalid_argument("ScenarioTree: " + std::to_string(expected) + " nodes exceeds the supported size");
  }

  nodes_.reserve(static_cast<std::size_t>(expected));
  stage_offsets_.assign(static_cast<std::size_t>(horizon) + 2, 0);

  TreeNode root;
  root.id = 0;
  nodes_.push_back(root);

  int stage_begin = 0;  // id range [stage_begin, stage_end) holds the current stage
  int stage_end = 1;
  for (int k = 0; k < horizon_; ++k) {
    stage_offsets_[static_cast<std::size_t>(k) + 1] = stage_end;
    for (int id = stage_begin; id < stage_end; ++id) {
      const bool branch = k < branching_horizon_;
      const int child_count = branch ? mode_count_ : 1;
      for (int c = 0; c < child_count; ++c) {
        TreeNode child;
        child.id = static_cast<int>(nodes_.size());
        child.stage = k + 1;
        child.parent = id;
        // Past the branching horizon the incoming mode is frozen; a root
        // chain without any branching pins mode 0.
        child.incoming_mode = branch ? c : std::max(nodes_[static_cast<std::size_t>(id)].incoming_mode, 0);
        nodes_[static_cast<std::size_t>(id)].children.push_back(child.id);
        nodes_.push_back(std::move(child));
      }
    }
    stage_begin = stage_end;
    stage_end = static_cast<int>(nodes_.size());
  }
  stage_offsets_[static_cast<std::size_t>(horizon_) + 1] = stage_end;

  scenarios_.reserve(static_cast<std::size_t>(stage_end - stage_begin));
  for (int leaf = stage_begin; leaf < stage_end; ++leaf) {
    Scenario s;
    s.leaf = leaf;
    s.ancestors.resize(static_cast<std::size_t>(horizon_));
    s.modes.resize(static_cast<std::size_t>(horizon_));
    int cur = leaf;
    for (int k = horizon_ - 1; k >= 0; --k) {
      s.modes[static_cast<std::size_t>(k)] = nodes_[static_cast<std::size_t>(cur)].incoming_mode;
      cur = nodes_[static_cast<std::size_t>(cur)].parent;
      s.ancestors[static_cast<std::size_t>(k)] = cur;
    }
    scenarios_.push_back(std::move(s));
  }
}

const TreeNode& ScenarioTree::node(int id) const {
  if (id < 0 || id >= node_count()) throw std::out_of_range("ScenarioTree: node id out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

std::vector<int> ScenarioTree::stage_nodes(int stage) const {
  if (stage < 0 || stage > horizon_) throw std::out_of_range("ScenarioTree: stage out of range");
  std::vector<int> ids;
  const int begin = stage_offsets_[static_cast<std::size_t>(stage)];
  const int end = stage_offsets_[static_cast<std::size_t>(stage) + 1];
  ids.reserve(static_cast<std::size_t>(end - begin));
  for (int id = begin; id < end; ++id) ids.push_back(id);
  return ids;
}

std::vector<std::pair<int, int>> ScenarioTree::scenario_path(int leaf) const {
  if (!is_leaf(leaf)) throw std::invalid_argument("ScenarioTree: scenario_path needs a leaf node");
  const Scenario& s = scenarios_[static_cast<std::size_t>(scenario_index(leaf))];
  std::vector<std::pair<int, int>> path;
  path.reserve(static_cast<std::size_t>(horizon_) + 1);
  for (int k = 0; k < horizon_; ++k) {
    const int id = s.ancestors[static_cast<std::size_t>(k)];
    path.emplace_back(id, nodes_[static_cast<std::size_t>(id)].incoming_mode);
  }
  path.emplace_back(leaf, nodes_[static_cast<std::size_t>(leaf)].incoming_mode);
  return path;
}

int ScenarioTree::scenario_index(int leaf) const {
  if (!is_leaf(leaf)) throw std::invalid_argument("ScenarioTree: not a leaf node");
  return leaf - first_leaf_id();
}

}  // namespace riskmm
