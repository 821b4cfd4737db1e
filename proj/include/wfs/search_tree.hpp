#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wfs/evaluation.hpp"
#include "wfs/ids.hpp"
#include "wfs/workflow.hpp"

namespace wfs {

/// What one refinement did and how it scored, propagated to every ancestor
/// of the refined node.
struct Experience {
  ModificationRecord modification;
  double reward = kScoreMin;
  std::string feedback;
  NodeId source_node;
  int iteration = 1;

  void validate() const;
  friend bool operator==(const Experience&, const Experience&) = default;
};

struct Node {
  NodeId id;
  Workflow workflow;
  /// Exact reward of this workflow; never an average over descendants.
  std::optional<double> reward;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  std::vector<Experience> experiences;
  std::optional<EvaluationResult> eval;
  Timestamp created_at = 0;
  /// Search iteration that created the node (0 for the root).
  int iteration = 0;

  bool evaluated() const { return reward.has_value(); }
  friend bool operator==(const Node&, const Node&) = default;
};

/// Append-only search tree. Node ids are dense and assigned in creation
/// order starting at 0 for the root.
class SearchTree {
 public:
  /// Single evaluated root; iteration_count starts at 0.
  static SearchTree create_root(Workflow workflow, double reward,
                                std::optional<EvaluationResult> eval = std::nullopt,
                                Timestamp created_at = now_ms());

  /// New unevaluated node under `parent`. The modification is recorded on
  /// the child's workflow as the edge annotation.
  NodeId add_child(NodeId parent, Workflow workflow, const ModificationRecord& modification,
                   int iteration = 0, Timestamp created_at = now_ms());

  /// Sets the reward once; a second call throws StateError.
  void set_reward(NodeId id, double reward, std::optional<EvaluationResult> eval = std::nullopt);

  void append_experience(NodeId id, Experience experience);

  /// Up to k evaluated nodes, reward descending, then creation time, then id.
  std::vector<NodeId> top_k_evaluated(std::size_t k) const;

  /// Node -> root order, excluding the node itself.
  std::vector<NodeId> ancestors(NodeId id) const;

  /// Highest reward with the same tie-break as top_k_evaluated.
  std::optional<NodeId> best() const;

  const Node& node(NodeId id) const;
  bool contains(NodeId id) const { return id.value < nodes_.size(); }
  NodeId root() const { return NodeId{0}; }
  NodeId next_id() const { return NodeId{nodes_.size()}; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t edge_count() const;
  const std::vector<Node>& nodes() const { return nodes_; }

  int iteration_count() const { return iteration_count_; }
  void set_iteration_count(int n);

  /// Structural check: one root, parents exist, parent/child lists agree,
  /// no cycles, node count == edges + 1. Throws ValidationError.
  void check_invariants() const;

  friend bool operator==(const SearchTree&, const SearchTree&) = default;
  friend void to_json(json& j, const SearchTree& t);
  friend void from_json(const json& j, SearchTree& t);

 private:
  Node& mutable_node(NodeId id);

  std::vector<Node> nodes_;
  int iteration_count_ = 0;
};

void to_json(json& j, const Experience& e);
void from_json(const json& j, Experience& e);
void to_json(json& j, const Node& n);
void from_json(const json& j, Node& n);

}  // namespace wfs
