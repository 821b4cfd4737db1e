#include "wfs/search_tree.hpp"

#include <algorithm>

#include "wfs/errors.hpp"

namespace wfs {

void Experience::validate() const {
  modification.validate();
  if (!in_score_range(reward)) throw ValidationError("experience reward outside [1,5]");
  if (iteration < 1) throw ValidationError("experience iteration must be >= 1");
}

SearchTree SearchTree::create_root(Workflow workflow, double reward,
                                   std::optional<EvaluationResult> eval, Timestamp created_at) {
  if (!in_score_range(reward)) throw ValidationError("root reward outside [1,5]");
  SearchTree tree;
  Node root;
  root.id = NodeId{0};
  root.workflow = std::move(workflow);
  root.reward = reward;
  root.eval = std::move(eval);
  root.created_at = created_at;
  tree.nodes_.push_back(std::move(root));
  return tree;
}

NodeId SearchTree::add_child(NodeId parent, Workflow workflow,
                             const ModificationRecord& modification, int iteration,
                             Timestamp created_at) {
  if (!contains(parent)) throw NotFoundError("unknown parent node " + parent.str());
  modification.validate();
  Node child;
  child.id = next_id();
  workflow.parent_modification = modification;
  child.workflow = std::move(workflow);
  child.parent = parent;
  child.created_at = created_at;
  child.iteration = iteration;
  nodes_[parent.value].children.push_back(child.id);
  nodes_.push_back(std::move(child));
  return nodes_.back().id;
}

void SearchTree::set_reward(NodeId id, double reward, std::optional<EvaluationResult> eval) {
  Node& n = mutable_node(id);
  if (n.reward) throw StateError("reward of node " + id.str() + " is already set");
  if (!in_score_range(reward)) throw ValidationError("reward outside [1,5]");
  n.reward = reward;
  n.eval = std::move(eval);
}

void SearchTree::append_experience(NodeId id, Experience experience) {
  Node& n = mutable_node(id);
  experience.validate();
  if (!contains(experience.source_node))
    throw NotFoundError("experience source node " + experience.source_node.str() +
                        " not in tree");
  n.experiences.push_back(std::move(experience));
}

namespace {

bool ranks_before(const Node& a, const Node& b) {
  if (*a.reward != *b.reward) return *a.reward > *b.reward;
  if (a.created_at != b.created_at) return a.created_at < b.created_at;
  return a.id < b.id;
}

}  // namespace

std::vector<NodeId> SearchTree::top_k_evaluated(std::size_t k) const {
  if (k == 0) throw ValidationError("top_k requires k >= 1");
  std::vector<const Node*> evaluated;
  for (const auto& n : nodes_)
    if (n.evaluated()) evaluated.push_back(&n);
  const std::size_t take = std::min(k, evaluated.size());
  std::partial_sort(evaluated.begin(), evaluated.begin() + static_cast<std::ptrdiff_t>(take),
                    evaluated.end(),
                    [](const Node* a, const Node* b) { return ranks_before(*a, *b); });
  std::vector<NodeId> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(evaluated[i]->id);
  return out;
}

std::optional<NodeId> SearchTree::best() const {
  if (nodes_.empty()) return std::nullopt;
  auto top = top_k_evaluated(1);
  if (top.empty()) return std::nullopt;
  return top.front();
}

std::vector<NodeId> SearchTree::ancestors(NodeId id) const {
  std::vector<NodeId> out;
  std::optional<NodeId> cur = node(id).parent;
  while (cur) {
    if (out.size() > nodes_.size()) throw ValidationError("cycle detected in search tree");
    out.push_back(*cur);
    cur = node(*cur).parent;
  }
  return out;
}

const Node& SearchTree::node(NodeId id) const {
  if (!contains(id)) throw NotFoundError("unknown node " + id.str());
  return nodes_[id.value];
}

Node& SearchTree::mutable_node(NodeId id) {
  if (!contains(id)) throw NotFoundError("unknown node " + id.str());
  return nodes_[id.value];
}

std::size_t SearchTree::edge_count() const {
  std::size_t edges = 0;
  for (const auto& n : nodes_) edges += n.children.size();
  return edges;
}

void SearchTree::set_iteration_count(int n) {
  if (n < 0) throw ValidationError("iteration count must be >= 0");
  iteration_count_ = n;
}

void SearchTree::check_invariants() const {
  if (nodes_.empty()) throw ValidationError("tree has no root");
  std::size_t roots = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.id.value != i) throw ValidationError("node ids are not dense");
    if (!n.parent) {
      ++roots;
      continue;
    }
    if (n.parent->value >= i)
      throw ValidationError("node " + n.id.str() + " has a parent created after it");
    const auto& siblings = nodes_[n.parent->value].children;
    if (std::count(siblings.begin(), siblings.end(), n.id) != 1)
      throw ValidationError("parent of node " + n.id.str() + " does not list it exactly once");
  }
  if (roots != 1) throw ValidationError("tree must have exactly one root");
  if (nodes_.front().parent) throw ValidationError("node 0 must be the root");
  if (size() != edge_count() + 1) throw ValidationError("node count != edges + 1");
}

void to_json(json& j, const Experience& e) {
  j = {{"modification", e.modification},
       {"reward", e.reward},
       {"feedback", e.feedback},
       {"source_node", e.source_node},
       {"iteration", e.iteration}};
}

void from_json(const json& j, Experience& e) {
  e.modification = j.at("modification").get<ModificationRecord>();
  e.reward = j.at("reward").get<double>();
  e.feedback = j.at("feedback").get<std::string>();
  e.source_node = j.at("source_node").get<NodeId>();
  e.iteration = j.at("iteration").get<int>();
}

void to_json(json& j, const Node& n) {
  j = {{"id", n.id},
       {"workflow", n.workflow},
       {"reward", n.reward ? json(*n.reward) : json()},
       {"parent", n.parent ? json(*n.parent) : json()},
       {"children", n.children},
       {"experiences", n.experiences},
       {"eval", n.eval ? json(*n.eval) : json()},
       {"created_at", n.created_at},
       {"iteration", n.iteration}};
}

void from_json(const json& j, Node& n) {
  n.id = j.at("id").get<NodeId>();
  n.workflow = j.at("workflow").get<Workflow>();
  n.reward = j.at("reward").is_null() ? std::nullopt
                                      : std::optional<double>(j["reward"].get<double>());
  n.parent = j.at("parent").is_null() ? std::nullopt
                                      : std::optional<NodeId>(j["parent"].get<NodeId>());
  n.children = j.at("children").get<std::vector<NodeId>>();
  n.experiences = j.at("experiences").get<std::vector<Experience>>();
  n.eval = j.at("eval").is_null() ? std::nullopt
                                  : std::optional<EvaluationResult>(j["eval"].get<EvaluationResult>());
  n.created_at = j.value("created_at", Timestamp{0});
  n.iteration = j.value("iteration", 0);
}

void to_json(json& j, const SearchTree& t) {
  j = {{"root", t.root()}, {"iteration_count", t.iteration_count_}, {"nodes", t.nodes_}};
}

void from_json(const json& j, SearchTree& t) {
  t.nodes_ = j.at("nodes").get<std::vector<Node>>();
  t.iteration_count_ = j.at("iteration_count").get<int>();
  t.check_invariants();
}

}  // namespace wfs
