#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wfs/search_engine.hpp"

namespace wfs {

enum class SessionStatus { AwaitingFeedback, Revising, Approved };

std::string to_string(SessionStatus s);
SessionStatus parse_session_status(const std::string& s);

struct FeedbackSubmission {
  static constexpr std::size_t kMaxLength = 2000;

  int round = 1;
  std::string text;
  Timestamp submitted_at = 0;
};

struct HitlSession {
  static constexpr int kMaxRounds = 3;

  std::string id;
  std::string task;
  int round = 1;
  Workflow current_workflow;
  std::vector<Sample> current_samples;
  SessionStatus status = SessionStatus::AwaitingFeedback;
  std::vector<FeedbackSubmission> feedback;
  std::optional<NodeId> root;

  int remaining_rounds() const { return kMaxRounds - round; }
};

void to_json(json& j, const FeedbackSubmission& f);
void from_json(const json& j, FeedbackSubmission& f);
void to_json(json& j, const HitlSession& s);
void from_json(const json& j, HitlSession& s);

/// Human-in-the-loop initialization for one run. The session is written to
/// session.json after every transition.
class HitlController {
 public:
  explicit HitlController(SearchEngine& engine);

  /// Generates the initial workflow and a sample batch. In auto mode the
  /// session is approved on the spot.
  const HitlSession& start();

  /// Revises the workflow from the feedback and re-samples. LimitError once
  /// round 3 is reached; on failure the prior state is kept.
  const HitlSession& submit_feedback(const std::string& text);

  /// Evaluates the current workflow and installs it as the root. Idempotent.
  NodeId approve();

  const HitlSession& session() const { return session_; }

  /// Re-attach to a session persisted by an earlier process.
  void restore(HitlSession session) {
    session_ = std::move(session);
    started_ = true;
  }

 private:
  std::vector<Sample> sample_batch(const Workflow& wf);
  Workflow request_workflow(const std::string& template_name,
                            const std::map<std::string, std::string>& vars, std::uint64_t nonce);
  void persist() const;

  SearchEngine& engine_;
  HitlSession session_;
  bool started_ = false;
};

}  // namespace wfs
