#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wfs/json_util.hpp"

namespace wfs {

/// Milliseconds since the Unix epoch.
using Timestamp = std::int64_t;
Timestamp now_ms();

/// One named prompt template. Placeholders are written `{{name}}` and every
/// one of them must appear in `variables`.
struct PromptTemplate {
  std::string text;
  std::vector<std::string> variables;

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

/// Names are unique by construction (map keys).
struct PromptSet {
  std::map<std::string, PromptTemplate> templates;

  void validate() const;
  friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

/// Placeholder names referenced as `{{name}}` in `text`, sorted and unique.
std::vector<std::string> placeholders_in(const std::string& text);

enum class EntryContract { StdinJsonStdoutJsonl };

struct CodeArtifact {
  std::string script;
  std::string interpreter_hint = "python3";
  EntryContract entry_contract = EntryContract::StdinJsonStdoutJsonl;

  friend bool operator==(const CodeArtifact&, const CodeArtifact&) = default;
};

enum class ModificationKind { PromptEdit, CodeEdit, Structural, Mixed };

struct ModificationRecord {
  static constexpr std::size_t kMaxDescription = 500;

  std::string description;
  ModificationKind kind = ModificationKind::Mixed;

  void validate() const;
  friend bool operator==(const ModificationRecord&, const ModificationRecord&) = default;
};

/// The unit under optimization: a prompt set plus an executable script.
struct Workflow {
  std::string id;
  PromptSet prompts;
  CodeArtifact code;
  Timestamp created_at = 0;
  std::optional<ModificationRecord> parent_modification;

  void validate() const;
  /// Digest of prompts + code only; id and timestamps don't participate.
  std::string content_digest() const;
  friend bool operator==(const Workflow&, const Workflow&) = default;
};

std::string to_string(EntryContract c);
std::string to_string(ModificationKind k);
ModificationKind parse_modification_kind(const std::string& s);
EntryContract parse_entry_contract(const std::string& s);

void to_json(json& j, const PromptSet& p);
void from_json(const json& j, PromptSet& p);
void to_json(json& j, const CodeArtifact& c);
void from_json(const json& j, CodeArtifact& c);
void to_json(json& j, const ModificationRecord& m);
void from_json(const json& j, ModificationRecord& m);
void to_json(json& j, const Workflow& w);
void from_json(const json& j, Workflow& w);

/// Writes `workflow.json` (canonical, sorted keys) and `script` into `dir`.
void write_workflow_bundle(const std::filesystem::path& dir, const Workflow& w);
Workflow read_workflow_bundle(const std::filesystem::path& dir);

}  // namespace wfs
