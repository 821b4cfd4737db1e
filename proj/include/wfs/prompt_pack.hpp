#pragma once

#include <map>
#include <string>
#include <vector>

#include "wfs/json_util.hpp"
#include "wfs/llm_gateway.hpp"

namespace wfs {

/// Named system/user template pairs used for every LLM exchange the engine
/// makes. Placeholders are `{{name}}`.
class PromptPack {
 public:
  struct Entry {
    std::string system;
    std::string user;
  };

  static PromptPack from_json(const json& j);
  static PromptPack from_file(const std::string& path);
  /// The pack compiled into the binary (prompts/default_pack.json).
  static const PromptPack& builtin();

  /// Substitutes every placeholder; a placeholder without a value is an error.
  std::vector<ChatMessage> render(const std::string& name,
                                  const std::map<std::string, std::string>& vars) const;

  const std::string& version() const { return version_; }
  bool has(const std::string& name) const { return entries_.count(name) > 0; }

 private:
  std::string version_;
  std::map<std::string, Entry> entries_;
};

/// Replace `{{name}}` placeholders in `text`. Throws ValidationError naming
/// the first placeholder with no value.
std::string substitute(const std::string& text, const std::map<std::string, std::string>& vars);

}  // namespace wfs
