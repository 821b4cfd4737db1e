#include "wfs/prompt_pack.hpp"

#include <fstream>
#include <regex>

#include "default_pack.inc"
#include "wfs/errors.hpp"

namespace wfs {

std::string substitute(const std::string& text, const std::map<std::string, std::string>& vars) {
  static const std::regex re(R"(\{\{\s*([A-Za-z0-9_.\-]+)\s*\}\})");
  std::string out;
  auto last = text.cbegin();
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator();
       ++it) {
    const auto& m = *it;
    out.append(last, m[0].first);
    const auto found = vars.find(m[1].str());
    if (found == vars.end())
      throw ValidationError("no value for placeholder '" + m[1].str() + "'");
    out += found->second;
    last = m[0].second;
  }
  out.append(last, text.cend());
  return out;
}

PromptPack PromptPack::from_json(const json& j) {
  PromptPack pack;
  pack.version_ = j.value("version", std::string("unversioned"));
  const auto& templates = j.at("templates");
  for (auto it = templates.begin(); it != templates.end(); ++it) {
    pack.entries_[it.key()] = {it->value("system", std::string()),
                               it->at("user").get<std::string>()};
  }
  return pack;
}

PromptPack PromptPack::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read prompt pack " + path);
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ValidationError("prompt pack " + path + " is not JSON");
  return from_json(j);
}

const PromptPack& PromptPack::builtin() {
  static const PromptPack pack = from_json(json::parse(kDefaultPromptPack));
  return pack;
}

std::vector<ChatMessage> PromptPack::render(const std::string& name,
                                            const std::map<std::string, std::string>& vars) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw NotFoundError("prompt pack has no template '" + name + "'");
  std::vector<ChatMessage> messages;
  if (!it->second.system.empty()) messages.push_back({"system", substitute(it->second.system, vars)});
  messages.push_back({"user", substitute(it->second.user, vars)});
  return messages;
}

}  // namespace wfs
