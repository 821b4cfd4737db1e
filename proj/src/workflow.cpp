#include "wfs/workflow.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "wfs/errors.hpp"

namespace wfs {

Timestamp now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::vector<std::string> placeholders_in(const std::string& text) {
  static const std::regex re(R"(\{\{\s*([A-Za-z0-9_.\-]+)\s*\}\})");
  std::set<std::string> names;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator();
       ++it) {
    names.insert((*it)[1].str());
  }
  return {names.begin(), names.end()};
}

void PromptSet::validate() const {
  if (templates.empty()) throw ValidationError("prompt set must contain at least one template");
  for (const auto& [name, tpl] : templates) {
    if (name.empty()) throw ValidationError("prompt template name must be non-empty");
    std::set<std::string> declared(tpl.variables.begin(), tpl.variables.end());
    if (declared.size() != tpl.variables.size())
      throw ValidationError("template '" + name + "' declares a variable twice");
    for (const auto& used : placeholders_in(tpl.text)) {
      if (!declared.count(used))
        throw ValidationError("template '" + name + "' uses undeclared placeholder '" + used +
                              "'");
    }
  }
}

void ModificationRecord::validate() const {
  if (description.empty()) throw ValidationError("modification description must be non-empty");
  if (description.size() > kMaxDescription)
    throw ValidationError("modification description exceeds 500 characters");
}

void Workflow::validate() const {
  if (id.empty()) throw ValidationError("workflow id must be non-empty");
  prompts.validate();
  if (code.script.empty()) throw ValidationError("workflow script must be non-empty");
  if (code.interpreter_hint.empty()) throw ValidationError("interpreter hint must be non-empty");
  if (parent_modification) parent_modification->validate();
}

std::string Workflow::content_digest() const {
  json j;
  j["prompts"] = prompts;
  j["code"] = code;
  return fnv1a_hex(canonical_dump(j));
}

std::string to_string(EntryContract) { return "stdin-json/stdout-jsonl"; }

EntryContract parse_entry_contract(const std::string& s) {
  if (s == "stdin-json/stdout-jsonl") return EntryContract::StdinJsonStdoutJsonl;
  throw ValidationError("unknown entry contract '" + s + "'");
}

std::string to_string(ModificationKind k) {
  switch (k) {
    case ModificationKind::PromptEdit: return "prompt-edit";
    case ModificationKind::CodeEdit: return "code-edit";
    case ModificationKind::Structural: return "structural";
    case ModificationKind::Mixed: return "mixed";
  }
  return "mixed";
}

ModificationKind parse_modification_kind(const std::string& s) {
  if (s == "prompt-edit") return ModificationKind::PromptEdit;
  if (s == "code-edit") return ModificationKind::CodeEdit;
  if (s == "structural") return ModificationKind::Structural;
  if (s == "mixed") return ModificationKind::Mixed;
  throw ValidationError("unknown modification kind '" + s + "'");
}

void to_json(json& j, const PromptSet& p) {
  j = json::object();
  for (const auto& [name, tpl] : p.templates) {
    j[name] = {{"text", tpl.text}, {"variables", tpl.variables}};
  }
}

// A template may be given as a bare string, in which case its placeholders
// are taken as its declared variables.
void from_json(const json& j, PromptSet& p) {
  if (!j.is_object()) throw ValidationError("prompts must be a JSON object");
  p.templates.clear();
  for (auto it = j.begin(); it != j.end(); ++it) {
    PromptTemplate tpl;
    if (it->is_string()) {
      tpl.text = it->get<std::string>();
      tpl.variables = placeholders_in(tpl.text);
    } else if (it->is_object()) {
      tpl.text = it->at("text").get<std::string>();
      tpl.variables = it->value("variables", std::vector<std::string>{});
    } else {
      throw ValidationError("prompt '" + it.key() + "' must be a string or object");
    }
    p.templates.emplace(it.key(), std::move(tpl));
  }
}

void to_json(json& j, const CodeArtifact& c) {
  j = {{"script", c.script},
       {"interpreter_hint", c.interpreter_hint},
       {"entry_contract", to_string(c.entry_contract)}};
}

void from_json(const json& j, CodeArtifact& c) {
  c.script = j.at("script").get<std::string>();
  c.interpreter_hint = j.value("interpreter_hint", std::string("python3"));
  c.entry_contract = parse_entry_contract(j.value("entry_contract", "stdin-json/stdout-jsonl"));
}

void to_json(json& j, const ModificationRecord& m) {
  j = {{"description", m.description}, {"kind", to_string(m.kind)}};
}

void from_json(const json& j, ModificationRecord& m) {
  m.description = j.at("description").get<std::string>();
  m.kind = parse_modification_kind(j.value("kind", "mixed"));
}

void to_json(json& j, const Workflow& w) {
  j = {{"id", w.id},
       {"prompts", w.prompts},
       {"code", w.code},
       {"created_at", w.created_at},
       {"parent_modification", w.parent_modification ? json(*w.parent_modification) : json()}};
}

void from_json(const json& j, Workflow& w) {
  w.id = j.at("id").get<std::string>();
  w.prompts = j.at("prompts").get<PromptSet>();
  w.code = j.at("code").get<CodeArtifact>();
  w.created_at = j.value("created_at", Timestamp{0});
  if (j.contains("parent_modification") && !j["parent_modification"].is_null()) {
    w.parent_modification = j["parent_modification"].get<ModificationRecord>();
  } else {
    w.parent_modification.reset();
  }
}

void write_workflow_bundle(const std::filesystem::path& dir, const Workflow& w) {
  std::filesystem::create_directories(dir);
  json meta = {{"id", w.id},
               {"interpreter_hint", w.code.interpreter_hint},
               {"entry_contract", to_string(w.code.entry_contract)},
               {"prompts", w.prompts},
               {"created_at", w.created_at}};
  if (w.parent_modification) meta["parent_modification"] = *w.parent_modification;
  {
    std::ofstream out(dir / "workflow.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "workflow.json").string());
    out << canonical_dump(meta) << '\n';
  }
  std::ofstream script(dir / "script", std::ios::binary | std::ios::trunc);
  if (!script) throw IoError("cannot write " + (dir / "script").string());
  script << w.code.script;
}

Workflow read_workflow_bundle(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "workflow.json", std::ios::binary);
  if (!meta_in) throw IoError("cannot read " + (dir / "workflow.json").string());
  std::stringstream meta_buf;
  meta_buf << meta_in.rdbuf();
  const auto meta = json::parse(meta_buf.str(), nullptr, false);
  if (meta.is_discarded()) throw ValidationError("workflow.json is not valid JSON");

  std::ifstream script_in(dir / "script", std::ios::binary);
  if (!script_in) throw IoError("cannot read " + (dir / "script").string());
  std::stringstream script_buf;
  script_buf << script_in.rdbuf();

  Workflow w;
  w.id = meta.at("id").get<std::string>();
  w.prompts = meta.at("prompts").get<PromptSet>();
  w.code.script = script_buf.str();
  w.code.interpreter_hint = meta.value("interpreter_hint", std::string("python3"));
  w.code.entry_contract =
      parse_entry_contract(meta.value("entry_contract", "stdin-json/stdout-jsonl"));
  w.created_at = meta.value("created_at", Timestamp{0});
  if (meta.contains("parent_modification"))
    w.parent_modification = meta["parent_modification"].get<ModificationRecord>();
  w.validate();
  return w;
}

}  // namespace wfs
