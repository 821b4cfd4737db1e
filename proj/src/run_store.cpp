#include "wfs/run_store.hpp"

#include <chrono>
#include <map>
#include <sstream>

#include "wfs/errors.hpp"

namespace wfs {

namespace fs = std::filesystem;

namespace {

const std::map<EventKind, std::string>& kind_names() {
  static const std::map<EventKind, std::string> names = {
      {EventKind::Init, "init"},
      {EventKind::HitlFeedback, "hitl-feedback"},
      {EventKind::Selected, "selected"},
      {EventKind::Refined, "refined"},
      {EventKind::Executed, "executed"},
      {EventKind::Metrics, "metrics"},
      {EventKind::Scored, "scored"},
      {EventKind::Backpropagated, "backpropagated"},
      {EventKind::Converged, "converged"},
      {EventKind::Aborted, "aborted"},
      {EventKind::LlmCall, "llm-call"},
  };
  return names;
}

json object_schema(std::initializer_list<std::pair<const char*, const char*>> fields) {
  json required = json::array();
  json props = json::object();
  for (const auto& [name, type] : fields) {
    required.push_back(name);
    props[name] = {{"type", type}};
  }
  return {{"type", "object"}, {"required", required}, {"properties", props}};
}

const json& payload_schema(EventKind kind) {
  static const std::map<EventKind, json> schemas = {
      {EventKind::Init, object_schema({{"run_id", "string"}, {"root", "object"}})},
      {EventKind::HitlFeedback,
       object_schema({{"session", "string"}, {"round", "integer"}, {"feedback", "string"}})},
      {EventKind::Selected, object_schema({{"iteration", "integer"},
                                           {"node", "integer"},
                                           {"candidates", "array"},
                                           {"probabilities", "array"}})},
      {EventKind::Refined, object_schema({{"iteration", "integer"},
                                          {"parent", "integer"},
                                          {"node", "integer"},
                                          {"modification", "object"},
                                          {"workflow", "object"}})},
      {EventKind::Executed, object_schema({{"iteration", "integer"}, {"ok", "boolean"}})},
      {EventKind::Metrics, object_schema({{"iteration", "integer"}, {"pipeline", "object"}})},
      {EventKind::Scored, object_schema({{"iteration", "integer"},
                                         {"node", "integer"},
                                         {"reward", "number"},
                                         {"result", "object"}})},
      {EventKind::Backpropagated, object_schema({{"iteration", "integer"},
                                                 {"node", "integer"},
                                                 {"reward", "number"},
                                                 {"experience", "object"},
                                                 {"targets", "array"}})},
      {EventKind::Converged,
       object_schema({{"iteration", "integer"}, {"converged", "boolean"}})},
      {EventKind::Aborted, object_schema({{"scope", "string"}, {"reason", "string"}})},
      {EventKind::LlmCall,
       object_schema({{"role", "string"}, {"purpose", "string"}, {"digest", "string"}})},
  };
  return schemas.at(kind);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string to_string(EventKind k) { return kind_names().at(k); }

EventKind parse_event_kind(const std::string& s) {
  for (const auto& [k, name] : kind_names())
    if (name == s) return k;
  throw ValidationError("unknown event kind '" + s + "'");
}

void to_json(json& j, const RunEvent& e) {
  j = {{"seq", e.seq}, {"timestamp", e.timestamp}, {"kind", to_string(e.kind)}, {"payload", e.payload}};
}

void from_json(const json& j, RunEvent& e) {
  e.seq = j.at("seq").get<std::uint64_t>();
  e.timestamp = j.at("timestamp").get<Timestamp>();
  e.kind = parse_event_kind(j.at("kind").get<std::string>());
  e.payload = j.at("payload");
}

void validate_event_payload(EventKind kind, const json& payload) {
  if (auto err = validate_schema(payload, payload_schema(kind)))
    throw ValidationError("invalid '" + to_string(kind) + "' event payload: " + *err);
}

void write_file_atomic(const fs::path& file, const std::string& content) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::vector<RunEvent> read_event_log(const fs::path& events_file, bool allow_partial_tail) {
  std::vector<RunEvent> events;
  if (!fs::exists(events_file)) return events;
  const std::string text = read_file(events_file);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      if (allow_partial_tail) break;
      throw LoadError("event log ends with an incomplete line", pos);
    }
    const std::string line = text.substr(pos, nl - pos);
    const auto parsed = json::parse(line, nullptr, false);
    if (parsed.is_discarded()) throw LoadError("event log line is not JSON", pos);
    RunEvent e;
    try {
      e = parsed.get<RunEvent>();
    } catch (const std::exception& ex) {
      throw LoadError(std::string("malformed event: ") + ex.what(), pos);
    }
    if (e.seq != events.size() + 1)
      throw LoadError("event seq " + std::to_string(e.seq) + " breaks continuity (expected " +
                          std::to_string(events.size() + 1) + ")",
                      pos);
    events.push_back(std::move(e));
    pos = nl + 1;
  }
  return events;
}

RunStore::RunStore(fs::path dir, Mode mode) : dir_(std::move(dir)) {
  const fs::path events = dir_ / "events.jsonl";
  if (mode == Mode::Create) {
    if (fs::exists(events)) throw StateError("run directory " + dir_.string() + " already exists");
    fs::create_directories(dir_ / "metrics");
    fs::create_directories(dir_ / "export");
  } else {
    if (!fs::exists(dir_)) throw NotFoundError("no run directory " + dir_.string());
    seq_ = read_event_log(events).size();
  }
  log_.open(events, std::ios::binary | std::ios::app);
  if (!log_) throw IoError("cannot open " + events.string());
}

std::uint64_t RunStore::append_event(EventKind kind, json payload) {
  validate_event_payload(kind, payload);
  std::uint64_t seq = 0;
  {
    std::lock_guard lock(mutex_);
    seq = ++seq_;
    RunEvent e{seq, now_ms(), kind, std::move(payload)};
    log_ << json(e).dump() << '\n';
    log_.flush();
    if (!log_) throw IoError("failed to append to event log");
  }
  appended_.notify_all();
  return seq;
}

std::uint64_t RunStore::last_seq() const {
  std::lock_guard lock(mutex_);
  return seq_;
}

std::vector<RunEvent> RunStore::events_after(std::uint64_t after_seq, int wait_ms) const {
  if (wait_ms > 0) {
    std::unique_lock lock(mutex_);
    appended_.wait_for(lock, std::chrono::milliseconds(wait_ms), [&] { return seq_ > after_seq; });
  }
  std::vector<RunEvent> all;
  {
    std::lock_guard lock(mutex_);
    all = read_event_log(dir_ / "events.jsonl");
  }
  std::vector<RunEvent> out;
  for (auto& e : all)
    if (e.seq > after_seq) out.push_back(std::move(e));
  return out;
}

void RunStore::save_tree(const SearchTree& tree) const {
  write_file_atomic(dir_ / "tree.json", json(tree).dump() + "\n");
}

SearchTree load_tree_file(const fs::path& file) {
  const std::string text = read_file(file);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw LoadError(std::string("corrupt tree file: ") + e.what(), e.byte);
  }
  try {
    return j.get<SearchTree>();
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError(std::string("tree file does not describe a tree: ") + e.what(), 0);
  }
}

SearchTree RunStore::load_tree() const { return load_tree_file(dir_ / "tree.json"); }

bool RunStore::has_tree() const { return fs::exists(dir_ / "tree.json"); }

void RunStore::save_json(const std::string& name, const json& value) const {
  write_file_atomic(dir_ / name, value.dump(2) + "\n");
}

json RunStore::load_json(const std::string& name) const {
  const std::string text = read_file(dir_ / name);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw LoadError("corrupt " + name + ": " + e.what(), e.byte);
  }
}

bool RunStore::has_json(const std::string& name) const { return fs::exists(dir_ / name); }

void RunStore::save_metrics_snapshot(int iteration, const json& snapshot) const {
  char name[32];
  std::snprintf(name, sizeof name, "iter_%04d.json", iteration);
  fs::create_directories(dir_ / "metrics");
  write_file_atomic(dir_ / "metrics" / name, snapshot.dump(2) + "\n");
}

SearchTree replay_tree(const std::vector<RunEvent>& events) {
  struct Pending {
    NodeId parent;
    Workflow workflow;
    ModificationRecord modification;
    int iteration;
  };
  std::optional<SearchTree> tree;
  std::map<std::uint64_t, Pending> pending;

  auto need_tree = [&](const RunEvent& e) -> SearchTree& {
    if (!tree)
      throw ValidationError("event " + std::to_string(e.seq) + " (" + to_string(e.kind) +
                            ") precedes the init event");
    return *tree;
  };

  for (const auto& e : events) {
    const json& p = e.payload;
    switch (e.kind) {
      case EventKind::Init: {
        json root = p.at("root");
        tree = json{{"root", 0}, {"iteration_count", 0}, {"nodes", json::array({root})}}
                   .get<SearchTree>();
        break;
      }
      case EventKind::Selected:
        need_tree(e).set_iteration_count(p.at("iteration").get<int>());
        break;
      case EventKind::Refined:
        pending[p.at("node").get<std::uint64_t>()] =
            Pending{p.at("parent").get<NodeId>(), p.at("workflow").get<Workflow>(),
                    p.at("modification").get<ModificationRecord>(), p.at("iteration").get<int>()};
        break;
      case EventKind::Scored: {
        SearchTree& t = need_tree(e);
        const auto id = p.at("node").get<std::uint64_t>();
        const auto it = pending.find(id);
        if (it == pending.end())
          throw ValidationError("scored event for node " + std::to_string(id) +
                                " without a refined event");
        const NodeId added = t.add_child(it->second.parent, it->second.workflow,
                                         it->second.modification, it->second.iteration,
                                         p.value("created_at", Timestamp{0}));
        if (added.value != id)
          throw ValidationError("replayed node id " + added.str() + " != logged id " +
                                std::to_string(id));
        t.set_reward(added, p.at("reward").get<double>(), p.at("result").get<EvaluationResult>());
        pending.erase(it);
        break;
      }
      case EventKind::Backpropagated: {
        SearchTree& t = need_tree(e);
        const auto exp = p.at("experience").get<Experience>();
        for (const auto& target : p.at("targets")) t.append_experience(target.get<NodeId>(), exp);
        break;
      }
      case EventKind::Aborted:
        if (p.value("scope", std::string()) == "iteration") pending.clear();
        break;
      default:
        break;
    }
  }
  if (!tree) throw ValidationError("event log has no init event");
  return *tree;
}

DatasetExport export_dataset(const RunStore& store, const SearchTree& tree, NodeId node_id,
                             std::size_t count, const Executor& executor, RunParameters base) {
  if (count == 0) throw ValidationError("export count must be >= 1");
  const Node& node = tree.node(node_id);
  if (!node.evaluated()) throw StateError("node " + node_id.str() + " has not been evaluated");

  std::vector<Sample> collected;
  int consecutive_failures = 0;
  std::uint64_t batch = 0;
  while (collected.size() < count) {
    RunParameters params = base;
    params.batch = batch++;
    try {
      auto outcome = executor.execute(node.workflow, params, node_id);
      consecutive_failures = 0;
      for (auto& s : outcome.samples) {
        if (collected.size() == count) break;
        collected.push_back(std::move(s));
      }
    } catch (const Error&) {
      if (++consecutive_failures >= 3) throw;
    }
  }

  const fs::path out_dir = store.dir() / "export" / ("node-" + node_id.str());
  fs::create_directories(out_dir);
  std::string records;
  for (const auto& s : collected) {
    json rec = s.payload;
    rec["_meta"] = {{"node", node_id}, {"iteration", node.iteration}};
    records += rec.dump();
    records += '\n';
  }
  DatasetExport result;
  result.records_file = out_dir / "records.jsonl";
  write_file_atomic(result.records_file, records);
  result.manifest = {{"run_id", store.run_id()},
                     {"node_id", node_id},
                     {"workflow_digest", node.workflow.content_digest()},
                     {"count", collected.size()},
                     {"created_at", now_ms()}};
  write_file_atomic(out_dir / "manifest.json", canonical_dump(result.manifest) + "\n");
  return result;
}

}  // namespace wfs
