#include "wfs/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace wfs {

namespace {

void canonical_into(const json& v, std::string& out) {
  switch (v.type()) {
    case json::value_t::object: {
      out += '{';
      bool first = true;
      // nlohmann's default object type is std::map, so iteration is sorted.
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += json(it.key()).dump();
        out += ':';
        canonical_into(it.value(), out);
      }
      out += '}';
      break;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        canonical_into(v[i], out);
      }
      out += ']';
      break;
    }
    case json::value_t::number_float: {
      const double d = v.get<double>();
      if (!std::isfinite(d)) {
        out += "null";
        break;
      }
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", d);
      // "-0.000000" and "0.000000" must collapse to one spelling.
      if (std::string_view(buf) == "-0.000000") {
        out += "0.000000";
      } else {
        out += buf;
      }
      break;
    }
    default:
      out += v.dump();
  }
}

bool is_volatile_key(const std::string& key) {
  static const std::set<std::string> keys = {"timestamp", "created_at", "submitted_at",
                                             "latency_ms"};
  return keys.count(key) > 0;
}

std::string type_name(const json& v) {
  switch (v.type()) {
    case json::value_t::object: return "object";
    case json::value_t::array: return "array";
    case json::value_t::string: return "string";
    case json::value_t::boolean: return "boolean";
    case json::value_t::null: return "null";
    case json::value_t::number_integer:
    case json::value_t::number_unsigned: return "integer";
    case json::value_t::number_float: return "number";
    default: return "unknown";
  }
}

bool type_matches(const json& v, const std::string& t) {
  if (t == "number") return v.is_number();
  if (t == "integer") {
    if (v.is_number_integer()) return true;
    if (v.is_number_float()) {
      const double d = v.get<double>();
      return std::isfinite(d) && std::floor(d) == d;
    }
    return false;
  }
  return type_name(v) == t;
}

std::optional<std::string> validate_at(const json& v, const json& s, const std::string& path) {
  if (!s.is_object()) return std::nullopt;

  if (auto t = s.find("type"); t != s.end()) {
    bool ok = false;
    if (t->is_string()) {
      ok = type_matches(v, t->get<std::string>());
    } else if (t->is_array()) {
      for (const auto& alt : *t) ok = ok || type_matches(v, alt.get<std::string>());
    }
    if (!ok) return path + ": expected " + t->dump() + ", got " + type_name(v);
  }

  if (auto e = s.find("enum"); e != s.end() && e->is_array()) {
    if (std::find(e->begin(), e->end(), v) == e->end())
      return path + ": value " + v.dump() + " not in " + e->dump();
  }

  if (v.is_number()) {
    const double d = v.get<double>();
    if (auto m = s.find("minimum"); m != s.end() && d < m->get<double>())
      return path + ": " + v.dump() + " is below minimum " + m->dump();
    if (auto m = s.find("maximum"); m != s.end() && d > m->get<double>())
      return path + ": " + v.dump() + " is above maximum " + m->dump();
  }

  if (v.is_string()) {
    const auto len = v.get_ref<const std::string&>().size();
    if (auto m = s.find("minLength"); m != s.end() && len < m->get<std::size_t>())
      return path + ": string shorter than " + m->dump();
    if (auto m = s.find("maxLength"); m != s.end() && len > m->get<std::size_t>())
      return path + ": string longer than " + m->dump();
  }

  if (v.is_array()) {
    if (auto m = s.find("minItems"); m != s.end() && v.size() < m->get<std::size_t>())
      return path + ": fewer than " + m->dump() + " items";
    if (auto m = s.find("maxItems"); m != s.end() && v.size() > m->get<std::size_t>())
      return path + ": more than " + m->dump() + " items";
    if (auto items = s.find("items"); items != s.end()) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (auto err = validate_at(v[i], *items, path + "[" + std::to_string(i) + "]")) return err;
      }
    }
  }

  if (v.is_object()) {
    if (auto req = s.find("required"); req != s.end()) {
      for (const auto& key : *req) {
        if (!v.contains(key.get<std::string>()))
          return path + ": missing required property \"" + key.get<std::string>() + "\"";
      }
    }
    const auto props = s.find("properties");
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string child = path + "." + it.key();
      if (props != s.end() && props->contains(it.key())) {
        if (auto err = validate_at(it.value(), (*props)[it.key()], child)) return err;
        continue;
      }
      if (auto extra = s.find("additionalProperties"); extra != s.end()) {
        if (extra->is_boolean() && !extra->get<bool>())
          return child + ": unexpected property";
        if (extra->is_object()) {
          if (auto err = validate_at(it.value(), *extra, child)) return err;
        }
      }
    }
  }
  return std::nullopt;
}

std::optional<json> try_parse(std::string_view text) {
  auto parsed = json::parse(text.begin(), text.end(), nullptr, false);
  if (parsed.is_discarded()) return std::nullopt;
  return parsed;
}

}  // namespace

std::string canonical_dump(const json& value) {
  std::string out;
  canonical_into(value, out);
  return out;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::optional<json> extract_json(std::string_view text) {
  if (auto whole = try_parse(text)) return whole;

  // ```json ... ``` (or plain ```) fence
  if (auto open = text.find("```"); open != std::string_view::npos) {
    auto body_start = text.find('\n', open);
    auto close = body_start == std::string_view::npos ? std::string_view::npos
                                                      : text.find("```", body_start);
    if (close != std::string_view::npos) {
      if (auto fenced = try_parse(text.substr(body_start + 1, close - body_start - 1)))
        return fenced;
    }
  }

  // Outermost {...} or [...] span.
  for (const auto& [open_ch, close_ch] : {std::pair{'{', '}'}, std::pair{'[', ']'}}) {
    const auto first = text.find(open_ch);
    const auto last = text.rfind(close_ch);
    if (first != std::string_view::npos && last != std::string_view::npos && last > first) {
      if (auto span = try_parse(text.substr(first, last - first + 1))) return span;
    }
  }
  return std::nullopt;
}

json normalize_volatile(const json& value) {
  if (value.is_object()) {
    json out = json::object();
    for (auto it = value.begin(); it != value.end(); ++it) {
      out[it.key()] = is_volatile_key(it.key()) ? json("<normalized>")
                                                : normalize_volatile(it.value());
    }
    return out;
  }
  if (value.is_array()) {
    json out = json::array();
    for (const auto& v : value) out.push_back(normalize_volatile(v));
    return out;
  }
  return value;
}

std::optional<std::string> validate_schema(const json& value, const json& schema) {
  return validate_at(value, schema, "$");
}

}  // namespace wfs
