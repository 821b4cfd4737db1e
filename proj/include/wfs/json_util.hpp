#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

namespace wfs {

using json = nlohmann::json;

/// Canonical text: sorted keys, no whitespace, floats fixed to 6 decimals.
/// Used for golden files and digests, never for data that must round-trip
/// exactly (rewards would lose precision).
std::string canonical_dump(const json& value);

/// Sorted keys, compact, shortest round-trip floats. What the run store writes.
inline std::string compact_dump(const json& value) { return value.dump(); }

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Pull a JSON value out of free-form model output. Accepts bare JSON,
/// ```json fenced blocks, or JSON embedded after prose. Returns nullopt
/// when nothing parses.
std::optional<json> extract_json(std::string_view text);

/// Replace every value stored under a volatile key (timestamps, latencies)
/// with a fixed placeholder. Comparison mode for determinism checks.
json normalize_volatile(const json& value);

/// Minimal JSON-schema subset validator: type, properties, required,
/// additionalProperties, items, minItems, maxItems, minLength, maxLength,
/// minimum, maximum, enum. Returns the first violation as "path: message".
std::optional<std::string> validate_schema(const json& value, const json& schema);

}  // namespace wfs
