#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

#include "wfs/json_util.hpp"

namespace wfs {

/// Tree-assigned node identifier; monotonically increasing from 0 (root).
struct NodeId {
  std::uint64_t value = 0;

  constexpr NodeId() = default;
  constexpr explicit NodeId(std::uint64_t v) : value(v) {}
  friend constexpr auto operator<=>(NodeId, NodeId) = default;
  std::string str() const { return std::to_string(value); }
};

inline void to_json(json& j, NodeId id) { j = id.value; }
inline void from_json(const json& j, NodeId& id) { id.value = j.get<std::uint64_t>(); }

}  // namespace wfs

template <>
struct std::hash<wfs::NodeId> {
  std::size_t operator()(wfs::NodeId id) const noexcept { return std::hash<std::uint64_t>{}(id.value); }
};
