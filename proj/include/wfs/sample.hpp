#pragma once

#include <cstdint>
#include <vector>

#include "wfs/ids.hpp"
#include "wfs/json_util.hpp"

namespace wfs {

/// One generated data record. `payload` schema is defined by the task.
struct Sample {
  json payload;
  NodeId source_node;
  std::uint32_t index = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Throws BatchError when the batch is not exactly `n` samples with object
/// payloads and indices 0..n-1.
void validate_batch(const std::vector<Sample>& samples, std::size_t n);

void to_json(json& j, const Sample& s);
void from_json(const json& j, Sample& s);

}  // namespace wfs
