#include "wfs/sample.hpp"

#include "wfs/errors.hpp"

namespace wfs {

void validate_batch(const std::vector<Sample>& samples, std::size_t n) {
  if (samples.size() != n)
    throw BatchError("batch-size violation: expected " + std::to_string(n) + " samples, got " +
                     std::to_string(samples.size()));
  std::vector<bool> seen(n, false);
  for (const auto& s : samples) {
    if (!s.payload.is_object())
      throw BatchError("payload-shape violation: sample " + std::to_string(s.index) +
                       " payload is " + std::string(s.payload.type_name()) + ", not an object");
    if (s.index >= n)
      throw BatchError("sample index " + std::to_string(s.index) + " outside 0.." +
                       std::to_string(n - 1));
    if (seen[s.index]) throw BatchError("duplicate sample index " + std::to_string(s.index));
    seen[s.index] = true;
  }
}

void to_json(json& j, const Sample& s) {
  j = {{"payload", s.payload}, {"source_node", s.source_node}, {"index", s.index}};
}

void from_json(const json& j, Sample& s) {
  s.payload = j.at("payload");
  s.source_node = j.at("source_node").get<NodeId>();
  s.index = j.at("index").get<std::uint32_t>();
}

}  // namespace wfs
