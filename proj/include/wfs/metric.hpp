#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wfs/json_util.hpp"

namespace wfs {

/// One evaluation criterion with exemplars that anchor judge scoring.
struct Metric {
  std::string name;
  std::string definition;
  std::string positive_exemplar;
  std::string negative_exemplar;

  friend bool operator==(const Metric&, const Metric&) = default;
};

enum class MetricProvenance { Proposed, Selected, Cached };

struct MetricSet {
  static constexpr std::size_t kDefaultCap = 12;

  std::vector<Metric> metrics;
  int iteration = 0;
  MetricProvenance provenance = MetricProvenance::Proposed;

  /// Non-empty fields, unique names, 1 <= size <= cap.
  void validate(std::size_t cap = kDefaultCap) const;
  friend bool operator==(const MetricSet&, const MetricSet&) = default;
};

std::string to_string(MetricProvenance p);
MetricProvenance parse_provenance(const std::string& s);

void to_json(json& j, const Metric& m);
void from_json(const json& j, Metric& m);
void to_json(json& j, const MetricSet& s);
void from_json(const json& j, MetricSet& s);

/// Lowercased alphanumeric word multiset of name + definition.
std::map<std::string, int> token_bag(const Metric& m);

/// Multiset Jaccard: sum of min counts over sum of max counts. Two empty
/// bags are identical (1.0).
double token_jaccard(const Metric& a, const Metric& b);

using MetricSimilarity = std::function<double(const Metric&, const Metric&)>;

enum class Pairing {
  /// Maximum-weight one-to-one matching (exact).
  Optimal,
  /// Each metric of `a`, in order, takes its best still-unmatched partner.
  Greedy,
};

/// Sum of matched similarities divided by |a|; metrics of `a` left without
/// a partner contribute zero.
double directional_overlap(std::span<const Metric> a, std::span<const Metric> b,
                           Pairing pairing = Pairing::Optimal,
                           const MetricSimilarity& sim = token_jaccard);

/// Symmetric mean of both directional overlaps. In [0,1]; 1 for identical
/// sets; 0 when no vocabulary is shared.
double semantic_overlap(const MetricSet& a, const MetricSet& b,
                        Pairing pairing = Pairing::Optimal,
                        const MetricSimilarity& sim = token_jaccard);

/// Index of the candidate with the highest mean overlap against all the
/// others; ties go to the earliest index. Requires >= 2 candidates.
std::size_t select_consistent_index(std::span<const MetricSet> candidates,
                                    Pairing pairing = Pairing::Optimal,
                                    const MetricSimilarity& sim = token_jaccard);

MetricSet select_consistent(std::span<const MetricSet> candidates,
                            Pairing pairing = Pairing::Optimal,
                            const MetricSimilarity& sim = token_jaccard);

}  // namespace wfs
