#include "wfs/metric.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "wfs/errors.hpp"

namespace wfs {

void MetricSet::validate(std::size_t cap) const {
  if (metrics.empty()) throw ValidationError("metric set must contain at least one metric");
  if (metrics.size() > cap)
    throw ValidationError("metric set has " + std::to_string(metrics.size()) +
                          " metrics, cap is " + std::to_string(cap));
  std::set<std::string> names;
  for (const auto& m : metrics) {
    if (m.name.empty() || m.definition.empty() || m.positive_exemplar.empty() ||
        m.negative_exemplar.empty()) {
      throw ValidationError("metric '" + m.name + "' has an empty field");
    }
    if (!names.insert(m.name).second)
      throw ValidationError("duplicate metric name '" + m.name + "'");
  }
}

std::string to_string(MetricProvenance p) {
  switch (p) {
    case MetricProvenance::Proposed: return "proposed";
    case MetricProvenance::Selected: return "selected";
    case MetricProvenance::Cached: return "cached";
  }
  return "proposed";
}

MetricProvenance parse_provenance(const std::string& s) {
  if (s == "proposed") return MetricProvenance::Proposed;
  if (s == "selected") return MetricProvenance::Selected;
  if (s == "cached") return MetricProvenance::Cached;
  throw ValidationError("unknown metric provenance '" + s + "'");
}

void to_json(json& j, const Metric& m) {
  j = {{"name", m.name},
       {"definition", m.definition},
       {"positive_exemplar", m.positive_exemplar},
       {"negative_exemplar", m.negative_exemplar}};
}

void from_json(const json& j, Metric& m) {
  m.name = j.at("name").get<std::string>();
  m.definition = j.at("definition").get<std::string>();
  m.positive_exemplar = j.at("positive_exemplar").get<std::string>();
  m.negative_exemplar = j.at("negative_exemplar").get<std::string>();
}

void to_json(json& j, const MetricSet& s) {
  j = {{"metrics", s.metrics}, {"iteration", s.iteration}, {"provenance", to_string(s.provenance)}};
}

void from_json(const json& j, MetricSet& s) {
  s.metrics = j.at("metrics").get<std::vector<Metric>>();
  s.iteration = j.value("iteration", 0);
  s.provenance = parse_provenance(j.value("provenance", "proposed"));
}

std::map<std::string, int> token_bag(const Metric& m) {
  std::map<std::string, int> bag;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      ++bag[word];
      word.clear();
    }
  };
  for (const std::string* field : {&m.name, &m.definition}) {
    for (unsigned char c : *field) {
      if (std::isalnum(c)) {
        word.push_back(static_cast<char>(std::tolower(c)));
      } else {
        flush();
      }
    }
    flush();
  }
  return bag;
}

double token_jaccard(const Metric& a, const Metric& b) {
  const auto ba = token_bag(a);
  const auto bb = token_bag(b);
  if (ba.empty() && bb.empty()) return 1.0;
  long inter = 0;
  long uni = 0;
  auto ia = ba.begin();
  auto ib = bb.begin();
  while (ia != ba.end() || ib != bb.end()) {
    if (ib == bb.end() || (ia != ba.end() && ia->first < ib->first)) {
      uni += ia->second;
      ++ia;
    } else if (ia == ba.end() || ib->first < ia->first) {
      uni += ib->second;
      ++ib;
    } else {
      inter += std::min(ia->second, ib->second);
      uni += std::max(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

using SimTable = std::vector<std::vector<double>>;

SimTable similarity_table(std::span<const Metric> a, std::span<const Metric> b,
                          const MetricSimilarity& sim) {
  SimTable t(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) t[i][j] = sim(a[i], b[j]);
  return t;
}

// Max total similarity over one-to-one partial matchings, by DP over the
// subset of used columns. Columns are the smaller side.
double max_matching_weight(const SimTable& t, std::size_t rows, std::size_t cols) {
  const bool transpose = cols > rows;
  const std::size_t r = transpose ? cols : rows;
  const std::size_t c = transpose ? rows : cols;
  if (c > 20) throw ValidationError("metric sets too large for exact pairing (max 20)");
  auto at = [&](std::size_t i, std::size_t j) { return transpose ? t[j][i] : t[i][j]; };

  const std::size_t states = std::size_t{1} << c;
  constexpr double kUnreached = -1.0;
  std::vector<double> cur(states, kUnreached), next(states, kUnreached);
  cur[0] = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    next = cur;  // row i left unmatched
    for (std::size_t mask = 0; mask < states; ++mask) {
      if (cur[mask] < 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t bit = std::size_t{1} << j;
        if (mask & bit) continue;
        next[mask | bit] = std::max(next[mask | bit], cur[mask] + at(i, j));
      }
    }
    std::swap(cur, next);
  }
  return *std::max_element(cur.begin(), cur.end());
}

double greedy_matching_weight(const SimTable& t, std::size_t rows, std::size_t cols) {
  std::vector<bool> used(cols, false);
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t best = cols;
    double best_sim = -1.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!used[j] && t[i][j] > best_sim) {
        best_sim = t[i][j];
        best = j;
      }
    }
    if (best == cols) break;  // b exhausted
    used[best] = true;
    total += best_sim;
  }
  return total;
}

}  // namespace

double directional_overlap(std::span<const Metric> a, std::span<const Metric> b, Pairing pairing,
                           const MetricSimilarity& sim) {
  if (a.empty() || b.empty()) throw ValidationError("semantic overlap requires non-empty sets");
  const auto t = similarity_table(a, b, sim);
  const double w = pairing == Pairing::Optimal ? max_matching_weight(t, a.size(), b.size())
                                               : greedy_matching_weight(t, a.size(), b.size());
  return w / static_cast<double>(a.size());
}

double semantic_overlap(const MetricSet& a, const MetricSet& b, Pairing pairing,
                        const MetricSimilarity& sim) {
  if (pairing == Pairing::Optimal) {
    // The optimal matching weight is direction-free. Taking the max over both
    // evaluation orders keeps the result bit-for-bit symmetric.
    if (a.metrics.empty() || b.metrics.empty())
      throw ValidationError("semantic overlap requires non-empty sets");
    const double w =
        std::max(max_matching_weight(similarity_table(a.metrics, b.metrics, sim),
                                     a.metrics.size(), b.metrics.size()),
                 max_matching_weight(similarity_table(b.metrics, a.metrics, sim),
                                     b.metrics.size(), a.metrics.size()));
    return 0.5 * (w / static_cast<double>(a.metrics.size()) +
                  w / static_cast<double>(b.metrics.size()));
  }
  const double ab = directional_overlap(a.metrics, b.metrics, pairing, sim);
  const double ba = directional_overlap(b.metrics, a.metrics, pairing, sim);
  return 0.5 * (ab + ba);
}

std::size_t select_consistent_index(std::span<const MetricSet> candidates, Pairing pairing,
                                    const MetricSimilarity& sim) {
  const std::size_t n = candidates.size();
  if (n < 2) throw ValidationError("self-consistency selection needs at least 2 candidates");
  std::vector<std::vector<double>> overlap(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      overlap[i][j] = overlap[j][i] = semantic_overlap(candidates[i], candidates[j], pairing, sim);

  std::size_t best = 0;
  double best_mean = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum += overlap[i][j];
    const double mean = sum / static_cast<double>(n - 1);
    if (mean > best_mean) {
      best_mean = mean;
      best = i;
    }
  }
  return best;
}

MetricSet select_consistent(std::span<const MetricSet> candidates, Pairing pairing,
                            const MetricSimilarity& sim) {
  MetricSet chosen = candidates[select_consistent_index(candidates, pairing, sim)];
  chosen.provenance = MetricProvenance::Selected;
  return chosen;
}

}  // namespace wfs
