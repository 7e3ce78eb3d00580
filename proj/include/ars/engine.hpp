#pragma once

// Object-to-object recommendation over a GraphSnapshot.
//
// For an anchor object m the candidates are the objects reachable in two
// steps (m <- kernel -> o). A candidate's score is its in-degree inside that
// second neighbourhood, i.e. the number of kernels it shares with m, or with
// class weights enabled, the sum of the shared kernels' class weights.
// Output order is score descending, then object id ascending.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "ars/error.hpp"
#include "ars/graph.hpp"
#include "ars/ids.hpp"

namespace ars {

struct Subgraph {
  std::vector<KernelId> kernels;
  std::vector<ObjectId> objects;
  std::vector<Arc> arcs;
};

using ScoreMap = std::map<ObjectId, Score>;

struct Recommendation {
  ObjectId object;
  Score score{0};

  friend bool operator==(const Recommendation&, const Recommendation&) = default;
};

using RecommendationVector = std::vector<Recommendation>;

/// Non-empty list of distinct anchor objects, in visiting order.
class SeedSet {
 public:
  explicit SeedSet(std::vector<ObjectId> seeds) : seeds_(std::move(seeds)) {
    if (seeds_.empty()) throw Error(Errc::invalid_argument, "seed set is empty");
    auto sorted = seeds_;
    std::sort(sorted.begin(), sorted.end());
    auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end()) {
      std::ostringstream msg;
      msg << "seed " << *dup << " listed twice";
      throw Error(Errc::invalid_argument, msg.str());
    }
  }

  std::span<const ObjectId> items() const noexcept { return seeds_; }
  std::size_t size() const noexcept { return seeds_.size(); }
  bool contains(ObjectId o) const noexcept {
    return std::find(seeds_.begin(), seeds_.end(), o) != seeds_.end();
  }

 private:
  std::vector<ObjectId> seeds_;
};

namespace detail {

inline std::span<const KernelId> anchor_kernels(const GraphSnapshot& s, ObjectId m) {
  auto kernels = s.kernels_of(m);
  if (kernels.empty()) {
    std::ostringstream msg;
    msg << "object " << m << " not found";
    throw Error(Errc::object_not_found, msg.str());
  }
  return kernels;
}

// Sum of per-kernel contributions for every object reached from `pool`,
// skipping the excluded anchors. `pool` must be duplicate-free.
template <typename Excluded>
std::unordered_map<ObjectId, Score> accumulate(const GraphSnapshot& s,
                                               std::span<const KernelId> pool,
                                               const Excluded& excluded,
                                               bool use_weights) {
  std::unordered_map<ObjectId, Score> scores;
  for (auto k : pool) {
    auto arcs = s.arcs_of(k);
    Score contribution =
        use_weights && !arcs.empty() ? s.weight_of(arcs.front().class_id) : 1;
    for (const auto& arc : arcs) {
      if (excluded(arc.object)) continue;
      scores[arc.object] += contribution;
    }
  }
  return scores;
}

inline RecommendationVector rank(const std::unordered_map<ObjectId, Score>& scores,
                                 std::optional<std::size_t> limit) {
  RecommendationVector out;
  out.reserve(scores.size());
  for (const auto& [object, score] : scores) out.push_back({object, score});
  auto before = [](const Recommendation& a, const Recommendation& b) {
    return a.score != b.score ? a.score > b.score : a.object < b.object;
  };
  std::size_t keep = std::min(out.size(), limit.value_or(out.size()));
  if (keep < out.size()) {
    std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(keep),
                      out.end(), before);
    out.resize(keep);
  } else {
    std::sort(out.begin(), out.end(), before);
  }
  return out;
}

}  // namespace detail

/// The anchor, its kernels and the arcs between them.
inline Subgraph neighborhood_first(const GraphSnapshot& s, ObjectId m) {
  auto kernels = detail::anchor_kernels(s, m);
  Subgraph g;
  g.kernels.assign(kernels.begin(), kernels.end());
  g.objects = {m};
  g.arcs.reserve(kernels.size());
  for (auto k : kernels) g.arcs.push_back(Arc{k, m, *s.class_of(k)});
  return g;
}

/// The first neighbourhood extended by every object its kernels point at.
inline Subgraph neighborhood_second(const GraphSnapshot& s, ObjectId m) {
  auto kernels = detail::anchor_kernels(s, m);
  Subgraph g;
  g.kernels.assign(kernels.begin(), kernels.end());
  for (auto k : kernels) {
    auto arcs = s.arcs_of(k);
    g.arcs.insert(g.arcs.end(), arcs.begin(), arcs.end());
  }
  g.objects.reserve(g.arcs.size());
  for (const auto& arc : g.arcs) g.objects.push_back(arc.object);
  std::sort(g.objects.begin(), g.objects.end());
  g.objects.erase(std::unique(g.objects.begin(), g.objects.end()), g.objects.end());
  return g;
}

inline ScoreMap score_in_degrees(const GraphSnapshot& s, ObjectId m, bool use_weights) {
  auto kernels = detail::anchor_kernels(s, m);
  auto scores = detail::accumulate(
      s, kernels, [m](ObjectId o) { return o == m; }, use_weights);
  return ScoreMap(scores.begin(), scores.end());
}

/// Ranked recommendations for a single anchor. A limit of 0 yields an empty
/// vector; no limit returns every candidate.
inline RecommendationVector recommend(const GraphSnapshot& s, ObjectId m,
                                      std::optional<std::size_t> limit = std::nullopt,
                                      bool use_weights = false) {
  auto kernels = detail::anchor_kernels(s, m);
  auto scores = detail::accumulate(
      s, kernels, [m](ObjectId o) { return o == m; }, use_weights);
  return detail::rank(scores, limit);
}

/// Ranked recommendations for a path of visited objects. Kernels of all seeds
/// are pooled as a set, so a kernel shared by two seeds contributes once.
inline RecommendationVector recommend_for_path(
    const GraphSnapshot& s, const SeedSet& seeds,
    std::optional<std::size_t> limit = std::nullopt, bool use_weights = false) {
  std::vector<KernelId> pool;
  for (auto seed : seeds.items()) {
    auto kernels = detail::anchor_kernels(s, seed);
    pool.insert(pool.end(), kernels.begin(), kernels.end());
  }
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  auto scores = detail::accumulate(
      s, pool, [&seeds](ObjectId o) { return seeds.contains(o); }, use_weights);
  return detail::rank(scores, limit);
}

}  // namespace ars
