#pragma once

// Shared fixtures and brute-force oracles. The oracles work on the raw arc
// list only and never touch the snapshot indexes or the engine.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "ars/engine.hpp"
#include "ars/graph.hpp"

namespace ars::testing {

inline ObjectId O(std::uint32_t v) { return ObjectId{v}; }
inline KernelId J(std::uint32_t v) { return KernelId{v}; }
inline ClassId C(std::uint32_t v) { return ClassId{v}; }

inline std::vector<Arc> f1_arcs() {
  return {
      {J(1), O(1), C(1)}, {J(1), O(2), C(1)}, {J(2), O(1), C(1)}, {J(2), O(3), C(1)},
      {J(3), O(2), C(2)}, {J(3), O(3), C(2)}, {J(3), O(4), C(2)}, {J(4), O(5), C(1)},
  };
}

inline ClassTable f1_classes(std::uint32_t w1 = 1, std::uint32_t w2 = 1) {
  return {{C(1), KernelClass{C(1), "orders", ClassKind::Behavioural, w1}},
          {C(2), KernelClass{C(2), "categories", ClassKind::Static, w2}}};
}

/// Fixture F1: four kernels over five objects in two classes.
inline GraphSnapshot make_f1(std::uint32_t w1 = 1, std::uint32_t w2 = 1) {
  GraphBuilder b(f1_classes(w1, w2));
  for (const auto& a : f1_arcs()) b.add_arc(a.kernel, a.object, a.class_id);
  return b.freeze();
}

struct RawGraph {
  std::vector<Arc> arcs;  // duplicate-free, arbitrary order
  ClassTable classes;
};

/// Random bipartite graph with |J| <= max_kernels, |O| <= max_objects and
/// up to max_classes classes; weights drawn from 1..5.
inline RawGraph random_graph(std::mt19937_64& rng, std::uint32_t max_kernels = 50,
                             std::uint32_t max_objects = 30, std::uint32_t max_classes = 4) {
  auto uni = [&](std::uint32_t lo, std::uint32_t hi) {
    return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng);
  };
  RawGraph g;
  auto classes = uni(1, max_classes);
  for (std::uint32_t c = 1; c <= classes; ++c) {
    g.classes.emplace(C(c), KernelClass{C(c), "c" + std::to_string(c), ClassKind::Mixed, uni(1, 5)});
  }
  auto kernels = uni(1, max_kernels);
  auto objects = uni(1, max_objects);
  auto max_deg = uni(1, std::min<std::uint32_t>(objects, 8));
  for (std::uint32_t k = 1; k <= kernels; ++k) {
    auto cls = C(uni(1, classes));
    std::set<std::uint32_t> members;
    auto deg = uni(1, max_deg);
    while (members.size() < deg) members.insert(uni(1, objects));
    for (auto o : members) g.arcs.push_back({J(k * 3 + 7), O(o * 2 + 1), cls});
  }
  std::shuffle(g.arcs.begin(), g.arcs.end(), rng);
  return g;
}

inline GraphSnapshot freeze(const RawGraph& g) {
  GraphBuilder b(g.classes);
  for (const auto& a : g.arcs) b.add_arc(a.kernel, a.object, a.class_id);
  return b.freeze();
}

inline std::uint32_t oracle_weight(const ClassTable& classes, ClassId c, bool use_weights) {
  if (!use_weights) return 1;
  auto it = classes.find(c);
  return it == classes.end() ? 1 : it->second.weight;
}

/// Brute force: for each o outside the seeds, sum over kernels that touch any
/// seed and also touch o. Zero scores are dropped; ties by ascending id.
inline RecommendationVector oracle_recommend(const std::vector<Arc>& arcs,
                                             const ClassTable& classes,
                                             const std::vector<ObjectId>& seeds,
                                             bool use_weights) {
  std::set<ObjectId> seed_set(seeds.begin(), seeds.end());
  std::set<ObjectId> all_objects;
  for (const auto& a : arcs) all_objects.insert(a.object);

  RecommendationVector out;
  for (auto o : all_objects) {
    if (seed_set.contains(o)) continue;
    Score score = 0;
    for (const auto& a : arcs) {
      if (a.object != o) continue;
      bool pooled = false;
      for (const auto& b : arcs) {
        if (b.kernel == a.kernel && seed_set.contains(b.object)) pooled = true;
      }
      if (pooled) score += oracle_weight(classes, a.class_id, use_weights);
    }
    if (score > 0) out.push_back({o, score});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    return x.score > y.score;
  });
  return out;
}

/// Row set of
///   SELECT object, count() AS degree_in FROM graph_g
///   WHERE object <> m AND kernel IN (SELECT kernel FROM graph_g WHERE object = m)
///   GROUP BY object
inline std::map<ObjectId, Score> oracle_sql_rows(const std::vector<Arc>& arcs, ObjectId m) {
  std::set<KernelId> sub;
  for (const auto& a : arcs)
    if (a.object == m) sub.insert(a.kernel);
  std::map<ObjectId, Score> rows;
  for (const auto& a : arcs)
    if (a.object != m && sub.contains(a.kernel)) ++rows[a.object];
  return rows;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::uint64_t counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("ars-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path write(const std::string& name, const std::string& content) const {
    auto p = path / name;
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace ars::testing
