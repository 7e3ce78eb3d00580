#pragma once

// Recommendation-session graph: a bipartite, directed unigraph whose arcs
// always run kernel -> object. The edge list is the canonical representation;
// the kernel->objects and object->kernels indexes are derived at freeze time.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ars/error.hpp"
#include "ars/ids.hpp"

namespace ars {

enum class ClassKind { Behavioural, Static, Mixed };

constexpr std::string_view to_string(ClassKind kind) noexcept {
  switch (kind) {
    case ClassKind::Behavioural: return "behavioural";
    case ClassKind::Static: return "static";
    case ClassKind::Mixed: return "mixed";
  }
  return "behavioural";
}

inline std::optional<ClassKind> parse_class_kind(std::string_view text) {
  if (text == "behavioural" || text == "behavioral") return ClassKind::Behavioural;
  if (text == "static") return ClassKind::Static;
  if (text == "mixed") return ClassKind::Mixed;
  return std::nullopt;
}

struct KernelClass {
  ClassId id;
  std::string name;
  ClassKind kind{ClassKind::Behavioural};
  std::uint32_t weight{1};

  friend bool operator==(const KernelClass&, const KernelClass&) = default;
};

using ClassTable = std::map<ClassId, KernelClass>;

struct Arc {
  KernelId kernel;
  ObjectId object;
  ClassId class_id;

  friend constexpr auto operator<=>(const Arc&, const Arc&) = default;
  friend constexpr bool operator==(const Arc&, const Arc&) = default;
};

struct Session {
  KernelId kernel;
  ClassId class_id;
  std::vector<ObjectId> objects;
  std::vector<Arc> arcs;
};

struct ClassStats {
  std::size_t kernel_count{0};
  std::size_t object_count{0};

  friend bool operator==(const ClassStats&, const ClassStats&) = default;
};

struct GraphStats {
  std::size_t count_objects{0};
  std::size_t count_kernels{0};
  std::size_t count_nodes{0};
  std::size_t count_arcs{0};
  std::size_t count_classes{0};
  std::map<ClassId, ClassStats> per_class;

  friend bool operator==(const GraphStats&, const GraphStats&) = default;
};

struct ValidationReport {
  bool ok{true};
  std::vector<KernelId> orphan_kernels;
  std::vector<ObjectId> orphan_objects;
  std::vector<ClassId> undeclared_classes;
};

/// Immutable, indexed edge-list store. Safe to share across threads.
///
/// The node universe is the set of arc endpoints plus any isolated nodes
/// declared at assembly time; isolated nodes are what validate() reports as
/// orphans.
class GraphSnapshot {
 public:
  GraphSnapshot() = default;

  /// Builds a snapshot from raw parts. Arcs may arrive in any order; they are
  /// sorted by (kernel, object). Duplicate pairs and kernels carrying two
  /// classes are rejected. Classes missing from `classes` are accepted here
  /// and surface in validate().
  static GraphSnapshot assemble(
      std::vector<Arc> arcs, ClassTable classes,
      std::vector<ObjectId> isolated_objects = {},
      std::vector<std::pair<KernelId, ClassId>> isolated_kernels = {}) {
    GraphSnapshot s;
    std::sort(arcs.begin(), arcs.end());
    for (std::size_t i = 1; i < arcs.size(); ++i) {
      if (arcs[i].kernel == arcs[i - 1].kernel &&
          arcs[i].object == arcs[i - 1].object) {
        std::ostringstream msg;
        msg << "duplicate arc " << arcs[i].kernel << "->" << arcs[i].object;
        throw Error(Errc::invalid_argument, msg.str());
      }
      if (arcs[i].kernel == arcs[i - 1].kernel &&
          arcs[i].class_id != arcs[i - 1].class_id) {
        throw conflict(arcs[i].kernel);
      }
    }

    // Kernel universe with one class per kernel.
    std::vector<std::pair<KernelId, ClassId>> kernels;
    kernels.reserve(isolated_kernels.size() + arcs.size());
    for (std::size_t i = 0; i < arcs.size(); ++i) {
      if (i == 0 || arcs[i].kernel != arcs[i - 1].kernel) {
        kernels.emplace_back(arcs[i].kernel, arcs[i].class_id);
      }
    }
    kernels.insert(kernels.end(), isolated_kernels.begin(),
                   isolated_kernels.end());
    std::sort(kernels.begin(), kernels.end());
    kernels.erase(std::unique(kernels.begin(), kernels.end()), kernels.end());
    for (std::size_t i = 1; i < kernels.size(); ++i) {
      if (kernels[i].first == kernels[i - 1].first) {
        throw conflict(kernels[i].first);
      }
    }

    s.kernel_ids_.reserve(kernels.size());
    s.kernel_class_.reserve(kernels.size());
    s.kernel_offsets_.reserve(kernels.size() + 1);
    std::size_t pos = 0;
    for (const auto& [kernel, cls] : kernels) {
      s.kernel_ids_.push_back(kernel);
      s.kernel_class_.push_back(cls);
      while (pos < arcs.size() && arcs[pos].kernel < kernel) ++pos;
      s.kernel_offsets_.push_back(pos);
    }
    s.kernel_offsets_.push_back(arcs.size());

    // Object universe and the object -> kernels index (counting sort; arcs
    // are kernel-ordered, so each object's kernel list comes out ascending).
    std::vector<ObjectId> objects = std::move(isolated_objects);
    objects.reserve(objects.size() + arcs.size());
    for (const auto& arc : arcs) objects.push_back(arc.object);
    std::sort(objects.begin(), objects.end());
    objects.erase(std::unique(objects.begin(), objects.end()), objects.end());
    s.object_ids_ = std::move(objects);

    std::vector<std::size_t> arc_object_index(arcs.size());
    s.object_offsets_.assign(s.object_ids_.size() + 1, 0);
    for (std::size_t i = 0; i < arcs.size(); ++i) {
      auto idx = s.index_of(arcs[i].object).value();
      arc_object_index[i] = idx;
      ++s.object_offsets_[idx + 1];
    }
    for (std::size_t i = 1; i < s.object_offsets_.size(); ++i) {
      s.object_offsets_[i] += s.object_offsets_[i - 1];
    }
    s.object_kernels_.resize(arcs.size());
    std::vector<std::size_t> cursor(s.object_offsets_.begin(),
                                    s.object_offsets_.end() - 1);
    for (std::size_t i = 0; i < arcs.size(); ++i) {
      s.object_kernels_[cursor[arc_object_index[i]]++] = arcs[i].kernel;
    }

    s.arcs_ = std::move(arcs);
    s.classes_ = std::move(classes);
    return s;
  }

  std::span<const Arc> arcs() const noexcept { return arcs_; }
  const ClassTable& classes() const noexcept { return classes_; }
  std::span<const ObjectId> objects() const noexcept { return object_ids_; }
  std::span<const KernelId> kernels() const noexcept { return kernel_ids_; }

  std::size_t object_count() const noexcept { return object_ids_.size(); }
  std::size_t kernel_count() const noexcept { return kernel_ids_.size(); }
  std::size_t node_count() const noexcept {
    return object_count() + kernel_count();
  }
  std::size_t arc_count() const noexcept { return arcs_.size(); }
  bool empty() const noexcept { return node_count() == 0; }

  bool contains(ObjectId o) const noexcept { return index_of(o).has_value(); }
  bool contains(KernelId k) const noexcept { return index_of(k).has_value(); }

  /// Kernels with an arc into `o`, ascending. Empty for unknown objects.
  std::span<const KernelId> kernels_of(ObjectId o) const noexcept {
    auto idx = index_of(o);
    if (!idx) return {};
    return std::span<const KernelId>(object_kernels_)
        .subspan(object_offsets_[*idx],
                 object_offsets_[*idx + 1] - object_offsets_[*idx]);
  }

  /// Outgoing arcs of `k`, ascending by object. Empty for unknown kernels.
  std::span<const Arc> arcs_of(KernelId k) const noexcept {
    auto idx = index_of(k);
    if (!idx) return {};
    return std::span<const Arc>(arcs_).subspan(
        kernel_offsets_[*idx], kernel_offsets_[*idx + 1] - kernel_offsets_[*idx]);
  }

  std::optional<ClassId> class_of(KernelId k) const noexcept {
    auto idx = index_of(k);
    if (!idx) return std::nullopt;
    return kernel_class_[*idx];
  }

  /// Weight of a class; undeclared classes weigh 1.
  std::uint32_t weight_of(ClassId c) const noexcept {
    auto it = classes_.find(c);
    return it == classes_.end() ? 1u : it->second.weight;
  }

  /// Copy of this snapshot with some class weights replaced.
  GraphSnapshot with_weights(const std::map<ClassId, std::uint32_t>& weights) const {
    GraphSnapshot copy = *this;
    for (const auto& [cls, w] : weights) {
      auto it = copy.classes_.find(cls);
      if (it == copy.classes_.end()) {
        std::ostringstream msg;
        msg << "class " << cls << " is not declared";
        throw Error(Errc::class_unknown, msg.str());
      }
      if (w == 0) throw Error(Errc::invalid_argument, "class weight must be >= 1");
      it->second.weight = w;
    }
    return copy;
  }

  friend bool operator==(const GraphSnapshot& a, const GraphSnapshot& b) {
    return a.arcs_ == b.arcs_ && a.classes_ == b.classes_ &&
           a.object_ids_ == b.object_ids_ && a.kernel_ids_ == b.kernel_ids_ &&
           a.kernel_class_ == b.kernel_class_;
  }

 private:
  static Error conflict(KernelId k) {
    std::ostringstream msg;
    msg << "kernel " << k << " appears under two classes";
    return Error(Errc::kernel_class_conflict, msg.str());
  }

  std::optional<std::size_t> index_of(ObjectId o) const noexcept {
    auto it = std::lower_bound(object_ids_.begin(), object_ids_.end(), o);
    if (it == object_ids_.end() || *it != o) return std::nullopt;
    return static_cast<std::size_t>(it - object_ids_.begin());
  }

  std::optional<std::size_t> index_of(KernelId k) const noexcept {
    auto it = std::lower_bound(kernel_ids_.begin(), kernel_ids_.end(), k);
    if (it == kernel_ids_.end() || *it != k) return std::nullopt;
    return static_cast<std::size_t>(it - kernel_ids_.begin());
  }

  std::vector<Arc> arcs_;
  ClassTable classes_;

  std::vector<KernelId> kernel_ids_;
  std::vector<ClassId> kernel_class_;
  std::vector<std::size_t> kernel_offsets_;  // into arcs_

  std::vector<ObjectId> object_ids_;
  std::vector<std::size_t> object_offsets_;  // into object_kernels_
  std::vector<KernelId> object_kernels_;
};

/// Single-writer accumulator that enforces the unigraph and one-class-per-
/// kernel rules as arcs arrive.
class GraphBuilder {
 public:
  GraphBuilder() = default;
  explicit GraphBuilder(const ClassTable& classes) {
    for (const auto& [id, cls] : classes) declare_class(cls);
  }

  void declare_class(KernelClass cls) {
    if (cls.weight == 0) {
      throw Error(Errc::invalid_argument, "class weight must be >= 1");
    }
    if (classes_.contains(cls.id)) {
      std::ostringstream msg;
      msg << "class " << cls.id << " declared twice";
      throw Error(Errc::invalid_argument, msg.str());
    }
    classes_.emplace(cls.id, std::move(cls));
  }

  /// Returns true iff the (kernel, object) pair was new.
  bool add_arc(KernelId kernel, ObjectId object, ClassId class_id) {
    bind_kernel(kernel, class_id);
    auto key = (static_cast<std::uint64_t>(kernel.value) << 32) | object.value;
    if (!seen_.insert(key).second) {
      ++dropped_;
      return false;
    }
    arcs_.push_back(Arc{kernel, object, class_id});
    return true;
  }

  /// Declares a node that may end up without arcs.
  void add_object(ObjectId object) { isolated_objects_.push_back(object); }
  void add_kernel(KernelId kernel, ClassId class_id) {
    bind_kernel(kernel, class_id);
  }

  void reserve(std::size_t arcs) {
    arcs_.reserve(arcs);
    seen_.reserve(arcs);
  }

  std::size_t arc_count() const noexcept { return arcs_.size(); }
  std::size_t duplicates_dropped() const noexcept { return dropped_; }
  const ClassTable& classes() const noexcept { return classes_; }

  /// Produces the indexed snapshot and resets the builder.
  GraphSnapshot freeze() {
    std::vector<std::pair<KernelId, ClassId>> kernels(kernel_class_.begin(),
                                                      kernel_class_.end());
    auto snapshot = GraphSnapshot::assemble(
        std::move(arcs_), std::move(classes_), std::move(isolated_objects_),
        std::move(kernels));
    *this = GraphBuilder{};
    return snapshot;
  }

 private:
  void bind_kernel(KernelId kernel, ClassId class_id) {
    if (!classes_.contains(class_id)) {
      std::ostringstream msg;
      msg << "class " << class_id << " is not declared";
      throw Error(Errc::class_unknown, msg.str());
    }
    auto [it, inserted] = kernel_class_.try_emplace(kernel, class_id);
    if (!inserted && it->second != class_id) {
      std::ostringstream msg;
      msg << "kernel " << kernel << " already bound to class " << it->second
          << ", got " << class_id;
      throw Error(Errc::kernel_class_conflict, msg.str());
    }
  }

  ClassTable classes_;
  std::vector<Arc> arcs_;
  std::unordered_set<std::uint64_t> seen_;
  std::unordered_map<KernelId, ClassId> kernel_class_;
  std::vector<ObjectId> isolated_objects_;
  std::size_t dropped_{0};
};

inline ValidationReport validate(const GraphSnapshot& s) {
  ValidationReport report;
  for (auto k : s.kernels()) {
    if (s.arcs_of(k).empty()) report.orphan_kernels.push_back(k);
  }
  for (auto o : s.objects()) {
    if (s.kernels_of(o).empty()) report.orphan_objects.push_back(o);
  }
  for (auto k : s.kernels()) {
    auto cls = *s.class_of(k);
    if (!s.classes().contains(cls)) report.undeclared_classes.push_back(cls);
  }
  std::sort(report.undeclared_classes.begin(), report.undeclared_classes.end());
  report.undeclared_classes.erase(std::unique(report.undeclared_classes.begin(),
                                              report.undeclared_classes.end()),
                                  report.undeclared_classes.end());
  report.ok = report.orphan_kernels.empty() && report.orphan_objects.empty() &&
              report.undeclared_classes.empty();
  return report;
}

inline std::vector<KernelId> kernels_of(const GraphSnapshot& s, ObjectId object) {
  auto span = s.kernels_of(object);
  return {span.begin(), span.end()};
}

inline Session session_of(const GraphSnapshot& s, KernelId kernel) {
  auto cls = s.class_of(kernel);
  if (!cls) {
    std::ostringstream msg;
    msg << "kernel " << kernel << " not found";
    throw Error(Errc::kernel_not_found, msg.str());
  }
  Session session{kernel, *cls, {}, {}};
  auto arcs = s.arcs_of(kernel);
  session.arcs.assign(arcs.begin(), arcs.end());
  session.objects.reserve(arcs.size());
  for (const auto& arc : arcs) session.objects.push_back(arc.object);
  return session;
}

inline GraphStats stats(const GraphSnapshot& s) {
  GraphStats out;
  out.count_objects = s.object_count();
  out.count_kernels = s.kernel_count();
  out.count_nodes = s.node_count();
  out.count_arcs = s.arc_count();
  out.count_classes = s.classes().size();
  for (const auto& [id, cls] : s.classes()) out.per_class[id];

  for (auto k : s.kernels()) ++out.per_class[*s.class_of(k)].kernel_count;

  // An object counts once for each class whose kernels reach it.
  std::map<ClassId, std::vector<ObjectId>> touched;
  for (const auto& arc : s.arcs()) touched[arc.class_id].push_back(arc.object);
  for (auto& [cls, objs] : touched) {
    std::sort(objs.begin(), objs.end());
    out.per_class[cls].object_count = static_cast<std::size_t>(
        std::unique(objs.begin(), objs.end()) - objs.begin());
  }
  return out;
}

}  // namespace ars
